"""Independent brute-force satisfiability oracle and interpolant validator.

The oracle searches for a finite standard model by exhaustive
backtracking over

  1. index constant values,
  2. values of diff subterms (with the difference axiom enforced by
     branching: either the arrays differ at the chosen point or their
     tables are pointwise equal),
  3. witness points for negative array literals,
  4. element constant values,
  5. array table cells, unit-propagated where constraints force them.

Index and element domain values carry no structure, so the search only
tries the least unused value as a first use of a fresh value; models
are closed under domain permutations, which preserves completeness
relative to the bounds.  The search is sound for Sat at any bounds and
complete at the bounds of the finite-model construction, computed by
``lemma_bounds`` from the preprocessed constraint.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple, Union

from .ordering import Precedence
from .preprocess import apply_partition, eliminate_array_disequalities, enumerate_partitions, flatten, saturate_reads
from .satcheck import Model, UNSAT, decide_sat
from .terms import (
    DIFF,
    RD,
    WR,
    Constraint,
    Formula,
    FreshGen,
    Literal,
    Sort,
    Term,
    dnf_branches,
    literal_key,
    not_,
    symbols_of,
    term_key,
)


class OracleConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Bounds:
    n_index: int
    n_elem: int

    @staticmethod
    def lemma(lits: Iterable[Literal]) -> "Bounds":
        """Bounds from the finite-model construction: indexes of the
        preprocessed constraint plus the extra point; elements plus one
        token per array."""
        prec = Precedence()
        gen = FreshGen("o_")
        c = Constraint.from_literals(lits)
        for t in c.constants():
            prec.ensure(t)
        c = flatten(c, gen)
        for t in c.constants():
            prec.ensure(t)
        c = eliminate_array_disequalities(c, gen)
        for t in c.constants():
            prec.ensure(t)
        # the all-distinct partition maximizes the constant counts
        idxs = c.constants_of_sort(Sort.INDEX)
        if idxs:
            got = apply_partition(c, enumerate_partitions(idxs)[0], prec)
            if isinstance(got, Constraint):
                c = got
        c = saturate_reads(c, gen)
        n_index = len(c.constants_of_sort(Sort.INDEX)) + 1
        n_elem = len(c.constants_of_sort(Sort.ELEM)) + len(c.constants_of_sort(Sort.ARRAY))
        return Bounds(max(1, n_index), max(1, n_elem))


class NoModelWithinBounds:
    def __repr__(self) -> str:
        return "NoModelWithinBounds"


NO_MODEL = NoModelWithinBounds()


# ---------------------------------------------------------------------------
# Cell-level constraint compilation
# ---------------------------------------------------------------------------

# A cell expression is either a concrete element value or ("cell", array, p).
CellExpr = Union[int, str, Tuple[str, str, int]]


def _diff_subterms(lits: Sequence[Literal]) -> List[Term]:
    """Distinct diff subterms, innermost first."""
    seen: Dict[Tuple, Term] = {}

    def walk(t: Term) -> None:
        for a in t.args:
            walk(a)
        if t.sym == DIFF:
            seen.setdefault(term_key(t), t)

    for lit in lits:
        walk(lit.lhs)
        walk(lit.rhs)

    def depth(t: Term) -> int:
        return 1 + max((depth(a) for a in t.args), default=0)

    return sorted(seen.values(), key=lambda t: (depth(t), term_key(t)))


class _Search:
    def __init__(self, lits: List[Literal], bounds: Bounds) -> None:
        self.lits = lits
        self.n_index = bounds.n_index
        self.n_elem = bounds.n_elem
        consts = sorted({c for l in lits for c in l.constants()}, key=term_key)
        self.idx_consts = [c.sym for c in consts if c.sort is Sort.INDEX]
        self.elem_consts = [c.sym for c in consts if c.sort is Sort.ELEM]
        self.arr_consts = [c.sym for c in consts if c.sort is Sort.ARRAY]
        self.diff_terms = _diff_subterms(lits)
        self.ival: Dict[str, int] = {}
        self.dval: Dict[Tuple, int] = {}  # term_key(diff term) -> index value
        self.eval_: Dict[str, int] = {}
        self.cells: Dict[Tuple[str, int], int] = {}
        self.imax = 0  # least-number frontier per sort
        self.emax = 0

    # -- term evaluation over partial assignments ----------------------

    def index_value(self, t: Term) -> int:
        if t.is_const():
            return self.ival[t.sym]
        if t.sym == DIFF:
            return self.dval[term_key(t)]
        raise OracleConfigError("not an index term: %r" % (t,))

    def cell_expr(self, t: Term, p: int) -> CellExpr:
        """The element stored by array term t at index value p."""
        if t.is_const():
            return ("cell", t.sym, p)
        if t.sym == WR:
            if self.index_value(t.args[1]) == p:
                return self.elem_expr(t.args[2])
            return self.cell_expr(t.args[0], p)
        raise OracleConfigError("not an array term: %r" % (t,))

    def elem_expr(self, t: Term) -> CellExpr:
        if t.is_const():
            return ("elem", t.sym)  # resolved late so stage order is free
        if t.sym == RD:
            return self.cell_expr(t.args[0], self.index_value(t.args[1]))
        raise OracleConfigError("not an element term: %r" % (t,))

    def resolve(self, e: CellExpr) -> Optional[int]:
        if isinstance(e, int):
            return e
        if e[0] == "elem":
            return self.eval_.get(e[1])
        return self.cells.get((e[1], e[2]))

    # -- constraints ----------------------------------------------------

    def index_literals_ok(self, with_diff: bool) -> bool:
        for lit in self.lits:
            if lit.lhs.sort is not Sort.INDEX:
                continue
            has_diff = lit.lhs.sym == DIFF or lit.rhs.sym == DIFF
            if has_diff and not with_diff:
                continue
            try:
                same = self.index_value(lit.lhs) == self.index_value(lit.rhs)
            except KeyError:
                continue  # not yet decidable
            if same != lit.positive:
                return False
        return True

    def compile_cell_constraints(self) -> Tuple[List[Tuple[bool, CellExpr, CellExpr]], List[Tuple[Term, Term]]]:
        """Element/array literals as (positive, lhs, rhs) cell-expression
        pairs; negative array literals are returned apart for witness
        branching."""
        out: List[Tuple[bool, CellExpr, CellExpr]] = []
        neg_arrays: List[Tuple[Term, Term]] = []
        for lit in self.lits:
            sort = lit.lhs.sort
            if sort is Sort.INDEX:
                continue
            if sort is Sort.ELEM:
                out.append((lit.positive, self.elem_expr(lit.lhs), self.elem_expr(lit.rhs)))
            else:
                if lit.positive:
                    for p in range(self.n_index):
                        out.append((True, self.cell_expr(lit.lhs, p), self.cell_expr(lit.rhs, p)))
                else:
                    neg_arrays.append((lit.lhs, lit.rhs))
        return out, neg_arrays

    # -- search ----------------------------------------------------------

    def run(self) -> Optional[Model]:
        return self._assign_indexes(0)

    def _lnh_values(self, frontier: int, n: int) -> range:
        return range(min(frontier + 1, n))

    def _assign_indexes(self, k: int) -> Optional[Model]:
        if k == len(self.idx_consts):
            if not self.index_literals_ok(with_diff=False):
                return None
            return self._assign_diffs(0, [])
        name = self.idx_consts[k]
        saved = self.imax
        for v in self._lnh_values(self.imax, self.n_index):
            self.ival[name] = v
            self.imax = max(saved, v + 1)
            if self.index_literals_ok(with_diff=False):
                got = self._assign_indexes(k + 1)
                if got is not None:
                    return got
        del self.ival[name]
        self.imax = saved
        return None

    def _assign_diffs(self, k: int, axiom_constraints: List[Tuple[bool, Term, Term, int]]):
        if k == len(self.diff_terms):
            if not self.index_literals_ok(with_diff=True):
                return None
            return self._witness_stage(axiom_constraints)
        t = self.diff_terms[k]
        key = term_key(t)
        saved = self.imax
        pinned: Optional[int] = None
        for lit in self.lits:
            if lit.positive and term_key(lit.lhs) == key and lit.rhs.is_const():
                pinned = self.ival.get(lit.rhs.sym)
                break
        values = [pinned] if pinned is not None else list(self._lnh_values(self.imax, self.n_index))
        for v in values:
            self.dval[key] = v
            self.imax = max(saved, v + 1)
            # axiom (Skolemized extensionality): either the two arrays
            # differ at v, or they are pointwise equal
            for differs in (True, False):
                got = self._assign_diffs(
                    k + 1, axiom_constraints + [(differs, t.args[0], t.args[1], v)])
                if got is not None:
                    return got
        self.dval.pop(key, None)
        self.imax = saved
        return None

    def _witness_stage(self, axiom_constraints):
        compiled, neg_arrays = self.compile_cell_constraints()
        extra: List[Tuple[bool, CellExpr, CellExpr]] = []
        for differs, s, t, v in axiom_constraints:
            if differs:
                extra.append((False, self.cell_expr(s, v), self.cell_expr(t, v)))
            else:
                for p in range(self.n_index):
                    extra.append((True, self.cell_expr(s, p), self.cell_expr(t, p)))
        # diff is a function of the argument arrays: when two diff
        # subterms got different values, their argument pairs must differ
        # (otherwise the default cell fill could collapse them)
        for t1, t2 in itertools.combinations(self.diff_terms, 2):
            if self.dval[term_key(t1)] != self.dval[term_key(t2)]:
                neg_arrays.append(("either", (t1.args[0], t2.args[0]), (t1.args[1], t2.args[1])))
        return self._assign_witnesses(neg_arrays, compiled + extra)

    def _assign_witnesses(self, neg_arrays, constraints):
        """Branch over witness points for constraints demanding that two
        arrays (or one of two argument pairs) differ somewhere."""
        if not neg_arrays:
            return self._elem_stage(constraints)
        head, rest = neg_arrays[0], neg_arrays[1:]
        pairs = [head[1], head[2]] if head[0] == "either" else [head]
        saved = self.imax
        for s, t in pairs:
            for w in self._lnh_values(saved, self.n_index):
                self.imax = max(saved, w + 1)
                got = self._assign_witnesses(
                    rest, constraints + [(False, self.cell_expr(s, w), self.cell_expr(t, w))])
                if got is not None:
                    return got
        self.imax = saved
        return None

    def _check(self, constraints) -> bool:
        for positive, le, re_ in constraints:
            lv = self.resolve(le)
            rv = self.resolve(re_)
            if lv is None or rv is None:
                continue
            if (lv == rv) != positive:
                return False
        return True

    def _elem_stage(self, constraints):
        return self._assign_elems(0, constraints)

    def _assign_elems(self, k: int, constraints):
        if not self._check(constraints):
            return None
        if k == len(self.elem_consts):
            cells = sorted({e[1:] for _, le, re_ in constraints for e in (le, re_)
                            if isinstance(e, tuple) and e[0] == "cell"})
            return self._assign_cells(cells, 0, constraints)
        name = self.elem_consts[k]
        saved = self.emax
        for v in self._lnh_values(self.emax, self.n_elem):
            self.eval_[name] = v
            self.emax = max(saved, v + 1)
            if self._check(constraints):
                got = self._assign_elems(k + 1, constraints)
                if got is not None:
                    return got
        del self.eval_[name]
        self.emax = saved
        return None

    def _assign_cells(self, cells, k, constraints):
        if k == len(cells):
            return self._finish(constraints)
        cell = cells[k]
        # unit propagation: an equality with one side known forces the cell
        forced: Optional[int] = None
        for positive, le, re_ in constraints:
            if not positive:
                continue
            for mine, other in ((le, re_), (re_, le)):
                if isinstance(mine, tuple) and mine[0] == "cell" and mine[1:] == cell:
                    v = self.resolve(other)
                    if v is not None:
                        forced = v
                        break
            if forced is not None:
                break
        saved = self.emax
        values = [forced] if forced is not None else list(self._lnh_values(self.emax, self.n_elem))
        for v in values:
            self.cells[cell] = v
            self.emax = max(saved, v + 1)
            if self._check(constraints):
                got = self._assign_cells(cells, k + 1, constraints)
                if got is not None:
                    return got
        self.cells.pop(cell, None)
        self.emax = saved
        return None

    def _finish(self, constraints) -> Optional[Model]:
        # default-fill untouched cells; they are observed by no constraint
        filled = []
        for a in self.arr_consts:
            for p in range(self.n_index):
                if (a, p) not in self.cells:
                    self.cells[(a, p)] = 0
                    filled.append((a, p))

        def fail() -> None:
            for cell in filled:
                del self.cells[cell]

        model = self._to_model()
        # guards only: the branching above makes these unreachable
        seen: Dict[Tuple, int] = {}
        for t in self.diff_terms:
            key = (model.eval_term(t.args[0]), model.eval_term(t.args[1]))
            v = self.dval[term_key(t)]
            if seen.setdefault(key, v) != v:
                fail()
                return None
        for lit in self.lits:
            if not model.eval_literal(lit):
                fail()
                return None
        if not model.check_diff_axiom():
            fail()
            return None
        return model

    def _to_model(self) -> Model:
        tables = {a: {p: self.cells[(a, p)] for p in range(self.n_index)}
                  for a in self.arr_consts}
        valuation: Dict[str, int] = {}
        valuation.update(self.ival)
        valuation.update(self.eval_)
        model = Model(list(range(self.n_index)), list(range(self.n_elem)), valuation, tables)
        for t in self.diff_terms:
            key = (model.eval_term(t.args[0]), model.eval_term(t.args[1]))
            model.diff_table[key] = self.dval[term_key(t)]
        return model


def brute_force_sat(lits: Iterable[Literal], bounds: Bounds):
    """Exhaustive model search within the bounds.  Returns a Model or
    NO_MODEL.  Sound for Sat at any bounds; complete at lemma bounds."""
    if bounds.n_index < 1 or bounds.n_elem < 1:
        raise OracleConfigError("domain bounds must be positive: %r" % (bounds,))
    lits = sorted(set(lits), key=literal_key)
    got = _Search(lits, bounds).run()
    return got if got is not None else NO_MODEL


# ---------------------------------------------------------------------------
# Interpolant validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Invalid:
    reason: str


VALID = "valid"

_ORACLE_LIT_LIMIT = 14


def _branch_unsat(base: List[Literal], branch: List[Literal], cross_check: bool) -> Optional[str]:
    lits = base + branch
    got = decide_sat(lits)
    if got is not UNSAT:
        return "satisfiable: %s" % sorted(map(repr, lits))
    if cross_check and len(lits) <= _ORACLE_LIT_LIMIT:
        oracle_got = brute_force_sat(lits, Bounds.lemma(lits))
        if oracle_got is not NO_MODEL:
            return "oracle found a model for: %s" % sorted(map(repr, lits))
    return None


def validate_interpolant(a_lits: Iterable[Literal], b_lits: Iterable[Literal],
                         interpolant: Formula, cross_check: bool = True):
    """Check the three interpolant clauses: A entails it, it is jointly
    unsatisfiable with B, and it only uses shared constants."""
    a_lits = list(a_lits)
    b_lits = list(b_lits)
    a_syms = {c.sym for l in a_lits for c in l.constants()}
    b_syms = {c.sym for l in b_lits for c in l.constants()}
    shared = a_syms & b_syms
    extra = {c.sym for c in symbols_of(interpolant)} - shared
    if extra:
        return Invalid("non-shared constants in interpolant: %s" % sorted(extra))
    for branch in dnf_branches(not_(interpolant)):
        reason = _branch_unsat(a_lits, branch, cross_check)
        if reason is not None:
            return Invalid("A and (not I): " + reason)
    for branch in dnf_branches(interpolant):
        reason = _branch_unsat(b_lits, branch, cross_check)
        if reason is not None:
            return Invalid("B and I: " + reason)
    return VALID
