"""Modularity checking, the syntactic satisfiability verdict, and
explicit finite model construction.

A modular constraint is satisfiable iff no element disequality has
joinable sides; a finite standard model is then read off the rewrite
system: indexes denote themselves plus one extra point, elements denote
their normal forms plus one token per normal-form array, and arrays
denote their read tables.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Hashable, Iterable, List, Optional, Sequence, Set, Tuple, Union

from .completion import Failed, Modular, run_completion
from .ordering import BADLY_ORIENTABLE, Precedence, orient
from .preprocess import (
    INCONSISTENT,
    GuessStream,
    apply_partition,
    eliminate_array_disequalities,
    flatten,
    saturate_reads,
)
from .rewrite import RewriteSystem, ground_overlaps, is_ground_irreducible
from .terms import (
    DIFF,
    RD,
    WR,
    Constraint,
    FreshGen,
    InternalInvariantError,
    Literal,
    Sort,
    Term,
    const,
    literal_key,
    mk_eq,
    split_write,
    term_key,
)

STAR = "*"  # the extra index point of the model construction

Value = Hashable


def _freeze_table(table: Dict[Value, Value]) -> Tuple:
    return tuple(sorted(table.items(), key=repr))


@dataclass
class Model:
    """A finite standard model: explicit tables, partial diff."""

    index_domain: List[Value]
    elem_domain: List[Value]
    valuation: Dict[str, Value]                    # constant name -> value
    array_tables: Dict[str, Dict[Value, Value]]    # array constant -> table
    diff_table: Dict[Tuple[Tuple, Tuple], Value] = field(default_factory=dict)

    def array_value(self, name: str) -> Dict[Value, Value]:
        return self.array_tables[name]

    def eval_term(self, t: Term) -> Value:
        if t.is_const():
            if t.sort is Sort.ARRAY:
                return _freeze_table(self.array_tables[t.sym])
            return self.valuation[t.sym]
        if t.sym == WR:
            a = dict(self.eval_term(t.args[0]))
            a[self.eval_term(t.args[1])] = self.eval_term(t.args[2])
            return _freeze_table(a)
        if t.sym == RD:
            a = dict(self.eval_term(t.args[0]))
            return a[self.eval_term(t.args[1])]
        if t.sym == DIFF:
            key = (self.eval_term(t.args[0]), self.eval_term(t.args[1]))
            if key not in self.diff_table:
                raise InternalInvariantError("diff undefined on %r" % (t,))
            return self.diff_table[key]
        raise InternalInvariantError("cannot evaluate %r" % (t,))

    def eval_literal(self, lit: Literal) -> bool:
        same = self.eval_term(lit.lhs) == self.eval_term(lit.rhs)
        return same if lit.positive else not same

    def check_literals(self, lits: Iterable[Literal]) -> List[Literal]:
        """Literals that are false in the model (empty means all hold)."""
        return [l for l in lits if not self.eval_literal(l)]

    def check_diff_axiom(self) -> bool:
        """diff witnesses a difference on every defined pair of distinct arrays."""
        for (va, vb), i in self.diff_table.items():
            if va != vb and dict(va)[i] == dict(vb)[i]:
                return False
        return True


# ---------------------------------------------------------------------------
# Modularity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NotModular:
    condition: str
    witness: str = ""


def is_modular(c: Constraint, prec: Precedence):
    """Check conditions (o)-(vi); returns True or NotModular(condition)."""
    if not c.is_flat():
        raise ValueError("modularity is defined for flat constraints only")
    for t in c.constants():
        prec.ensure(t)
    for lit in sorted(c.index_part, key=literal_key):
        if lit.positive and lit.lhs.is_const():
            return NotModular("o", repr(lit))
    for lit in sorted(c.main_part, key=literal_key):
        if not lit.positive and lit.lhs.sort is Sort.ARRAY:
            return NotModular("i", repr(lit))
    for lit in sorted(c.main_part, key=literal_key):
        if lit.positive and lit.lhs != lit.rhs and orient(lit, prec) is BADLY_ORIENTABLE:
            return NotModular("ii", repr(lit))
        if lit.positive and lit.lhs == lit.rhs and lit.lhs.sort is Sort.ARRAY:
            # a = wr(a, [], []) is badly orientable by definition
            return NotModular("ii", "reflexive %r" % (lit,))
    rs = RewriteSystem.of_constraint(c, prec)[0]
    if ground_overlaps(rs):
        return NotModular("iii", repr(ground_overlaps(rs)[0]))
    if not is_ground_irreducible(rs):
        return NotModular("iii", "reducible rule side")
    for lit in sorted(c.main_part, key=literal_key):
        if lit.positive and lit.rhs.sym == WR:
            base, idxs, elms = split_write(lit.rhs)
            for i, e in zip(idxs, elms):
                if rs.joinable(Term(RD, (base, i), Sort.ELEM), e):
                    return NotModular("iv", repr(lit))
    diffs = [l for l in sorted(c.index_part, key=literal_key) if l.positive and l.lhs.sym == DIFF]
    for l1, l2 in itertools.combinations(diffs, 2):
        if l1.rhs != l2.rhs:
            if rs.joinable(l1.lhs.args[0], l2.lhs.args[0]) and rs.joinable(l1.lhs.args[1], l2.lhs.args[1]):
                return NotModular("v", "%r / %r" % (l1, l2))
    for lit in diffs:
        a, b = lit.lhs.args
        i = lit.rhs
        if rs.joinable(Term(RD, (a, i), Sort.ELEM), Term(RD, (b, i), Sort.ELEM)):
            if not rs.joinable(a, b):
                return NotModular("vi", repr(lit))
    return True


@dataclass(frozen=True)
class UnsatWitness:
    lhs: Term
    rhs: Term


def decide_modular_sat(c: Constraint, prec: Precedence):
    """For a modular constraint: Unsat iff some element disequality has
    joinable sides, else Sat."""
    mod = is_modular(c, prec)
    if mod is not True:
        raise ValueError("decide_modular_sat requires a modular constraint: %s" % (mod,))
    rs = RewriteSystem.of_constraint(c, prec)[0]
    for lit in sorted(c.main_part, key=literal_key):
        if not lit.positive and lit.lhs.sort is Sort.ELEM and rs.joinable(lit.lhs, lit.rhs):
            return UnsatWitness(lit.lhs, lit.rhs)
    return True


# ---------------------------------------------------------------------------
# Model construction (for modular, satisfiable constraints)
# ---------------------------------------------------------------------------


def build_model(c: Constraint, prec: Precedence) -> Model:
    mod = is_modular(c, prec)
    if mod is not True:
        raise ValueError("build_model requires a modular constraint: %s" % (mod,))
    if decide_modular_sat(c, prec) is not True:
        raise ValueError("build_model requires a satisfiable constraint")

    # Further assumption: every (normal-form array, index) pair has a read
    # literal; extend with fresh elements where missing.
    rs = RewriteSystem.of_constraint(c, prec)[0]
    lits = set(c.index_part | c.main_part)
    arrays = c.constants_of_sort(Sort.ARRAY)
    indexes = c.constants_of_sort(Sort.INDEX)
    have = {(l.lhs.args[0], l.lhs.args[1]) for l in c.main_part if l.positive and l.lhs.sym == RD}
    used = {t.sym for t in c.constants()}
    n = 0
    for a in arrays:
        if rs.normalize(a) != a:
            continue
        for i in indexes:
            if (a, i) not in have:
                while "_m%d" % n in used:
                    n += 1
                e = const("_m%d" % n, Sort.ELEM)
                n += 1
                prec.ensure(e)
                lits.add(mk_eq(Term(RD, (a, i), Sort.ELEM), e))
    c = Constraint.from_literals(lits)
    rs = RewriteSystem.of_constraint(c, prec)[0]

    index_domain: List[Value] = [i.sym for i in indexes] + [STAR]
    nf_elems = sorted({rs.normalize(e).sym for e in c.constants_of_sort(Sort.ELEM)})
    nf_arrays = [a for a in arrays if rs.normalize(a) == a]
    elem_domain: List[Value] = nf_elems + ["#%s" % a.sym for a in nf_arrays]

    valuation: Dict[str, Value] = {}
    for i in indexes:
        valuation[i.sym] = i.sym
    for e in c.constants_of_sort(Sort.ELEM):
        valuation[e.sym] = rs.normalize(e).sym

    tables: Dict[str, Dict[Value, Value]] = {}
    for a in nf_arrays:
        table: Dict[Value, Value] = {}
        for i in indexes:
            v = rs.normalize(Term(RD, (a, i), Sort.ELEM))
            if not (v.is_const() and v.sort is Sort.ELEM):
                raise InternalInvariantError("rd(%s,%s) has no element normal form" % (a.sym, i.sym))
            table[i.sym] = v.sym
        table[STAR] = "#%s" % a.sym
        tables[a.sym] = table
    for a in arrays:
        if a.sym in tables:
            continue
        base, idxs, elms = split_write(rs.normalize(a))
        table = dict(tables[base.sym])
        for i, e in zip(idxs, elms):
            table[i.sym] = rs.normalize(e).sym
        tables[a.sym] = table

    model = Model(index_domain, elem_domain, valuation, tables)

    # diff: literal-constrained pairs first, then any axiom-respecting value
    # on the remaining pairs of definable arrays (least differing index).
    for lit in sorted(c.index_part, key=literal_key):
        if lit.positive and lit.lhs.sym == DIFF:
            a, b = lit.lhs.args
            key = (_freeze_table(tables[a.sym]), _freeze_table(tables[b.sym]))
            model.diff_table[key] = valuation[lit.rhs.sym]
    ordered_indexes = sorted(indexes, key=lambda t: prec.key(t.sym))
    for a in arrays:
        for b in arrays:
            ta, tb = _freeze_table(tables[a.sym]), _freeze_table(tables[b.sym])
            if (ta, tb) in model.diff_table:
                continue
            if ta == tb:
                model.diff_table[(ta, tb)] = index_domain[0]
                continue
            da, db_ = dict(ta), dict(tb)
            point = next((i.sym for i in ordered_indexes if da[i.sym] != db_[i.sym]), STAR)
            model.diff_table[(ta, tb)] = point

    bad = model.check_literals(c.literals())
    if bad:
        raise InternalInvariantError("model construction left literals false: %r" % (bad,))
    if not model.check_diff_axiom():
        raise InternalInvariantError("model construction broke the diff axiom")
    return model


# ---------------------------------------------------------------------------
# The full decision procedure
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SatResult:
    model: Model
    substitution: Dict[str, str]
    constraint: Constraint
    trace: Tuple = ()

    def eval_raw(self, lits: Iterable[Literal]) -> List[Literal]:
        """Evaluate literals over the original constants (before any
        index merging) in the model; returns the false ones."""

        def chase(name: str) -> str:
            seen = set()
            while name in self.substitution and name not in seen:
                seen.add(name)
                name = self.substitution[name]
            return name

        def translate(t: Term) -> Term:
            if t.is_const():
                return const(chase(t.sym), t.sort)
            return Term(t.sym, tuple(translate(a) for a in t.args), t.sort)

        out = []
        for lit in lits:
            moved = Literal(lit.positive, translate(lit.lhs), translate(lit.rhs))
            if not self.model.eval_literal(moved):
                out.append(lit)
        return out


UNSAT = "unsat"


@dataclass
class Branch:
    constraint: Constraint
    substitution: Dict[str, str]


def preprocess_branches(lits: Iterable[Literal], prec: Precedence, gen: FreshGen,
                        seed: Optional[int] = None) -> List[Branch]:
    """Flatten, eliminate array disequalities, and expand the partition
    guesses; each branch is read-saturated."""
    c = Constraint.from_literals(lits)
    for t in c.constants():
        prec.ensure(t)
    c = flatten(c, gen)
    for t in c.constants():
        prec.ensure(t)
    c = eliminate_array_disequalities(c, gen)
    for t in c.constants():
        prec.ensure(t)
    branches: List[Branch] = []
    for choice in GuessStream(c.constants_of_sort(Sort.INDEX), seed):
        got = apply_partition(c, choice, prec)
        if got is INCONSISTENT:
            continue
        subst = {}
        rep = choice.representative(prec)
        for t, r in rep.items():
            if t != r:
                subst[t.sym] = r.sym
        branches.append(Branch(saturate_reads(got, gen.fork()), subst))
    return branches


def decide_sat(lits: Iterable[Literal], seed: Optional[int] = None,
               max_branches: int = 1, assert_measure: bool = True):
    """Decide satisfiability of an arbitrary ground constraint.

    Returns a SatResult carrying a verified model, or UNSAT when every
    partition guess fails.  ``max_branches`` > 1 explores partition
    guesses concurrently (first Sat wins; the reported model is then not
    deterministic).
    """
    lits = list(lits)
    prec = Precedence()
    gen = FreshGen()
    branches = preprocess_branches(lits, prec, gen, seed)

    def attempt(branch: Branch):
        local_prec = prec.copy()
        got = run_completion(branch.constraint, local_prec, assert_measure=assert_measure)
        if isinstance(got, Failed):
            return None
        verdict = decide_modular_sat(got.constraint, local_prec)
        if verdict is not True:
            raise InternalInvariantError("completion left a joinable disequality: %r" % (verdict,))
        model = build_model(got.constraint, local_prec)
        return SatResult(model, branch.substitution, got.constraint, got.trace)

    if max_branches > 1:
        with ThreadPoolExecutor(max_workers=max_branches) as pool:
            futures = [pool.submit(attempt, b) for b in branches]
            result = None
            for fut in as_completed(futures):
                got = fut.result()
                if got is not None:
                    result = got
                    break
            if result is None:
                return UNSAT
    else:
        result = None
        for b in branches:
            got = attempt(b)
            if got is not None:
                result = got
                break
        if result is None:
            return UNSAT

    bad = result.eval_raw(lits)
    if bad:
        raise InternalInvariantError("sat model fails input literals: %r" % (bad,))
    return result
