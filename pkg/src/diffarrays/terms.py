"""Sorts, terms, literals, constraints and formulas for arrays with diff.

The signature has three interpreted function symbols over the sorts
ARRAY / INDEX / ELEM:

    rd   : ARRAY x INDEX         -> ELEM
    wr   : ARRAY x INDEX x ELEM  -> ARRAY
    diff : ARRAY x ARRAY         -> INDEX

Everything else is a free constant.  Terms are immutable; a term is
either a constant (no arguments) or an application of one of the three
interpreted symbols.  The single array-sorted variable used by the
non-ground rewrite schemas is a Term with ``is_var=True`` and never
occurs in stored constraints.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, Iterable, Iterator, List, Optional, Sequence, Set, Tuple


class Sort(Enum):
    ARRAY = "Array"
    INDEX = "Index"
    ELEM = "Elem"


RD = "rd"
WR = "wr"
DIFF = "diff"
INTERPRETED = (RD, WR, DIFF)

_RESULT_SORT = {RD: Sort.ELEM, WR: Sort.ARRAY, DIFF: Sort.INDEX}
_ARG_SORTS = {
    RD: (Sort.ARRAY, Sort.INDEX),
    WR: (Sort.ARRAY, Sort.INDEX, Sort.ELEM),
    DIFF: (Sort.ARRAY, Sort.ARRAY),
}


class SortError(ValueError):
    """Ill-sorted term or literal construction."""


class StructuralError(ValueError):
    """Operation applied to a value of the wrong shape."""


class InternalInvariantError(AssertionError):
    """An engine invariant was violated; indicates a bug, not bad input."""


@dataclass(frozen=True)
class Term:
    sym: str
    args: Tuple["Term", ...] = ()
    sort: Sort = Sort.ELEM
    is_var: bool = False

    def is_const(self) -> bool:
        return not self.args and not self.is_var

    def __repr__(self) -> str:
        if not self.args:
            return self.sym
        return "(%s %s)" % (self.sym, " ".join(repr(a) for a in self.args))


def const(name: str, sort: Sort) -> Term:
    return Term(name, (), sort)


def var_array(name: str = "x") -> Term:
    return Term(name, (), Sort.ARRAY, is_var=True)


def app(sym: str, *args: Term) -> Term:
    if sym not in INTERPRETED:
        raise SortError("unknown function symbol %r" % sym)
    want = _ARG_SORTS[sym]
    if len(args) != len(want):
        raise SortError("%s expects %d arguments, got %d" % (sym, len(want), len(args)))
    for a, s in zip(args, want):
        if a.sort is not s:
            raise SortError("%s argument %r has sort %s, expected %s" % (sym, a, a.sort, s))
    return Term(sym, tuple(args), _RESULT_SORT[sym])


def rd(a: Term, i: Term) -> Term:
    return app(RD, a, i)


def wr(a: Term, i: Term, e: Term) -> Term:
    return app(WR, a, i, e)


def diff(a: Term, b: Term) -> Term:
    return app(DIFF, a, b)


def mk_nested_write(base: Term, indices: Sequence[Term], elems: Sequence[Term]) -> Term:
    """Right-nested write wr(wr(...wr(base,i1,e1)...),in,en); empty lists give base."""
    if len(indices) != len(elems):
        raise StructuralError("index/element lists of different length")
    t = base
    for i, e in zip(indices, elems):
        t = wr(t, i, e)
    return t


def split_write(t: Term) -> Tuple[Term, List[Term], List[Term]]:
    """Inverse of mk_nested_write: (base, indices, elems) with lists inside-out."""
    idxs: List[Term] = []
    elms: List[Term] = []
    while t.sym == WR:
        idxs.append(t.args[1])
        elms.append(t.args[2])
        t = t.args[0]
    idxs.reverse()
    elms.reverse()
    return t, idxs, elms


def subterms(t: Term) -> Iterator[Term]:
    yield t
    for a in t.args:
        yield from subterms(a)


def constants_of_term(t: Term) -> Set[Term]:
    return {s for s in subterms(t) if s.is_const()}


def term_key(t: Term):
    """Structural sort key; total, deterministic, independent of hashing."""
    return (t.sym, tuple(term_key(a) for a in t.args))


@dataclass(frozen=True)
class Literal:
    positive: bool
    lhs: Term
    rhs: Term

    def negate(self) -> "Literal":
        return Literal(not self.positive, self.lhs, self.rhs)

    def terms(self) -> Tuple[Term, Term]:
        return (self.lhs, self.rhs)

    def constants(self) -> Set[Term]:
        return constants_of_term(self.lhs) | constants_of_term(self.rhs)

    def __repr__(self) -> str:
        op = "=" if self.positive else "!="
        return "%r %s %r" % (self.lhs, op, self.rhs)


def literal_key(lit: Literal):
    return (lit.positive, term_key(lit.lhs), term_key(lit.rhs))


def _oriented(s: Term, t: Term) -> Tuple[Term, Term]:
    # Canonical storage orientation, used for set-dedup only (the logical
    # orientation is owned by the term ordering): function application on
    # the natural side, and for constant pairs the lexicographically
    # smaller name second.
    if s.is_const() and not t.is_const():
        if t.sym == WR:
            return s, t
        return t, s
    if not s.is_const() and t.is_const():
        if s.sym == WR:
            return t, s
        return s, t
    if s.is_const() and t.is_const():
        return (s, t) if s.sym >= t.sym else (t, s)
    return (s, t) if term_key(s) >= term_key(t) else (t, s)


def mk_eq(s: Term, t: Term) -> Literal:
    if s.sort is not t.sort:
        raise SortError("equality between sorts %s and %s" % (s.sort, t.sort))
    lhs, rhs = _oriented(s, t)
    return Literal(True, lhs, rhs)


def mk_neq(s: Term, t: Term) -> Literal:
    if s.sort is not t.sort:
        raise SortError("disequality between sorts %s and %s" % (s.sort, t.sort))
    lhs, rhs = _oriented(s, t)
    return Literal(False, lhs, rhs)


def mk_literal(positive: bool, s: Term, t: Term) -> Literal:
    return mk_eq(s, t) if positive else mk_neq(s, t)


class LiteralClass(Enum):
    INDEX_PART = "index"
    MAIN_PART = "main"
    NOT_FLAT = "not-flat"


def classify_literal(lit: Literal) -> LiteralClass:
    """Classify a literal into the index part, main part, or not-flat.

    Flat shapes: a=wr(b,I,E) over constants (a=b counts as the empty
    write), rd(a,i)=e, diff(a,b)=i, alpha=beta, alpha!=beta.  The index
    part holds i=j, i!=j and diff(a,b)=i; everything else flat is main.
    """
    lhs, rhs = lit.lhs, lit.rhs
    if lhs.is_const() and rhs.is_const():
        return LiteralClass.INDEX_PART if lhs.sort is Sort.INDEX else LiteralClass.MAIN_PART
    if not lit.positive:
        return LiteralClass.NOT_FLAT  # flat negative literals are constant pairs only
    if lhs.is_const() and rhs.sym == WR:
        base, idxs, elms = split_write(rhs)
        if base.is_const() and all(i.is_const() for i in idxs) and all(e.is_const() for e in elms):
            return LiteralClass.MAIN_PART
        return LiteralClass.NOT_FLAT
    if rhs.is_const() and lhs.sym == RD:
        if all(a.is_const() for a in lhs.args):
            return LiteralClass.MAIN_PART
        return LiteralClass.NOT_FLAT
    if rhs.is_const() and lhs.sym == DIFF:
        if all(a.is_const() for a in lhs.args):
            return LiteralClass.INDEX_PART
        return LiteralClass.NOT_FLAT
    return LiteralClass.NOT_FLAT


@dataclass(frozen=True)
class Constraint:
    """A two-part constraint: index part and main part, as literal sets."""

    index_part: FrozenSet[Literal] = frozenset()
    main_part: FrozenSet[Literal] = frozenset()

    @staticmethod
    def from_literals(lits: Iterable[Literal]) -> "Constraint":
        idx: Set[Literal] = set()
        main: Set[Literal] = set()
        for lit in lits:
            if classify_literal(lit) is LiteralClass.INDEX_PART:
                idx.add(lit)
            else:
                main.add(lit)
        return Constraint(frozenset(idx), frozenset(main))

    def literals(self) -> List[Literal]:
        return sorted(self.index_part | self.main_part, key=literal_key)

    def is_flat(self) -> bool:
        return all(classify_literal(l) is not LiteralClass.NOT_FLAT for l in self.literals())

    def constants(self) -> Set[Term]:
        out: Set[Term] = set()
        for lit in self.index_part | self.main_part:
            out |= lit.constants()
        return out

    def constants_of_sort(self, sort: Sort) -> List[Term]:
        return sorted((c for c in self.constants() if c.sort is sort), key=term_key)

    def __repr__(self) -> str:
        return "<I: %s | M: %s>" % (sorted(map(repr, self.index_part)), sorted(map(repr, self.main_part)))


# ---------------------------------------------------------------------------
# Quantifier-free formulas (boolean combinations of ground literals)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Formula:
    pass


@dataclass(frozen=True)
class TrueF(Formula):
    def __repr__(self) -> str:
        return "true"


@dataclass(frozen=True)
class FalseF(Formula):
    def __repr__(self) -> str:
        return "false"


@dataclass(frozen=True)
class Atom(Formula):
    lit: Literal

    def __repr__(self) -> str:
        return repr(self.lit)


@dataclass(frozen=True)
class Not(Formula):
    arg: Formula

    def __repr__(self) -> str:
        return "(not %r)" % (self.arg,)


@dataclass(frozen=True)
class And(Formula):
    items: Tuple[Formula, ...]

    def __repr__(self) -> str:
        return "(and %s)" % " ".join(map(repr, self.items))


@dataclass(frozen=True)
class Or(Formula):
    items: Tuple[Formula, ...]

    def __repr__(self) -> str:
        return "(or %s)" % " ".join(map(repr, self.items))


TRUE = TrueF()
FALSE = FalseF()


def atom(lit: Literal) -> Formula:
    return Atom(lit)


def and_(items: Sequence[Formula]) -> Formula:
    flat: List[Formula] = []
    for f in items:
        if isinstance(f, TrueF):
            continue
        if isinstance(f, FalseF):
            return FALSE
        if isinstance(f, And):
            flat.extend(f.items)
        else:
            flat.append(f)
    if not flat:
        return TRUE
    if len(flat) == 1:
        return flat[0]
    return And(tuple(flat))


def or_(items: Sequence[Formula]) -> Formula:
    flat: List[Formula] = []
    for f in items:
        if isinstance(f, FalseF):
            continue
        if isinstance(f, TrueF):
            return TRUE
        if isinstance(f, Or):
            flat.extend(f.items)
        else:
            flat.append(f)
    if not flat:
        return FALSE
    if len(flat) == 1:
        return flat[0]
    return Or(tuple(flat))


def not_(f: Formula) -> Formula:
    if isinstance(f, TrueF):
        return FALSE
    if isinstance(f, FalseF):
        return TRUE
    if isinstance(f, Not):
        return f.arg
    if isinstance(f, Atom):
        return Atom(f.lit.negate())
    return Not(f)


def symbols_of(f: Formula) -> Set[Term]:
    """Exact set of free constants occurring in a formula."""
    if isinstance(f, (TrueF, FalseF)):
        return set()
    if isinstance(f, Atom):
        return f.lit.constants()
    if isinstance(f, Not):
        return symbols_of(f.arg)
    if isinstance(f, (And, Or)):
        out: Set[Term] = set()
        for g in f.items:
            out |= symbols_of(g)
        return out
    raise StructuralError("unknown formula node %r" % (f,))


def substitute_term(t: Term, name: str, repl: Term) -> Term:
    if t.is_const():
        return repl if t.sym == name else t
    if not t.args:
        return t
    return Term(t.sym, tuple(substitute_term(a, name, repl) for a in t.args), t.sort, t.is_var)


def substitute_formula(f: Formula, name: str, repl: Term) -> Formula:
    if isinstance(f, (TrueF, FalseF)):
        return f
    if isinstance(f, Atom):
        lit = f.lit
        return Atom(mk_literal(lit.positive,
                               substitute_term(lit.lhs, name, repl),
                               substitute_term(lit.rhs, name, repl)))
    if isinstance(f, Not):
        return not_(substitute_formula(f.arg, name, repl))
    if isinstance(f, And):
        return and_([substitute_formula(g, name, repl) for g in f.items])
    if isinstance(f, Or):
        return or_([substitute_formula(g, name, repl) for g in f.items])
    raise StructuralError("unknown formula node %r" % (f,))


def to_nnf(f: Formula, negate: bool = False) -> Formula:
    if isinstance(f, TrueF):
        return FALSE if negate else TRUE
    if isinstance(f, FalseF):
        return TRUE if negate else FALSE
    if isinstance(f, Atom):
        return Atom(f.lit.negate()) if negate else f
    if isinstance(f, Not):
        return to_nnf(f.arg, not negate)
    if isinstance(f, And):
        items = [to_nnf(g, negate) for g in f.items]
        return or_(items) if negate else and_(items)
    if isinstance(f, Or):
        items = [to_nnf(g, negate) for g in f.items]
        return and_(items) if negate else or_(items)
    raise StructuralError("unknown formula node %r" % (f,))


def dnf_branches(f: Formula) -> List[List[Literal]]:
    """Disjunctive branches of an NNF-able formula, as literal lists.

    An unsatisfiable branch set is []; a single empty branch means the
    formula is trivially true.
    """
    g = to_nnf(f)

    def go(h: Formula) -> List[List[Literal]]:
        if isinstance(h, TrueF):
            return [[]]
        if isinstance(h, FalseF):
            return []
        if isinstance(h, Atom):
            return [[h.lit]]
        if isinstance(h, Or):
            out: List[List[Literal]] = []
            for item in h.items:
                out.extend(go(item))
            return out
        if isinstance(h, And):
            branches: List[List[Literal]] = [[]]
            for item in h.items:
                branches = [b + c for b in branches for c in go(item)]
            return branches
        raise StructuralError("non-NNF node %r" % (h,))

    return go(g)


def simplify_formula(f: Formula) -> Formula:
    """Cheap syntactic simplification: flattening, unit/dup elimination, absorption."""
    if isinstance(f, (TrueF, FalseF, Atom)):
        return f
    if isinstance(f, Not):
        return not_(simplify_formula(f.arg))
    if isinstance(f, (And, Or)):
        mk = and_ if isinstance(f, And) else or_
        items = [simplify_formula(g) for g in f.items]
        flat = mk(items)
        if not isinstance(flat, (And, Or)):
            return flat
        seen = []
        keys = set()
        for g in flat.items:
            k = repr(g)
            if k not in keys:
                keys.add(k)
                seen.append(g)
        # absorption: drop a conjunction/disjunction that contains another item
        def parts(g: Formula) -> Set[str]:
            inner = g.items if isinstance(g, (And, Or)) else (g,)
            return {repr(x) for x in inner}

        kept: List[Formula] = []
        for g in seen:
            absorbed = False
            for h in seen:
                if h is g:
                    continue
                if isinstance(g, (And, Or)) and type(g) is not type(flat) and parts(h) < parts(g):
                    absorbed = True
                    break
            if not absorbed:
                kept.append(g)
        return mk(kept)
    raise StructuralError("unknown formula node %r" % (f,))


# ---------------------------------------------------------------------------
# Fresh symbol generation
# ---------------------------------------------------------------------------

FRESH_PREFIX = "_"
_SORT_LETTER = {Sort.ARRAY: "a", Sort.INDEX: "i", Sort.ELEM: "e"}


class FreshGen:
    """Per-sort fresh constant generator.

    Names use a reserved leading underscore, which the parser rejects,
    so fresh symbols can never collide with parsed ones.  ``fork``
    returns a child generator whose name space is disjoint from the
    parent's and from every other fork's.
    """

    def __init__(self, stream: str = "") -> None:
        self._stream = stream
        self._counters: Dict[Sort, int] = {s: 0 for s in Sort}
        self._forks = 0

    def fresh(self, sort: Sort, hint: str = "") -> Term:
        n = self._counters[sort]
        self._counters[sort] += 1
        name = "%s%s%s%s%d" % (FRESH_PREFIX, self._stream, hint, _SORT_LETTER[sort], n)
        return const(name, sort)

    def fork(self) -> "FreshGen":
        child = FreshGen("%sf%d_" % (self._stream, self._forks))
        self._forks += 1
        return child
