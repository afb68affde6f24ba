"""Ground rewrite system with the four fixed non-ground schemas.

Ground rules come from orienting the positive main-part literals of a
constraint and have one of three shapes:

    a -> wr(b, I, E)        (array definition; I may be empty, giving a -> b)
    rd(a, i) -> e           (read definition)
    e -> d                  (element definition)

The schemas operate on concrete index/element constants and an
implicit array position:

    S_RD_OTHER : rd(wr(x,i,e), j) -> rd(x,j)            for i != j
    S_RD_SAME  : rd(wr(x,i,e), i) -> e
    S_WR_SWAP  : wr(wr(x,i,e), j, d) -> wr(wr(x,j,d), i, e)   for i > j
    S_WR_SAME  : wr(wr(x,i,e), i, d) -> wr(x,i,d)

Schema instantiation is by pattern matching on concrete terms rather
than by materializing instances over the index/element pools.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

from .ordering import BADLY_ORIENTABLE, Precedence, Rule, lpo_gt, orient
from .terms import (
    DIFF,
    RD,
    WR,
    Constraint,
    InternalInvariantError,
    Literal,
    Sort,
    Term,
    literal_key,
    mk_nested_write,
    split_write,
    term_key,
    var_array,
)

_X = var_array()


@dataclass(frozen=True)
class SchemaRule:
    """One of the four fixed non-ground rules, over the array variable x.

    Index/element positions range over the constants occurring in the
    constraint; ``proviso`` states the side condition on them.
    """

    name: str
    pattern: str
    proviso: str


SCHEMA_RULES: Tuple[SchemaRule, ...] = (
    SchemaRule("S_RD_OTHER", "rd(wr(x,i,e),j) -> rd(x,j)", "i != j"),
    SchemaRule("S_RD_SAME", "rd(wr(x,i,e),i) -> e", ""),
    SchemaRule("S_WR_SWAP", "wr(wr(x,i,e),j,d) -> wr(wr(x,j,d),i,e)", "i > j"),
    SchemaRule("S_WR_SAME", "wr(wr(x,i,e),i,d) -> wr(x,i,d)", ""),
)

_STEP_LIMIT = 1_000_000


class RuleShape(Enum):
    ARRAY_DEF = "array-def"
    READ_DEF = "read-def"
    ELEM_DEF = "elem-def"


def rule_shape(rule: Rule) -> RuleShape:
    if rule.lhs.sym == RD:
        return RuleShape.READ_DEF
    if rule.lhs.sort is Sort.ARRAY:
        return RuleShape.ARRAY_DEF
    return RuleShape.ELEM_DEF


class RewriteSystem:
    """Immutable view: ground rules + schemas + precedence handle."""

    def __init__(self, rules: Iterable[Rule], prec: Precedence) -> None:
        self.rules: List[Rule] = sorted(rules, key=lambda r: (term_key(r.lhs), term_key(r.rhs)))
        self.prec = prec
        self._by_lhs: Dict[Term, List[Term]] = {}
        for r in self.rules:
            self._by_lhs.setdefault(r.lhs, []).append(r.rhs)
        self._nf: Dict[Term, Term] = {}

    @staticmethod
    def of_constraint(c: Constraint, prec: Precedence) -> Tuple["RewriteSystem", List[Literal]]:
        """Derive the oriented rule view; badly orientable literals are returned apart."""
        rules: List[Rule] = []
        badly: List[Literal] = []
        for lit in sorted(c.main_part, key=literal_key):
            if not lit.positive or lit.lhs == lit.rhs:
                continue
            r = orient(lit, prec)
            if r is BADLY_ORIENTABLE:
                badly.append(lit)
            else:
                rules.append(r)
        return RewriteSystem(rules, prec), badly

    # -- single steps -------------------------------------------------

    def _ground_step(self, t: Term, skip: Optional[Rule] = None) -> Optional[Term]:
        rhss = self._by_lhs.get(t)
        if not rhss:
            return None
        for rhs in rhss:
            if skip is not None and skip.lhs == t and skip.rhs == rhs:
                continue
            return rhs
        return None

    def _schema_step(self, t: Term) -> Optional[Term]:
        if t.sym == RD and t.args[0].sym == WR:
            inner, i, e = t.args[0].args
            j = t.args[1]
            if i == j:
                return e  # S_RD_SAME
            if i.is_const() and j.is_const():
                return Term(RD, (inner, j), Sort.ELEM)  # S_RD_OTHER, i != j
        if t.sym == WR and t.args[0].sym == WR:
            inner, i, e = t.args[0].args
            j, d = t.args[1], t.args[2]
            if i == j:
                return Term(WR, (inner, i, d), Sort.ARRAY)  # S_WR_SAME
            if i.is_const() and j.is_const() and self.prec.gt(i.sym, j.sym):
                return Term(WR, (Term(WR, (inner, j, d), Sort.ARRAY), i, e), Sort.ARRAY)  # S_WR_SWAP
        return None

    def step_at_root(self, t: Term, skip: Optional[Rule] = None) -> Optional[Term]:
        u = self._ground_step(t, skip)
        if u is not None:
            return u
        return self._schema_step(t)

    # -- normalization ------------------------------------------------

    def normalize(self, t: Term) -> Term:
        """Innermost-leftmost normal form w.r.t. ground rules and schemas."""
        cached = self._nf.get(t)
        if cached is not None:
            return cached
        out = self._normalize(t, [0])
        self._nf[t] = out
        return out

    def _normalize(self, t: Term, budget: List[int]) -> Term:
        cached = self._nf.get(t)
        if cached is not None:
            return cached
        orig = t
        if t.args:
            t = Term(t.sym, tuple(self._normalize(a, budget) for a in t.args), t.sort, t.is_var)
        while True:
            budget[0] += 1
            if budget[0] > _STEP_LIMIT:
                raise InternalInvariantError("normalization exceeded the step budget on %r" % (orig,))
            u = self.step_at_root(t)
            if u is None:
                self._nf[orig] = t
                self._nf[t] = t
                return t
            t = self._normalize(u, budget)

    def joinable(self, s: Term, t: Term) -> bool:
        """normalize(s) == normalize(t); definitive only on a confluent system."""
        return self.normalize(s) == self.normalize(t)

    def schema_normalize(self, t: Term) -> Term:
        """Normal form w.r.t. the write-sorting schemas only (no ground rules)."""
        empty = RewriteSystem((), self.prec)
        return empty.normalize(t)

    def reducible(self, t: Term, skip: Optional[Rule] = None) -> bool:
        if self.step_at_root(t, skip) is not None:
            return True
        return any(self.reducible(a, skip) for a in t.args)


def is_ground_irreducible(rs: RewriteSystem) -> bool:
    """No rule (ground or schema) reduces the lhs or rhs of another ground rule."""
    for r in rs.rules:
        if rs.reducible(r.lhs, skip=r):
            return False
        if rs.reducible(r.rhs, skip=r):
            return False
    return True


class OverlapKind(Enum):
    C1 = "C1"  # two array defs for one constant, distinct normalized bases
    C2 = "C2"  # two array defs for one constant, same normalized base
    C3 = "C3"  # read whose array argument is rewritten
    C4 = "C4"  # two reads of the same rd(a,i)
    C5 = "C5"  # two element defs for one constant


@dataclass(frozen=True)
class CriticalPairCase:
    kind: OverlapKind
    left: Rule
    right: Rule


def ground_overlaps(rs: RewriteSystem) -> List[CriticalPairCase]:
    """All critical pairs among ground rules, in the five classified cases.

    Overlaps with the schemas need no treatment: only element rules can
    superpose with them and those critical pairs are trivially
    confluent, so they are skipped.
    """
    out: List[CriticalPairCase] = []
    arr = [r for r in rs.rules if rule_shape(r) is RuleShape.ARRAY_DEF]
    rds = [r for r in rs.rules if rule_shape(r) is RuleShape.READ_DEF]
    els = [r for r in rs.rules if rule_shape(r) is RuleShape.ELEM_DEF]

    def same_lhs_pairs(rules: List[Rule]):
        for i in range(len(rules)):
            for j in range(i + 1, len(rules)):
                if rules[i].lhs == rules[j].lhs:
                    yield rules[i], rules[j]

    for r1, r2 in same_lhs_pairs(arr):
        b1, _, _ = split_write(rs.normalize(r1.rhs))
        b2, _, _ = split_write(rs.normalize(r2.rhs))
        kind = OverlapKind.C2 if b1 == b2 else OverlapKind.C1
        out.append(CriticalPairCase(kind, r1, r2))
    arr_lhs = {r.lhs for r in arr}
    for r in rds:
        if r.lhs.args[0] in arr_lhs:
            other = next(a for a in arr if a.lhs == r.lhs.args[0])
            out.append(CriticalPairCase(OverlapKind.C3, r, other))
    for r1, r2 in same_lhs_pairs(rds):
        out.append(CriticalPairCase(OverlapKind.C4, r1, r2))
    for r1, r2 in same_lhs_pairs(els):
        out.append(CriticalPairCase(OverlapKind.C5, r1, r2))
    return out
