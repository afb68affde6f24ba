"""Preprocessing pipeline: flattening, array-disequality elimination,
index partition guessing, and read saturation.

Each step preserves existential equivalence of the constraint; the
disjunction over all partition guesses is equisatisfiable with the
input.  After the full pipeline the constraint satisfies:

  (i1) it contains i != j for every pair of distinct index constants;
  (i2) every rd(a, i) over occurring constants reduces to an element
       constant.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, Iterator, List, Optional, Sequence, Set, Tuple

from .ordering import Precedence
from .terms import (
    DIFF,
    RD,
    WR,
    Constraint,
    FreshGen,
    Literal,
    LiteralClass,
    Sort,
    Term,
    classify_literal,
    literal_key,
    mk_eq,
    mk_literal,
    mk_neq,
    rd,
    split_write,
    term_key,
)


class Inconsistent:
    """Partition application produced i != i."""

    def __repr__(self) -> str:
        return "Inconsistent"


INCONSISTENT = Inconsistent()


# ---------------------------------------------------------------------------
# Step 1: flattening
# ---------------------------------------------------------------------------


class _Flattener:
    def __init__(self, gen: FreshGen) -> None:
        self.gen = gen
        self.defs: Dict[Term, Term] = {}  # defined application -> constant
        self.out: List[Literal] = []

    def define(self, t: Term) -> Term:
        """Name a flat application by a fresh constant; shared across the call."""
        if t in self.defs:
            return self.defs[t]
        c = self.gen.fresh(t.sort)
        self.defs[t] = c
        self.out.append(mk_eq(c, t))
        return c

    def flat_app(self, t: Term) -> Term:
        """Rewrite an application so all argument positions are constants
        (write towers keep their nesting)."""
        if t.sym == WR:
            base, idxs, elms = split_write(t)
            base = self.atom(base)
            idxs = [self.atom(i) for i in idxs]
            elms = [self.atom(e) for e in elms]
            out = base
            for i, e in zip(idxs, elms):
                out = Term(WR, (out, i, e), Sort.ARRAY)
            return out
        return Term(t.sym, tuple(self.atom(a) for a in t.args), t.sort)

    def atom(self, t: Term) -> Term:
        """Reduce a term to a constant, defining subterms as needed."""
        if t.is_const():
            return t
        return self.define(self.flat_app(t))

    def literal(self, lit: Literal) -> None:
        lhs, rhs = lit.lhs, lit.rhs
        if not lit.positive:
            self.out.append(mk_neq(self.atom(lhs), self.atom(rhs)))
            return
        if lhs.is_const() and rhs.is_const():
            self.out.append(lit)
            return
        if lhs.is_const() and not rhs.is_const():
            lhs, rhs = rhs, lhs
        if not rhs.is_const():
            rhs = self.atom(rhs)
        # lhs is an application, rhs a constant
        flat = self.flat_app(lhs)
        if flat.sym == WR:
            self.out.append(mk_eq(rhs, flat))
        else:
            self.out.append(mk_eq(flat, rhs))


def flatten(c: Constraint, gen: FreshGen) -> Constraint:
    """Step 1: replace non-constant subterms by fresh named constants."""
    fl = _Flattener(gen)
    for lit in sorted(c.index_part | c.main_part, key=literal_key):
        fl.literal(lit)
    return Constraint.from_literals(fl.out)


# ---------------------------------------------------------------------------
# Step 2: array disequalities
# ---------------------------------------------------------------------------


def eliminate_array_disequalities(c: Constraint, gen: FreshGen) -> Constraint:
    """Step 2: a != b becomes diff(a,b)=i, rd(b,i)=e, rd(a,i)=d, d != e."""
    out: List[Literal] = []
    for lit in sorted(c.index_part | c.main_part, key=literal_key):
        if not lit.positive and lit.lhs.sort is Sort.ARRAY and lit.lhs.is_const() and lit.rhs.is_const():
            a, b = lit.lhs, lit.rhs
            i = gen.fresh(Sort.INDEX)
            e = gen.fresh(Sort.ELEM)
            d = gen.fresh(Sort.ELEM)
            out.append(mk_eq(Term(DIFF, (a, b), Sort.INDEX), i))
            out.append(mk_eq(Term(RD, (b, i), Sort.ELEM), e))
            out.append(mk_eq(Term(RD, (a, i), Sort.ELEM), d))
            out.append(mk_neq(d, e))
        else:
            out.append(lit)
    return Constraint.from_literals(out)


# ---------------------------------------------------------------------------
# Step 3: index partitions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PartitionChoice:
    """Equivalence classes over index constants, each with its
    precedence-least member as representative."""

    classes: Tuple[FrozenSet[Term], ...]

    def representative(self, prec: Precedence) -> Dict[Term, Term]:
        rep: Dict[Term, Term] = {}
        for cls in self.classes:
            least = min(cls, key=lambda t: prec.key(t.sym))
            for t in cls:
                rep[t] = least
        return rep

    def n_classes(self) -> int:
        return len(self.classes)


def restricted_growth_strings(n: int) -> Iterator[Tuple[int, ...]]:
    """All set partitions of range(n), encoded as restricted growth strings."""
    if n == 0:
        yield ()
        return

    def go(prefix: List[int], mx: int):
        if len(prefix) == n:
            yield tuple(prefix)
            return
        for v in range(mx + 2):
            prefix.append(v)
            yield from go(prefix, max(mx, v))
            prefix.pop()

    yield from go([0], 0)


def enumerate_partitions(items: Sequence[Term]) -> List[PartitionChoice]:
    """Every partition exactly once, finest (all-distinct) first."""
    items = sorted(items, key=term_key)
    out: List[PartitionChoice] = []
    for rgs in restricted_growth_strings(len(items)):
        classes: Dict[int, Set[Term]] = {}
        for it, cls in zip(items, rgs):
            classes.setdefault(cls, set()).add(it)
        out.append(PartitionChoice(tuple(frozenset(c) for c in classes.values())))
    out.sort(key=lambda p: -p.n_classes())
    return out


class GuessStream:
    """Deterministic enumerator of partition guesses; a seed permutes the order."""

    def __init__(self, indexes: Sequence[Term], seed: Optional[int] = None) -> None:
        self.choices = enumerate_partitions(indexes)
        if seed:
            random.Random(seed).shuffle(self.choices)

    def __iter__(self) -> Iterator[PartitionChoice]:
        return iter(self.choices)

    def __len__(self) -> int:
        return len(self.choices)


def substitute_constraint(c: Constraint, mapping: Dict[Term, Term]) -> Constraint:
    def sub_term(t: Term) -> Term:
        if t.is_const():
            return mapping.get(t, t)
        return Term(t.sym, tuple(sub_term(a) for a in t.args), t.sort, t.is_var)

    out: List[Literal] = []
    for lit in c.index_part | c.main_part:
        out.append(mk_literal(lit.positive, sub_term(lit.lhs), sub_term(lit.rhs)))
    return Constraint.from_literals(out)


def apply_partition(c: Constraint, choice: PartitionChoice, prec: Precedence):
    """Step 3: merge each class into its least member, then add pairwise
    disequalities between the representatives.

    Positive index equalities in the constraint merge their classes as
    well.  Returns INCONSISTENT when a literal i != i arises.
    """
    # join the guessed partition with equalities already in the constraint
    parent: Dict[Term, Term] = {}

    def find(x: Term) -> Term:
        while parent.get(x, x) != x:
            parent[x] = parent.get(parent[x], parent[x])
            x = parent[x]
        return x

    def union(x: Term, y: Term) -> None:
        rx, ry = find(x), find(y)
        if rx != ry:
            parent[rx] = ry

    indexes = set(c.constants_of_sort(Sort.INDEX))
    for cls in choice.classes:
        members = sorted(cls, key=term_key)
        for m in members[1:]:
            union(members[0], m)
        indexes |= cls
    for lit in c.index_part:
        if lit.positive and lit.lhs.is_const() and lit.rhs.is_const():
            union(lit.lhs, lit.rhs)

    classes: Dict[Term, Set[Term]] = {}
    for i in indexes:
        classes.setdefault(find(i), set()).add(i)
    mapping: Dict[Term, Term] = {}
    for members in classes.values():
        least = min(members, key=lambda t: prec.key(t.sym))
        for m in members:
            mapping[m] = least

    merged = substitute_constraint(c, mapping)
    out: Set[Literal] = set()
    for lit in merged.index_part | merged.main_part:
        if lit.positive and lit.lhs == lit.rhs:
            continue  # collapsed equalities i = i
        if not lit.positive and lit.lhs == lit.rhs:
            return INCONSISTENT
        out.add(lit)
    reps = sorted({mapping[i] for i in indexes}, key=term_key)
    for a, b in itertools.combinations(reps, 2):
        out.add(mk_neq(a, b))
    return Constraint.from_literals(out)


# ---------------------------------------------------------------------------
# Step 4: read saturation
# ---------------------------------------------------------------------------


def saturate_reads(c: Constraint, gen: FreshGen) -> Constraint:
    """Step 4: add rd(a,i)=e with fresh e for every (a, i) pair occurring
    in the constraint that has no read literal yet."""
    have: Set[Tuple[Term, Term]] = set()
    for lit in c.main_part:
        if lit.positive and lit.lhs.sym == RD:
            have.add((lit.lhs.args[0], lit.lhs.args[1]))
    out: List[Literal] = list(c.index_part | c.main_part)
    arrays = c.constants_of_sort(Sort.ARRAY)
    indexes = c.constants_of_sort(Sort.INDEX)
    for a in arrays:
        for i in indexes:
            if (a, i) not in have:
                e = gen.fresh(Sort.ELEM)
                out.append(mk_eq(Term(RD, (a, i), Sort.ELEM), e))
    return Constraint.from_literals(out)


def missing_read_pairs(c: Constraint) -> List[Tuple[Term, Term]]:
    have: Set[Tuple[Term, Term]] = set()
    for lit in c.main_part:
        if lit.positive and lit.lhs.sym == RD:
            have.add((lit.lhs.args[0], lit.lhs.args[1]))
    out = []
    for a in c.constants_of_sort(Sort.ARRAY):
        for i in c.constants_of_sort(Sort.INDEX):
            if (a, i) not in have:
                out.append((a, i))
    return out


def holds_i1(c: Constraint) -> bool:
    indexes = c.constants_of_sort(Sort.INDEX)
    for a, b in itertools.combinations(indexes, 2):
        if mk_neq(a, b) not in c.index_part:
            return False
    return True


def holds_i2(c: Constraint) -> bool:
    return not missing_read_pairs(c)
