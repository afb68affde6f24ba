"""Symbol precedence and the lexicographic path ordering on ground terms.

The precedence is total and respects the fixed spine

    a > wr > rd > diff > i > e

for every array constant a, index constant i and element constant e.
Order keys are rationals, so a fresh symbol can be inserted strictly
between any two existing symbols of the same sort (needed when the
interpolating solver creates constants with ordering side conditions).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Dict, Iterable, Optional, Tuple

from .terms import DIFF, RD, WR, Literal, Sort, Term, classify_literal, LiteralClass, split_write
from .terms import StructuralError


class ConfigError(ValueError):
    """A symbol is missing from the precedence."""


class Comparison(Enum):
    GREATER = 1
    EQUAL = 0
    LESS = -1


# Key zones.  Function symbols are pinned; constants live in open
# intervals per sort so that the spine holds for any assignment.
_KEY_WR = Fraction(0)
_KEY_RD = Fraction(-1)
_KEY_DIFF = Fraction(-2)
# array constants: (0, +inf); index constants: (-3, -2); elem: (-4, -3)
_ZONES = {
    Sort.ARRAY: (Fraction(0), None),
    Sort.INDEX: (Fraction(-3), Fraction(-2)),
    Sort.ELEM: (Fraction(-4), Fraction(-3)),
}


class Precedence:
    def __init__(self) -> None:
        self._keys: Dict[str, Fraction] = {WR: _KEY_WR, RD: _KEY_RD, DIFF: _KEY_DIFF}
        self._sorts: Dict[str, Sort] = {}

    def copy(self) -> "Precedence":
        p = Precedence()
        p._keys = dict(self._keys)
        p._sorts = dict(self._sorts)
        return p

    def __contains__(self, name: str) -> bool:
        return name in self._keys

    def key(self, name: str) -> Fraction:
        try:
            return self._keys[name]
        except KeyError:
            raise ConfigError("symbol %r has no precedence" % name) from None

    def symbols(self) -> Iterable[str]:
        return self._keys.keys()

    def _zone_keys(self, sort: Sort) -> list:
        lo, hi = _ZONES[sort]
        return [k for n, k in self._keys.items()
                if n not in (WR, RD, DIFF) and self._sorts.get(n) is sort]

    def _check_zone(self, sort: Sort, key: Fraction) -> Fraction:
        lo, hi = _ZONES[sort]
        if key <= lo or (hi is not None and key >= hi):
            raise ConfigError("key %s escapes the %s zone" % (key, sort))
        return key

    def _register(self, name: str, sort: Sort, key: Fraction) -> None:
        if name in self._keys:
            raise ConfigError("symbol %r already has a precedence" % name)
        self._keys[name] = self._check_zone(sort, key)
        self._sorts[name] = sort

    def insert_bottom(self, name: str, sort: Sort) -> None:
        """Insert below every existing constant of the sort."""
        lo, hi = _ZONES[sort]
        keys = self._zone_keys(sort)
        if not keys:
            key = lo + 1 if hi is None else (lo + hi) / 2
        else:
            key = (lo + min(keys)) / 2
        self._register(name, sort, key)

    def insert_top(self, name: str, sort: Sort) -> None:
        """Insert above every existing constant of the sort."""
        lo, hi = _ZONES[sort]
        keys = self._zone_keys(sort)
        if not keys:
            key = lo + 1 if hi is None else (lo + hi) / 2
        elif hi is None:
            key = max(keys) + 1
        else:
            key = (max(keys) + hi) / 2
        self._register(name, sort, key)

    def insert_between(self, name: str, sort: Sort, below_of: str, above_of: str) -> None:
        """Insert strictly between two same-sort symbols (above_of < new < below_of)."""
        hi = self.key(below_of)
        lo = self.key(above_of)
        if not lo < hi:
            raise ConfigError("cannot insert between %r and %r" % (below_of, above_of))
        self._register(name, sort, (lo + hi) / 2)

    def insert_above(self, name: str, sort: Sort, above_of: str) -> None:
        """Insert immediately above ``above_of``: above_of < new < everything that was above it."""
        lo = self.key(above_of)
        bigger = [k for k in self._zone_keys(sort) if k > lo]
        _, hi = _ZONES[sort]
        if bigger:
            key = (lo + min(bigger)) / 2
        elif hi is None:
            key = lo + 1
        else:
            key = (lo + hi) / 2
        self._register(name, sort, key)

    def insert_below(self, name: str, sort: Sort, below_of: str) -> None:
        hi = self.key(below_of)
        smaller = [k for k in self._zone_keys(sort) if k < hi]
        lo, _ = _ZONES[sort]
        key = (max(smaller) + hi) / 2 if smaller else (lo + hi) / 2
        self._register(name, sort, key)

    def ensure(self, term: Term) -> None:
        """Register any missing constants of a term at the bottom of their zone."""
        if term.is_const():
            if term.sym not in self._keys:
                self.insert_bottom(term.sym, term.sort)
            return
        for a in term.args:
            self.ensure(a)

    def gt(self, a: str, b: str) -> bool:
        return self.key(a) > self.key(b)


def lpo_compare(s: Term, t: Term, prec: Precedence) -> Comparison:
    """Total LPO on ground terms induced by a total precedence."""
    if s == t:
        return Comparison.EQUAL
    if _lpo_gt(s, t, prec):
        return Comparison.GREATER
    return Comparison.LESS


def lpo_gt(s: Term, t: Term, prec: Precedence) -> bool:
    if s == t:
        return False
    return _lpo_gt(s, t, prec)


def _lpo_gt(s: Term, t: Term, prec: Precedence) -> bool:
    # clause (1): some argument of s is >= t
    for sk in s.args:
        if sk == t or _lpo_gt(sk, t, prec):
            return True
    head = prec.key(s.sym) - prec.key(t.sym)
    if head > 0:
        # clause (2): s's head dominates and s beats every argument of t
        return all(_lpo_gt(s, tl, prec) for tl in t.args)
    if head == 0 and s.sym == t.sym and len(s.args) == len(t.args):
        # clause (3): lexicographic descent on the first differing argument
        for j in range(len(s.args)):
            if s.args[j] == t.args[j]:
                continue
            if _lpo_gt(s.args[j], t.args[j], prec):
                return all(_lpo_gt(s, t.args[l], prec) for l in range(j + 1, len(t.args)))
            return False
    return False


@dataclass(frozen=True)
class Rule:
    lhs: Term
    rhs: Term

    def __repr__(self) -> str:
        return "%r -> %r" % (self.lhs, self.rhs)


class BadlyOrientable:
    """Marker result: a = wr(b, I, E) with nonempty I and a < b or a == b."""

    def __repr__(self) -> str:
        return "BadlyOrientable"


BADLY_ORIENTABLE = BadlyOrientable()


def orient(lit: Literal, prec: Precedence):
    """Orient a flat positive equality into an LPO-decreasing rule.

    Returns BADLY_ORIENTABLE exactly for a = wr(b, I, E) with nonempty
    I and a < b or a == b.  Reflexive equalities have no orientation and
    raise; callers drop them beforehand.
    """
    if not lit.positive:
        raise StructuralError("cannot orient a negative literal: %r" % (lit,))
    if classify_literal(lit) is LiteralClass.NOT_FLAT:
        raise StructuralError("cannot orient a non-flat literal: %r" % (lit,))
    lhs, rhs = lit.lhs, lit.rhs
    if lhs == rhs:
        raise StructuralError("reflexive equality has no orientation: %r" % (lit,))
    if lhs.is_const() and rhs.sym == WR:
        base, idxs, _ = split_write(rhs)
        if idxs and not prec.gt(lhs.sym, base.sym):
            return BADLY_ORIENTABLE
        # a > b makes the constant dominate the whole tower under LPO
        return Rule(lhs, rhs)
    if not lhs.is_const():  # rd(a,i) = e or diff(a,b) = i
        return Rule(lhs, rhs)
    # constant pair
    if prec.gt(lhs.sym, rhs.sym):
        return Rule(lhs, rhs)
    return Rule(rhs, lhs)
