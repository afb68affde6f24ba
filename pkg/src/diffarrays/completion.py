"""Completion engine: orientation, Gaussian completion of write-write
critical pairs, Knuth-Bendix completion of the remaining pairs,
reduction, and failure detection.

Every instruction replaces a set of literals by an equivalent set and
strictly decreases the termination measure: the multiset, over all
literals, of the term multisets {l, r} (positive literal) or
{l, l, r, r} (negative literal), compared by the double multiset
extension of the LPO.  The engine asserts that decrease at every step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

from .ordering import BADLY_ORIENTABLE, Precedence, Rule, lpo_gt, orient
from .rewrite import RewriteSystem, ground_overlaps, is_ground_irreducible, rule_shape, RuleShape
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
    mk_eq,
    mk_literal,
    mk_neq,
    mk_nested_write,
    split_write,
    term_key,
)


# ---------------------------------------------------------------------------
# Termination measure
# ---------------------------------------------------------------------------


def literal_measure(lit: Literal) -> List[Term]:
    if lit.positive:
        return [lit.lhs, lit.rhs]
    return [lit.lhs, lit.lhs, lit.rhs, lit.rhs]


def _multiset_gt(a: List, b: List, eq: Callable, gt: Callable) -> bool:
    rest_a = list(a)
    rest_b = list(b)
    i = 0
    while i < len(rest_a):
        hit = next((j for j, y in enumerate(rest_b) if eq(rest_a[i], y)), None)
        if hit is None:
            i += 1
        else:
            rest_a.pop(i)
            rest_b.pop(hit)
    if not rest_a:
        return False
    return all(any(gt(x, y) for x in rest_a) for y in rest_b)


def measure_gt(before: Iterable[Literal], after: Iterable[Literal], prec: Precedence) -> bool:
    """Multiset-of-multisets comparison of constraint measures."""

    def term_eq(s: Term, t: Term) -> bool:
        return s == t

    def term_gt(s: Term, t: Term) -> bool:
        return lpo_gt(s, t, prec)

    def ms_eq(m1: List[Term], m2: List[Term]) -> bool:
        return sorted(map(term_key, m1)) == sorted(map(term_key, m2))

    def ms_gt(m1: List[Term], m2: List[Term]) -> bool:
        return _multiset_gt(m1, m2, term_eq, term_gt)

    return _multiset_gt([literal_measure(l) for l in before],
                        [literal_measure(l) for l in after], ms_eq, ms_gt)


# ---------------------------------------------------------------------------
# Instructions (computed as removed/added literal sets)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Instr:
    name: str
    removed: FrozenSet[Literal]
    added: FrozenSet[Literal]

    def __repr__(self) -> str:
        return "%s: -%s +%s" % (self.name, sorted(map(repr, self.removed)), sorted(map(repr, self.added)))


@dataclass(frozen=True)
class Failure:
    kind: str  # "U1" | "U2"
    witness: Tuple[Literal, ...]


def _as_rule(lit: Literal, prec: Precedence):
    if not lit.positive or lit.lhs == lit.rhs:
        return None
    return orient(lit, prec)


def _rule_literals(c: Constraint, prec: Precedence) -> List[Tuple[Literal, Rule]]:
    out = []
    for lit in sorted(c.main_part, key=literal_key):
        r = _as_rule(lit, prec)
        if r is not None and r is not BADLY_ORIENTABLE:
            out.append((lit, r))
    return out


def _badly_orientable(c: Constraint, prec: Precedence) -> List[Literal]:
    out = []
    for lit in sorted(c.main_part, key=literal_key):
        if _as_rule(lit, prec) is BADLY_ORIENTABLE:
            out.append(lit)
    return out


def rewrite_view(c: Constraint, prec: Precedence) -> RewriteSystem:
    return RewriteSystem([r for _, r in _rule_literals(c, prec)], prec)


def _require_elem(t: Term, context: str) -> Term:
    if not (t.is_const() and t.sort is Sort.ELEM):
        raise InternalInvariantError(
            "read saturation invariant broken: %s normalized to %r" % (context, t))
    return t


# -- failure ----------------------------------------------------------------


def check_failure(c: Constraint, prec: Precedence) -> Optional[Failure]:
    """U1: a joinable element disequality; U2: diff applied twice to
    joinable pairs with distinct indexes."""
    rs = rewrite_view(c, prec)
    for lit in sorted(c.main_part, key=literal_key):
        if not lit.positive and lit.lhs.sort is Sort.ELEM:
            if rs.joinable(lit.lhs, lit.rhs):
                return Failure("U1", (lit,))
    diffs = [l for l in sorted(c.index_part, key=literal_key)
             if l.positive and l.lhs.sym == DIFF]
    for i in range(len(diffs)):
        for j in range(i + 1, len(diffs)):
            l1, l2 = diffs[i], diffs[j]
            if l1.rhs == l2.rhs:
                continue
            a, b = l1.lhs.args
            a2, b2 = l2.lhs.args
            if rs.joinable(a, a2) and rs.joinable(b, b2):
                return Failure("U2", (l1, l2))
    return None


# -- reduction --------------------------------------------------------------


def _find_R1(c: Constraint, prec: Precedence, rs: RewriteSystem) -> Optional[Instr]:
    for lit in sorted(c.main_part, key=literal_key):
        if lit.positive and lit.lhs == lit.rhs:
            return Instr("R1", frozenset([lit]), frozenset())
    for lit, rule in _rule_literals(c, prec):
        nf = rs.normalize(rule.rhs)
        if nf != rule.rhs:
            added = frozenset() if nf == rule.lhs else frozenset([mk_eq(rule.lhs, nf)])
            return Instr("R1", frozenset([lit]), added)
    return None


def _find_R2(c: Constraint, prec: Precedence, rs: RewriteSystem) -> Optional[Instr]:
    for lit, rule in _rule_literals(c, prec):
        if rule_shape(rule) is not RuleShape.ARRAY_DEF or rule.rhs.is_const():
            continue
        base, idxs, elms = split_write(rs.schema_normalize(rule.rhs))
        for k in range(len(idxs)):
            if rs.joinable(Term(RD, (base, idxs[k]), Sort.ELEM), elms[k]):
                rest_i = idxs[:k] + idxs[k + 1:]
                rest_e = elms[:k] + elms[k + 1:]
                new = mk_eq(rule.lhs, mk_nested_write(base, rest_i, rest_e))
                return Instr("R2", frozenset([lit]), frozenset([new]))
    return None


def _find_R3(c: Constraint, prec: Precedence, rs: RewriteSystem) -> Optional[Instr]:
    for lit in sorted(c.index_part, key=literal_key):
        if not (lit.positive and lit.lhs.sym == DIFF):
            continue
        a, b = lit.lhs.args
        i = lit.rhs
        if a == b:
            continue
        if rs.joinable(Term(RD, (a, i), Sort.ELEM), Term(RD, (b, i), Sort.ELEM)):
            hi, lo = (a, b) if prec.gt(a.sym, b.sym) else (b, a)
            new_diff = mk_eq(Term(DIFF, (lo, lo), Sort.INDEX), i)
            return Instr("R3", frozenset([lit]), frozenset([mk_eq(hi, lo), new_diff]))
    return None


# -- orientation ------------------------------------------------------------


def _find_orientation(c: Constraint, prec: Precedence, rs: RewriteSystem) -> Optional[Instr]:
    for lit in _badly_orientable(c, prec):
        a = lit.lhs
        base, idxs, elms = split_write(rs.schema_normalize(lit.rhs))
        reads = [mk_eq(Term(RD, (a, i), Sort.ELEM), e) for i, e in zip(idxs, elms)]
        if a == base:
            # Refl: wr(a, I, E) = a is equivalent to the read literals alone
            return Instr("Orient", frozenset([lit]), frozenset(reads))
        # Symm: a = wr(base, I, E) with base > a flips to
        # base = wr(a, I, D) with D the current values of base at I
        dvals = [_require_elem(rs.normalize(Term(RD, (base, i), Sort.ELEM)), "rd(%s,%s)" % (base.sym, i.sym))
                 for i in idxs]
        flipped = mk_eq(base, mk_nested_write(a, idxs, dvals))
        return Instr("Orient", frozenset([lit]), frozenset([flipped] + reads))
    return None


# -- critical pairs ---------------------------------------------------------


def _array_rule_pairs(c: Constraint, prec: Precedence):
    arr = [(lit, r) for lit, r in _rule_literals(c, prec) if rule_shape(r) is RuleShape.ARRAY_DEF]
    for i in range(len(arr)):
        for j in range(i + 1, len(arr)):
            if arr[i][1].lhs == arr[j][1].lhs:
                yield arr[i], arr[j]


def _normalized_read_literal(rs: RewriteSystem, array_term: Term, i: Term, e: Term) -> Optional[Literal]:
    """rd(<array_term>, i) = e with the left member normalized; None if trivial."""
    u = rs.normalize(Term(RD, (array_term, i), Sort.ELEM))
    if u == e:
        return None
    return mk_eq(u, e)


def compute_C2(lit1: Literal, lit2: Literal, c: Constraint, prec: Precedence,
               rs: RewriteSystem) -> Optional[Instr]:
    """Two array definitions for one constant whose normal forms share the
    base: solve with the write-conflict equivalence."""
    r1, r2 = _as_rule(lit1, prec), _as_rule(lit2, prec)
    a = r1.lhs
    n1, n2 = rs.normalize(r1.rhs), rs.normalize(r2.rhs)
    b1, i1, e1 = split_write(n1)
    b2, i2, e2 = split_write(n2)
    if b1 != b2:
        return None
    added: Set[Literal] = set()
    if n1 == n2:
        if a != n1:
            added.add(mk_eq(a, n1))
        return Instr("C2", frozenset([lit1, lit2]), frozenset(added))
    common = sorted(set(i1) & set(i2), key=term_key)
    pos1 = {i: e for i, e in zip(i1, e1)}
    pos2 = {i: e for i, e in zip(i2, e2)}
    tower = mk_nested_write(b1, common, [pos1[i] for i in common])
    if a != tower:
        added.add(mk_eq(a, tower))
    for i in common:
        if pos1[i] != pos2[i]:
            added.add(mk_eq(pos1[i], pos2[i]))
    for i, e in zip(i1, e1):
        if i not in pos2:
            lit = _normalized_read_literal(rs, b1, i, e)
            if lit is not None:
                added.add(lit)
    for i, e in zip(i2, e2):
        if i not in pos1:
            lit = _normalized_read_literal(rs, b1, i, e)
            if lit is not None:
                added.add(lit)
    return Instr("C2", frozenset([lit1, lit2]), frozenset(added))


def compute_C1(lit1: Literal, lit2: Literal, c: Constraint, prec: Precedence,
               rs: RewriteSystem) -> Optional[Instr]:
    """Two array definitions for one constant with distinct normalized
    bases b1 > b2: flip the b1 parent with Symm, chain with Trans."""
    r1, r2 = _as_rule(lit1, prec), _as_rule(lit2, prec)
    a = r1.lhs
    n1, n2 = rs.normalize(r1.rhs), rs.normalize(r2.rhs)
    b1 = split_write(n1)[0]
    b2 = split_write(n2)[0]
    if b1 == b2:
        return None
    if not prec.gt(b1.sym, b2.sym):
        lit1, lit2 = lit2, lit1
        n1, n2 = n2, n1
        b1, b2 = b2, b1
    _, i1, e1 = split_write(n1)
    _, i2, e2 = split_write(n2)
    fvals = [_require_elem(rs.normalize(Term(RD, (b1, i), Sort.ELEM)), "rd(%s,%s)" % (b1.sym, i.sym))
             for i in i1]
    trans = rs.schema_normalize(mk_nested_write(b2, i2 + i1, e2 + fvals))
    added: Set[Literal] = {mk_eq(b1, trans)}
    if a != n2:
        added.add(mk_eq(a, n2))
    for i, e in zip(i1, e1):
        lit = _normalized_read_literal(rs, n2, i, e)
        if lit is not None:
            added.add(lit)
    return Instr("C1", frozenset([lit1, lit2]), frozenset(added))


def compute_C3(rd_lit: Literal, arr_lit: Literal, c: Constraint, prec: Precedence,
               rs: RewriteSystem) -> Instr:
    """A read rule rd(a,i) -> e' whose array argument is itself rewritten."""
    arr_rule = _as_rule(arr_lit, prec)
    i = rd_lit.lhs.args[1]
    d = rs.normalize(Term(RD, (arr_rule.rhs, i), Sort.ELEM))
    _require_elem(d, "rd(%r,%s)" % (arr_rule.rhs, i.sym))
    e = rs.normalize(rd_lit.rhs)
    added: Set[Literal] = set()
    if d != e:
        added.add(mk_eq(d, e))
    return Instr("C3", frozenset([rd_lit]), frozenset(added))


def compute_C4C5(lit1: Literal, lit2: Literal, c: Constraint, prec: Precedence,
                 rs: RewriteSystem) -> Instr:
    """Two rules with an identical left-hand side (rd(a,i) or e): orient
    the normalized critical pair and drop one parent."""
    r1, r2 = _as_rule(lit1, prec), _as_rule(lit2, prec)
    name = "C4" if rule_shape(r1) is RuleShape.READ_DEF else "C5"
    e = rs.normalize(r1.rhs)
    d = rs.normalize(r2.rhs)
    if e == d:
        drop = max(lit1, lit2, key=literal_key)
        return Instr(name, frozenset([drop]), frozenset())
    if lpo_gt(d, e, prec):
        keep_lit, drop_lit = lit1, lit2
    else:
        keep_lit, drop_lit = lit2, lit1
    hi, lo = (e, d) if lpo_gt(e, d, prec) else (d, e)
    return Instr(name, frozenset([drop_lit]), frozenset([mk_eq(hi, lo)]))


def _find_critical_pair(c: Constraint, prec: Precedence, rs: RewriteSystem) -> Optional[Instr]:
    # C2 before C1 (both on array/array overlaps), then C3, then C4/C5
    c1_candidate = None
    for (lit1, r1), (lit2, r2) in _array_rule_pairs(c, prec):
        instr = compute_C2(lit1, lit2, c, prec, rs)
        if instr is not None:
            return instr
        if c1_candidate is None:
            c1_candidate = compute_C1(lit1, lit2, c, prec, rs)
    if c1_candidate is not None:
        return c1_candidate
    rules = _rule_literals(c, prec)
    arr_by_lhs = {r.lhs: lit for lit, r in rules if rule_shape(r) is RuleShape.ARRAY_DEF}
    for lit, r in rules:
        if rule_shape(r) is RuleShape.READ_DEF and r.lhs.args[0] in arr_by_lhs:
            return compute_C3(lit, arr_by_lhs[r.lhs.args[0]], c, prec, rs)
    for shape in (RuleShape.READ_DEF, RuleShape.ELEM_DEF):
        group = [(lit, r) for lit, r in rules if rule_shape(r) is shape]
        for i in range(len(group)):
            for j in range(i + 1, len(group)):
                if group[i][1].lhs == group[j][1].lhs:
                    return compute_C4C5(group[i][0], group[j][0], c, prec, rs)
    return None


# ---------------------------------------------------------------------------
# The engine
# ---------------------------------------------------------------------------


def find_instruction(c: Constraint, prec: Precedence) -> Optional[Instr]:
    """First applicable instruction under the fixed priority
    Reduction > Orientation > C2 > C1 > C3 > C4/C5 (failure is checked
    separately)."""
    rs = rewrite_view(c, prec)
    for finder in (_find_R1, _find_R2, _find_R3, _find_orientation, _find_critical_pair):
        instr = finder(c, prec, rs)
        if instr is not None:
            return instr
    return None


def apply_instruction(c: Constraint, instr: Instr) -> Constraint:
    idx = set(c.index_part)
    main = set(c.main_part)
    for lit in instr.removed:
        idx.discard(lit)
        main.discard(lit)
    merged = Constraint(frozenset(idx), frozenset(main))
    new = set(merged.index_part | merged.main_part) | set(instr.added)
    return Constraint.from_literals(new)


@dataclass
class CompletionState:
    """A constraint under completion, with the instruction trace."""

    constraint: Constraint
    prec: Precedence
    trace: List[Instr] = field(default_factory=list)

    def rs(self) -> RewriteSystem:
        return rewrite_view(self.constraint, self.prec)

    def step(self, instr: Instr, assert_measure: bool = True) -> None:
        before = self.constraint.literals()
        self.constraint = apply_instruction(self.constraint, instr)
        if assert_measure and not measure_gt(before, self.constraint.literals(), self.prec):
            raise InternalInvariantError("termination measure did not decrease on %r" % (instr,))
        self.trace.append(instr)


# Spec-level wrappers over the instruction finders --------------------------


def orient_badly(st: CompletionState) -> CompletionState:
    instr = _find_orientation(st.constraint, st.prec, st.rs())
    if instr is None:
        raise InternalInvariantError("no badly orientable equality present")
    st.step(instr)
    return st


def resolve_C1(st: CompletionState, pair: Tuple[Literal, Literal]) -> CompletionState:
    instr = compute_C1(pair[0], pair[1], st.constraint, st.prec, st.rs())
    if instr is None:
        raise InternalInvariantError("pair is not a C1 overlap")
    st.step(instr)
    return st


def resolve_C2(st: CompletionState, pair: Tuple[Literal, Literal]) -> CompletionState:
    instr = compute_C2(pair[0], pair[1], st.constraint, st.prec, st.rs())
    if instr is None:
        raise InternalInvariantError("pair is not a C2 overlap")
    st.step(instr)
    return st


def resolve_C3(st: CompletionState, pair: Tuple[Literal, Literal]) -> CompletionState:
    st.step(compute_C3(pair[0], pair[1], st.constraint, st.prec, st.rs()))
    return st


def resolve_C4_C5(st: CompletionState, pair: Tuple[Literal, Literal]) -> CompletionState:
    st.step(compute_C4C5(pair[0], pair[1], st.constraint, st.prec, st.rs()))
    return st


def reduce_R1_R2_R3(st: CompletionState) -> CompletionState:
    rs = st.rs()
    for finder in (_find_R1, _find_R2, _find_R3):
        instr = finder(st.constraint, st.prec, rs)
        if instr is not None:
            st.step(instr)
            return st
    raise InternalInvariantError("no reduction applies")


@dataclass(frozen=True)
class Modular:
    constraint: Constraint
    trace: Tuple[Instr, ...]


@dataclass(frozen=True)
class Failed:
    failure: Failure
    trace: Tuple[Instr, ...]


def run_completion(c: Constraint, prec: Precedence, assert_measure: bool = True):
    """Run instructions to quiescence.  Returns Modular(...) when no
    instruction applies (the result satisfies the modularity conditions)
    or Failed(...) when a failure instruction fires."""
    for t in c.constants():
        prec.ensure(t)
    st = CompletionState(c, prec)
    while True:
        fail = check_failure(st.constraint, prec)
        if fail is not None:
            return Failed(fail, tuple(st.trace))
        instr = find_instruction(st.constraint, prec)
        if instr is None:
            out = st.constraint
            if ground_overlaps(rewrite_view(out, prec)):
                raise InternalInvariantError("completion stopped with pending overlaps")
            if not is_ground_irreducible(rewrite_view(out, prec)):
                raise InternalInvariantError("completion stopped but rules are reducible")
            return Modular(out, tuple(st.trace))
        st.step(instr, assert_measure=assert_measure)
