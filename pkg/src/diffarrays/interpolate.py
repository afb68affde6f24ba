"""Interpolating solver: two completion runs exchanging shared facts.

The pair engine runs the completion instructions on the A- and
B-components while keeping three extra obligations:

  (beta)  a literal over shared constants present in one component is
          copied to the other;
  (gamma) literals that would block merging the two components
          (a rewrite rule, diff literal, or write equation mixing
          shared and private constants) are repaired, by renaming
          private constants into fresh shared ones or by case splitting
          on a prefix of a write tower;
  shared deletions: an instruction consuming shared literals runs in
          both components simultaneously.

Every step is justified by one of the sixteen metarules; the ones that
matter for interpolant reconstruction (Close, Propagate, Define0 and
the Disjunctions) are recorded in a proof tree and replayed top-down.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple, Union

from .completion import (
    Failure,
    Instr,
    apply_instruction,
    check_failure,
    find_instruction,
    literal_measure,
    measure_gt,
    _multiset_gt,
    rewrite_view,
)
from .ordering import BADLY_ORIENTABLE, Precedence, orient
from .preprocess import eliminate_array_disequalities, enumerate_partitions, flatten, substitute_constraint
from .satcheck import Model, build_model, decide_modular_sat, is_modular
from .terms import (
    DIFF,
    RD,
    WR,
    Atom,
    Constraint,
    Formula,
    FreshGen,
    InternalInvariantError,
    Literal,
    Sort,
    Term,
    and_,
    atom,
    const,
    literal_key,
    mk_eq,
    mk_neq,
    mk_nested_write,
    not_,
    or_,
    simplify_formula,
    split_write,
    substitute_formula,
    symbols_of,
    term_key,
    FALSE,
    TRUE,
)

A_SIDE = "A"
B_SIDE = "B"


class Locality(Enum):
    A_STRICT = "A-strict"
    B_STRICT = "B-strict"
    COMMON = "AB-common"


@dataclass
class SignaturePartition:
    """Locality tag per free constant name."""

    tags: Dict[str, Locality] = field(default_factory=dict)

    def tag(self, name: str, loc: Locality) -> None:
        self.tags[name] = loc

    def of(self, name: str) -> Locality:
        return self.tags[name]

    def is_common(self, t: Term) -> bool:
        return all(self.tags[c.sym] is Locality.COMMON for c in _consts(t))

    def is_common_literal(self, lit: Literal) -> bool:
        return self.is_common(lit.lhs) and self.is_common(lit.rhs)

    def strict_side(self, t: Term) -> Optional[str]:
        """Which strict side a term touches (None if AB-common; a term
        never mixes both sides inside one component)."""
        sides = {self.tags[c.sym] for c in _consts(t)}
        if Locality.A_STRICT in sides and Locality.B_STRICT in sides:
            raise InternalInvariantError("AB-mixed term %r" % (t,))
        if Locality.A_STRICT in sides:
            return A_SIDE
        if Locality.B_STRICT in sides:
            return B_SIDE
        return None


def _consts(t: Term) -> Iterable[Term]:
    if t.is_const():
        yield t
        return
    for a in t.args:
        yield from _consts(a)


# ---------------------------------------------------------------------------
# Metarules
# ---------------------------------------------------------------------------


class MetaruleKind(Enum):
    CLOSE1 = "Close1"
    CLOSE2 = "Close2"
    PROPAGATE1 = "Propagate1"
    PROPAGATE2 = "Propagate2"
    DEFINE0 = "Define0"
    DEFINE1 = "Define1"
    DEFINE2 = "Define2"
    DISJUNCTION1 = "Disjunction1"
    DISJUNCTION2 = "Disjunction2"
    REDPLUS1 = "Redplus1"
    REDPLUS2 = "Redplus2"
    REDMINUS1 = "Redminus1"
    REDMINUS2 = "Redminus2"
    CONSTELIM0 = "ConstElim0"
    CONSTELIM1 = "ConstElim1"
    CONSTELIM2 = "ConstElim2"


class ProvisoError(ValueError):
    """A metarule was applied with a failing proviso."""


@dataclass(frozen=True)
class PairState:
    a: Constraint
    b: Constraint

    def component(self, side: str) -> Constraint:
        return self.a if side == A_SIDE else self.b

    def with_component(self, side: str, c: Constraint) -> "PairState":
        return PairState(c, self.b) if side == A_SIDE else PairState(self.a, c)


def _entailed(c: Constraint, lit: Literal, prec: Precedence) -> bool:
    """Constructive entailment check: membership, or joinability of a
    positive equality under the component's rules."""
    if lit in c.index_part or lit in c.main_part:
        return True
    if lit.positive:
        return rewrite_view(c, prec).joinable(lit.lhs, lit.rhs)
    return False


def _component_unsat(c: Constraint, prec: Precedence) -> bool:
    if check_failure(c, prec) is not None:
        return True
    return any(not l.positive and l.lhs == l.rhs for l in c.index_part | c.main_part)


def apply_metarule(st: PairState, kind: MetaruleKind, payload=None, *,
                   partition: Optional[SignaturePartition] = None,
                   prec: Optional[Precedence] = None) -> List[PairState]:
    """Apply one metarule bottom-up: returns the premise states (none for
    the Close rules, n for a Disjunction).  Provisoes are checked
    constructively and raise ProvisoError when they fail."""

    def need_prec() -> Precedence:
        if prec is None:
            raise ProvisoError("%s needs a precedence to discharge its proviso" % kind.value)
        return prec

    def need_partition() -> SignaturePartition:
        if partition is None:
            raise ProvisoError("%s needs the signature partition" % kind.value)
        return partition

    def add(c: Constraint, lits: Iterable[Literal]) -> Constraint:
        return Constraint.from_literals(set(c.index_part | c.main_part) | set(lits))

    def remove(c: Constraint, lits: Iterable[Literal]) -> Constraint:
        return Constraint.from_literals(set(c.index_part | c.main_part) - set(lits))

    if kind is MetaruleKind.CLOSE1:
        if not _component_unsat(st.a, need_prec()):
            raise ProvisoError("Close1: the A-component is not visibly unsatisfiable")
        return []
    if kind is MetaruleKind.CLOSE2:
        if not _component_unsat(st.b, need_prec()):
            raise ProvisoError("Close2: the B-component is not visibly unsatisfiable")
        return []

    if kind in (MetaruleKind.PROPAGATE1, MetaruleKind.PROPAGATE2):
        lit: Literal = payload
        part = need_partition()
        if not part.is_common_literal(lit):
            raise ProvisoError("%s: literal %r is not AB-common" % (kind.value, lit))
        src, dst = (A_SIDE, B_SIDE) if kind is MetaruleKind.PROPAGATE1 else (B_SIDE, A_SIDE)
        if not _entailed(st.component(src), lit, need_prec()):
            raise ProvisoError("%s: %r is not entailed by the source component" % (kind.value, lit))
        return [st.with_component(dst, add(st.component(dst), [lit]))]

    if kind in (MetaruleKind.DEFINE0, MetaruleKind.DEFINE1, MetaruleKind.DEFINE2):
        name, t = payload
        part = need_partition()
        if name in part.tags:
            raise ProvisoError("%s: constant %r is not fresh" % (kind.value, name))
        c = const(name, t.sort)
        lit = mk_eq(c, t)
        if kind is MetaruleKind.DEFINE0:
            if not part.is_common(t):
                raise ProvisoError("Define0: term %r is not AB-common" % (t,))
            part.tag(name, Locality.COMMON)
            return [PairState(add(st.a, [lit]), add(st.b, [lit]))]
        side = A_SIDE if kind is MetaruleKind.DEFINE1 else B_SIDE
        t_side = part.strict_side(t)
        if t_side not in (None, side):
            raise ProvisoError("%s: term %r is not %s-local" % (kind.value, t, side))
        part.tag(name, Locality.A_STRICT if side == A_SIDE else Locality.B_STRICT)
        return [st.with_component(side, add(st.component(side), [lit]))]

    if kind in (MetaruleKind.DISJUNCTION1, MetaruleKind.DISJUNCTION2):
        branches: Sequence[Sequence[Literal]] = payload
        part = need_partition()
        side = A_SIDE if kind is MetaruleKind.DISJUNCTION1 else B_SIDE
        for branch in branches:
            for lit in branch:
                if part.strict_side(lit.lhs) not in (None, side) or \
                        part.strict_side(lit.rhs) not in (None, side):
                    raise ProvisoError("%s: branch literal %r is not %s-local" % (kind.value, lit, side))
        return [st.with_component(side, add(st.component(side), branch)) for branch in branches]

    if kind in (MetaruleKind.REDPLUS1, MetaruleKind.REDPLUS2):
        lit = payload
        side = A_SIDE if kind is MetaruleKind.REDPLUS1 else B_SIDE
        if not _entailed(st.component(side), lit, need_prec()):
            raise ProvisoError("%s: %r is not entailed" % (kind.value, lit))
        return [st.with_component(side, add(st.component(side), [lit]))]

    if kind in (MetaruleKind.REDMINUS1, MetaruleKind.REDMINUS2):
        lit = payload
        side = A_SIDE if kind is MetaruleKind.REDMINUS1 else B_SIDE
        reduced = remove(st.component(side), [lit])
        if not _entailed(reduced, lit, need_prec()):
            raise ProvisoError("%s: %r is not redundant" % (kind.value, lit))
        return [st.with_component(side, reduced)]

    if kind in (MetaruleKind.CONSTELIM0, MetaruleKind.CONSTELIM1, MetaruleKind.CONSTELIM2):
        name, t = payload
        part = need_partition()
        c = const(name, t.sort)
        lit = mk_eq(c, t)
        occurs_elsewhere = any(
            const(name, t.sort) in l.constants()
            for l in (st.a.literals() + st.b.literals()) if l != lit)
        if occurs_elsewhere or c in _consts(t):
            raise ProvisoError("%s: %r still occurs" % (kind.value, name))
        if kind is MetaruleKind.CONSTELIM0:
            if part.of(name) is not Locality.COMMON:
                raise ProvisoError("ConstElim0: %r is not AB-common" % name)
            return [PairState(remove(st.a, [lit]), remove(st.b, [lit]))]
        side = A_SIDE if kind is MetaruleKind.CONSTELIM1 else B_SIDE
        want = Locality.A_STRICT if side == A_SIDE else Locality.B_STRICT
        if part.of(name) is not want:
            raise ProvisoError("%s: %r is not %s-strict" % (kind.value, name, side))
        return [st.with_component(side, remove(st.component(side), [lit]))]

    raise ProvisoError("unknown metarule %r" % (kind,))


# ---------------------------------------------------------------------------
# Proof tree
# ---------------------------------------------------------------------------


@dataclass
class TreeNode:
    nid: int
    kind: str                     # metarule name, engine step name, root, or leaf marker
    component: str = ""
    payload: object = None        # Literal / (name, Term) / branch formulas / detail string
    added: List[str] = field(default_factory=list)
    removed: List[str] = field(default_factory=list)
    parent: Optional["TreeNode"] = None
    children: List["TreeNode"] = field(default_factory=list)
    interpolant: Optional[Formula] = None

    def child(self, kind: str, component: str = "", payload: object = None,
              added: Iterable[Literal] = (), removed: Iterable[Literal] = (),
              counter: List[int] = None) -> "TreeNode":
        counter[0] += 1
        node = TreeNode(counter[0], kind, component, payload,
                        [repr(l) for l in added], [repr(l) for l in removed], self)
        self.children.append(node)
        return node


@dataclass
class ProofTree:
    root: TreeNode

    def nodes(self) -> List[TreeNode]:
        out: List[TreeNode] = []
        stack = [self.root]
        while stack:
            n = stack.pop()
            out.append(n)
            stack.extend(reversed(n.children))
        return sorted(out, key=lambda n: n.nid)

    def to_trace(self) -> List[dict]:
        def payload_str(n: TreeNode) -> str:
            if n.payload is None:
                return ""
            if isinstance(n.payload, tuple) and len(n.payload) == 2:
                return "%s = %r" % (n.payload[0], n.payload[1])
            return repr(n.payload)

        out = []
        for n in self.nodes():
            entry = {
                "id": n.nid,
                "parent": n.parent.nid if n.parent else None,
                "rule": n.kind,
                "payload": payload_str(n),
                "component": n.component,
                "added": list(n.added),
                "removed": list(n.removed),
            }
            if n.interpolant is not None:
                entry["interpolant"] = repr(n.interpolant)
            out.append(entry)
        return out


def reconstruct(tree: ProofTree) -> Formula:
    """Top-down interpolant computation over a tree whose leaves are all
    closed; raises on an open (sat) leaf."""

    def go(node: TreeNode) -> Formula:
        if node.kind == "Close1":
            phi: Formula = FALSE
        elif node.kind == "Close2":
            phi = TRUE
        elif node.kind == "sat-leaf":
            raise ValueError("open leaf: the tree is not a refutation")
        elif node.kind == "Disjunction1":
            phi = or_([go(ch) for ch in node.children])
        elif node.kind == "Disjunction2":
            phi = and_([go(ch) for ch in node.children])
        else:
            if len(node.children) != 1:
                raise InternalInvariantError("non-branching node %s with %d children"
                                             % (node.kind, len(node.children)))
            phi = go(node.children[0])
            if node.kind == "Propagate1":
                phi = and_([phi, atom(node.payload)])
            elif node.kind == "Propagate2":
                phi = or_([not_(atom(node.payload)), phi])
            elif node.kind == "Define0":
                name, t = node.payload
                phi = substitute_formula(phi, name, t)
        node.interpolant = phi
        return phi

    return go(tree.root)


# ---------------------------------------------------------------------------
# Merge conditions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Blocked:
    literals: Tuple[Tuple[str, str, Literal], ...]  # (condition, side, literal)


MERGEABLE = "mergeable"


def merge_check(st: PairState, partition: SignaturePartition, prec: Precedence):
    """Conditions for A u B to stay consistent and modular: symmetric
    membership of shared literals, shared left-hand sides rewrite to
    shared right-hand sides, diff of shared arrays yields a shared
    index, and a shared write tower forces a shared defined constant."""
    bad: List[Tuple[str, str, Literal]] = []
    for side in (A_SIDE, B_SIDE):
        c = st.component(side)
        other = st.component(B_SIDE if side == A_SIDE else A_SIDE)
        for lit in c.literals():
            if partition.is_common_literal(lit):
                if lit not in other.index_part and lit not in other.main_part:
                    bad.append(("O", side, lit))
            if lit.positive and lit.lhs != lit.rhs and lit in c.main_part:
                rule = orient(lit, prec)
                if rule is not BADLY_ORIENTABLE:
                    if partition.is_common(rule.lhs) and not partition.is_common(rule.rhs):
                        bad.append(("I", side, lit))
                    elif rule.rhs.sym == WR and partition.is_common(rule.rhs) \
                            and not partition.is_common(rule.lhs):
                        bad.append(("III", side, lit))
            if lit.positive and lit.lhs.sym == DIFF and lit in c.index_part:
                if partition.is_common(lit.lhs) and not partition.is_common(lit.rhs):
                    bad.append(("II", side, lit))
    if bad:
        return Blocked(tuple(bad))
    return MERGEABLE


# ---------------------------------------------------------------------------
# The interpolating engine
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UnsatWithInterpolant:
    interpolant: Formula
    raw_interpolant: Formula
    tree: ProofTree


@dataclass(frozen=True)
class SatPair:
    model: Model
    substitution: Dict[str, str]
    merged: Constraint


_ENGINE_STEP_LIMIT = 200_000


class Interpolator:
    def __init__(self, a_lits: Sequence[Literal], b_lits: Sequence[Literal],
                 seed: Optional[int] = None) -> None:
        self.a_raw = list(a_lits)
        self.b_raw = list(b_lits)
        self.gen = FreshGen()
        self.partition = SignaturePartition()
        self.prec = Precedence()
        self.rng = random.Random(seed) if seed is not None else None
        self.counter = [0]
        self.steps = 0
        self.root = TreeNode(0, "root")
        self.subst: Dict[str, str] = {}

        a_consts = self._appearance_order(self.a_raw)
        b_consts = self._appearance_order(self.b_raw)
        a_names = {c.sym for c in a_consts}
        b_names = {c.sym for c in b_consts}
        ordered = a_consts + [c for c in b_consts if c.sym not in a_names]
        for c in ordered:
            if c.sym in a_names and c.sym in b_names:
                self.partition.tag(c.sym, Locality.COMMON)
            elif c.sym in a_names:
                self.partition.tag(c.sym, Locality.A_STRICT)
            else:
                self.partition.tag(c.sym, Locality.B_STRICT)
        # strict constants first (earlier appearance higher), then the
        # shared ones below them
        for c in ordered:
            if self.partition.of(c.sym) is not Locality.COMMON:
                self.prec.insert_bottom(c.sym, c.sort)
        for c in ordered:
            if self.partition.of(c.sym) is Locality.COMMON:
                self.prec.insert_bottom(c.sym, c.sort)

    @staticmethod
    def _appearance_order(lits: Sequence[Literal]) -> List[Term]:
        seen: Dict[str, Term] = {}
        for lit in lits:
            for t in (lit.lhs, lit.rhs):
                for c in _consts(t):
                    seen.setdefault(c.sym, c)
        return list(seen.values())

    # -- fresh constants with partition-aware precedence placement ------

    def fresh_strict(self, sort: Sort, side: str) -> Term:
        t = self.gen.fresh(sort)
        self.partition.tag(t.sym, Locality.A_STRICT if side == A_SIDE else Locality.B_STRICT)
        stricts = [n for n, loc in self.partition.tags.items()
                   if loc is not Locality.COMMON and n in self.prec
                   and self._sort_of(n) is sort and n != t.sym]
        if stricts:
            # lowest strict constant, but still above every shared one
            self.prec.insert_below(t.sym, sort, min(stricts, key=self.prec.key))
        else:
            self.prec.insert_top(t.sym, sort)
        return t

    def fresh_common(self, sort: Sort) -> Term:
        t = self.gen.fresh(sort)
        self.partition.tag(t.sym, Locality.COMMON)
        self.prec.insert_bottom(t.sym, sort)
        return t

    def _sort_of(self, name: str) -> Optional[Sort]:
        return self.prec._sorts.get(name)

    # -- setup -----------------------------------------------------------

    def initial_state(self) -> PairState:
        def prep(lits: List[Literal], side: str) -> Constraint:
            c = Constraint.from_literals(lits)
            before = {x.sym for x in c.constants()}
            c = flatten(c, self.gen.fork())
            c = eliminate_array_disequalities(c, self.gen.fork())
            for x in sorted(c.constants(), key=term_key):
                if x.sym not in before and x.sym not in self.partition.tags:
                    self.partition.tag(x.sym, Locality.A_STRICT if side == A_SIDE else Locality.B_STRICT)
                    stricts = [n for n, loc in self.partition.tags.items()
                               if loc is not Locality.COMMON and n in self.prec
                               and self._sort_of(n) is x.sort and n != x.sym]
                    if stricts:
                        self.prec.insert_below(x.sym, x.sort, min(stricts, key=self.prec.key))
                    else:
                        self.prec.insert_top(x.sym, x.sort)
            return c

        return PairState(prep(self.a_raw, A_SIDE), prep(self.b_raw, B_SIDE))

    # -- main loop ---------------------------------------------------------

    def run(self):
        st = self.initial_state()
        sat = self._solve(st, self.root)
        if sat is not None:
            return sat
        tree = ProofTree(self.root)
        raw = reconstruct(tree)
        rooted = {c.sym for l in self.a_raw for c in l.constants()} & \
                 {c.sym for l in self.b_raw for c in l.constants()}
        extra = {c.sym for c in symbols_of(raw)} - rooted
        if extra:
            raise InternalInvariantError("interpolant leaks constants: %s" % sorted(extra))
        return UnsatWithInterpolant(simplify_formula(raw), raw, tree)

    def _bump(self) -> None:
        self.steps += 1
        if self.steps > _ENGINE_STEP_LIMIT:
            raise InternalInvariantError("interpolation engine exceeded its step budget")

    def _solve(self, st: PairState, node: TreeNode) -> Optional[SatPair]:
        """Drive one leaf to a close, a branch, or a mergeable sat state."""
        while True:
            self._bump()

            # close
            for side, kind in ((A_SIDE, "Close1"), (B_SIDE, "Close2")):
                c = st.component(side)
                fail = check_failure(c, self.prec)
                reflexive = next((l for l in c.literals() if not l.positive and l.lhs == l.rhs), None)
                if fail is not None or reflexive is not None:
                    witness = fail.witness if fail is not None else (reflexive,)
                    node.child(kind, side, tuple(witness), counter=self.counter)
                    return None

            # beta: copy a one-sided shared literal
            copied = self._beta(st, node)
            if copied is not None:
                st, node = copied
                continue

            # merge guessed positive index equalities
            merged = self._merge_index_equalities(st, node)
            if merged is not None:
                st, node = merged
                continue

            # complete the index partitions (branching)
            for side in (A_SIDE, B_SIDE):
                pairs = self._undecided_pairs(st.component(side))
                if pairs:
                    return self._branch_partition(st, node, side)

            # read saturation
            saturated = self._saturate(st, node)
            if saturated is not None:
                st, node = saturated
                continue

            # gamma: repair literals that block merging
            blocked = merge_check(st, self.partition, self.prec)
            if blocked is not MERGEABLE:
                cond, side, lit = blocked.literals[0]
                if cond == "O":
                    raise InternalInvariantError("one-sided shared literal survived beta: %r" % (lit,))
                if lit.lhs.sym == DIFF:
                    st, node = self._term_share_diff(st, node, side, lit)
                    continue
                rule = orient(lit, self.prec)
                if rule.lhs.sym == RD:
                    st, node = self._term_share_read(st, node, side, lit)
                    continue
                if cond == "III":
                    st, node = self._term_share_array(st, node, side, lit)
                    continue
                return self._fix_unsuitable(st, node, side, lit)

            # alpha: completion instructions, mirrored on shared literals
            stepped = self._alpha(st, node)
            if stepped is not None:
                st, node = stepped
                continue

            # quiescent: the pair must be mergeable and satisfiable
            verdict = merge_check(st, self.partition, self.prec)
            if verdict is not MERGEABLE:
                raise InternalInvariantError("quiescent but not mergeable: %r" % (verdict,))
            return self._sat_leaf(st, node)

    # -- steps -------------------------------------------------------------

    def _beta(self, st: PairState, node: TreeNode):
        for side, kind in ((A_SIDE, "Propagate1"), (B_SIDE, "Propagate2")):
            src = st.component(side)
            dst_side = B_SIDE if side == A_SIDE else A_SIDE
            dst = st.component(dst_side)
            for lit in src.literals():
                if not self.partition.is_common_literal(lit):
                    continue
                if lit in dst.index_part or lit in dst.main_part:
                    continue
                before = self._pair_measure(st)
                st2 = st.with_component(dst_side, _add(dst, [lit]))
                self._assert_pair_decrease(before, st2, "beta %r" % (lit,))
                child = node.child(kind, dst_side, lit, added=[lit], counter=self.counter)
                return st2, child
        return None

    def _merge_index_equalities(self, st: PairState, node: TreeNode):
        for side in (A_SIDE, B_SIDE):
            c = st.component(side)
            for lit in c.literals():
                if not (lit.positive and lit in c.index_part and lit.lhs.is_const()):
                    continue
                x, y = lit.lhs, lit.rhs
                rep, gone = (x, y) if self.prec.key(x.sym) < self.prec.key(y.sym) else (y, x)
                common = self.partition.is_common_literal(lit)
                sides = (A_SIDE, B_SIDE) if common else (side,)
                st2 = st
                for s in sides:
                    comp = _remove(st2.component(s), [lit])
                    comp = substitute_constraint(comp, {gone: rep})
                    st2 = st2.with_component(s, comp)
                self.subst[gone.sym] = rep.sym
                child = node.child("merge-index", "/".join(sides), lit, removed=[lit],
                                   counter=self.counter)
                return st2, child
        return None

    def _undecided_pairs(self, c: Constraint) -> List[Tuple[Term, Term]]:
        idxs = c.constants_of_sort(Sort.INDEX)
        out = []
        for x, y in itertools.combinations(idxs, 2):
            if mk_neq(x, y) not in c.index_part:
                out.append((x, y))
        return out

    def _branch_partition(self, st: PairState, node: TreeNode, side: str) -> Optional[SatPair]:
        c = st.component(side)
        idxs = c.constants_of_sort(Sort.INDEX)
        separated = {frozenset((l.lhs, l.rhs)) for l in c.index_part
                     if not l.positive and l.lhs.is_const()}
        choices = [p for p in enumerate_partitions(idxs)
                   if all(not any(pair <= cls for cls in p.classes) for pair in separated)]
        if self.rng is not None:
            self.rng.shuffle(choices)
        kind = "Disjunction1" if side == A_SIDE else "Disjunction2"
        branch = node.child(kind, side, "index partition of %s" % [i.sym for i in idxs],
                            counter=self.counter)
        sat = None
        for choice in choices:
            decisions: List[Literal] = []
            for cls in choice.classes:
                for x, y in itertools.combinations(sorted(cls, key=term_key), 2):
                    decisions.append(mk_eq(x, y))
            for c1, c2 in itertools.combinations(choice.classes, 2):
                for x in sorted(c1, key=term_key):
                    for y in sorted(c2, key=term_key):
                        if mk_neq(x, y) not in c.index_part:
                            decisions.append(mk_neq(x, y))
            child_state = st.with_component(side, _add(c, decisions))
            child = branch.child("guess", side, [repr(d) for d in decisions],
                                 added=decisions, counter=self.counter)
            got = self._solve(child_state, child)
            if got is not None and sat is None:
                sat = got
                break
        if not branch.children:
            raise InternalInvariantError("partition guessing produced no branches")
        return sat

    def _saturate(self, st: PairState, node: TreeNode):
        # invariant (i2): rd(a,i) must reduce to an element constant for
        # every array/index pair occurring in a component
        for side in (A_SIDE, B_SIDE):
            c = st.component(side)
            rs = rewrite_view(c, self.prec)
            for a in c.constants_of_sort(Sort.ARRAY):
                for i in c.constants_of_sort(Sort.INDEX):
                    t = Term(RD, (a, i), Sort.ELEM)
                    nf = rs.normalize(t)
                    if nf.is_const() and nf.sort is Sort.ELEM:
                        continue
                    if self.partition.is_common(t):
                        e = self.fresh_common(Sort.ELEM)
                        lit = mk_eq(t, e)
                        st2 = PairState(_add(st.a, [lit]), _add(st.b, [lit]))
                        child = node.child("Define0", "", (e.sym, t), added=[lit],
                                           counter=self.counter)
                    else:
                        e = self.fresh_strict(Sort.ELEM, side)
                        lit = mk_eq(t, e)
                        st2 = st.with_component(side, _add(c, [lit]))
                        kind = "Define1" if side == A_SIDE else "Define2"
                        child = node.child(kind, side, (e.sym, t), added=[lit],
                                           counter=self.counter)
                    return st2, child
        return None

    # -- gamma: Term Sharing and the degree reduction ----------------------

    def _reusable_common(self, c: Constraint, match) -> Optional[Literal]:
        for lit in c.literals():
            if lit.positive and self.partition.is_common_literal(lit) and match(lit):
                return lit
        return None

    def _term_share_read(self, st: PairState, node: TreeNode, side: str, lit: Literal):
        """rd(c,i) -> d with a private d: rename d to a shared constant."""
        t = lit.lhs
        d = lit.rhs
        reuse = self._reusable_common(st.component(side), lambda l: l.lhs == t and l != lit)
        return self._term_share(st, node, side, lit, d, t, reuse)

    def _term_share_diff(self, st: PairState, node: TreeNode, side: str, lit: Literal):
        """diff(a,b) = k with a private k: rename k to a shared constant."""
        t = lit.lhs
        k = lit.rhs
        reuse = self._reusable_common(st.component(side), lambda l: l.lhs == t and l != lit)
        return self._term_share(st, node, side, lit, k, t, reuse)

    def _term_share_array(self, st: PairState, node: TreeNode, side: str, lit: Literal):
        """a -> wr(c,I,E) with a private a and shared tower: rename a."""
        tower = lit.rhs
        a = lit.lhs
        reuse = self._reusable_common(st.component(side),
                                      lambda l: l.rhs == tower and l.lhs.is_const() and l != lit)

        if reuse is None:
            base = split_write(tower)[0]
            fresh = self.gen.fresh(Sort.ARRAY)
            self.partition.tag(fresh.sym, Locality.COMMON)
            self.prec.insert_above(fresh.sym, Sort.ARRAY, base.sym)
            return self._finish_term_share(st, node, side, lit, a, tower, fresh, None)
        return self._term_share(st, node, side, lit, a, tower, reuse)

    def _term_share(self, st: PairState, node: TreeNode, side: str, lit: Literal,
                    strict_const: Term, body: Term, reuse: Optional[Literal]):
        if reuse is None:
            fresh = self.fresh_common(strict_const.sort)
            return self._finish_term_share(st, node, side, lit, strict_const, body, fresh, None)
        target = reuse.rhs if reuse.rhs.is_const() and reuse.lhs == body else reuse.lhs
        return self._finish_term_share(st, node, side, lit, strict_const, body, target, reuse)

    def _finish_term_share(self, st: PairState, node: TreeNode, side: str, lit: Literal,
                           strict_const: Term, body: Term, target: Term,
                           reuse: Optional[Literal]):
        noncommon_before = self._noncommon_count(st)
        if reuse is None:
            deflit = mk_eq(target, body) if target.is_const() and body.sym == WR else mk_eq(body, target)
            st = PairState(_add(st.a, [deflit]), _add(st.b, [deflit]))
            child = node.child("Define0", "", (target.sym, body), added=[deflit],
                               counter=self.counter)
        else:
            child = node.child("term-share-reuse", side, reuse, counter=self.counter)
        comp = substitute_constraint(st.component(side), {strict_const: target})
        st = st.with_component(side, comp)
        self.subst[strict_const.sym] = target.sym
        if not self._noncommon_count(st) < noncommon_before:
            raise InternalInvariantError("term sharing did not shrink the private signature")
        return st, child

    def _split_tower(self, lit: Literal) -> Tuple[Term, Term, List, List, List, List]:
        rs = rewrite_view(Constraint(), self.prec)
        tower = rs.schema_normalize(lit.rhs)
        base, idxs, elms = split_write(tower)
        common_part = [(i, e) for i, e in zip(idxs, elms)
                       if self.partition.is_common(i) and self.partition.is_common(e)]
        strict_part = [(i, e) for i, e in zip(idxs, elms)
                       if not (self.partition.is_common(i) and self.partition.is_common(e))]
        i1 = [i for i, _ in common_part]
        e1 = [e for _, e in common_part]
        i2 = [i for i, _ in strict_part]
        e2 = [e for _, e in strict_part]
        return lit.lhs, base, i1, e1, i2, e2

    def _fix_unsuitable(self, st: PairState, node: TreeNode, side: str,
                        lit: Literal) -> Optional[SatPair]:
        """c -> wr(c', I, E) with a shared left-hand side but private
        tower positions: guess the shared prefix, then reduce the number
        of private positions through the difference witness."""
        c0, base, i1, e1, i2, e2 = self._split_tower(lit)
        degree = len(i2)
        if degree == 0:
            raise InternalInvariantError("literal %r is not unsuitable" % (lit,))
        kind = "Disjunction1" if side == A_SIDE else "Disjunction2"
        prefix = mk_nested_write(base, i1, e1)
        branch = node.child(kind, side,
                            [repr(mk_eq(c0, prefix)), "(not %s)" % repr(mk_eq(c0, prefix))],
                            counter=self.counter)

        # branch 1: c equals the shared prefix
        guess_true: List[Literal] = [] if c0 == prefix else [mk_eq(c0, prefix)]
        reads = [mk_eq(Term(RD, (base, i), Sort.ELEM), e) for i, e in zip(i2, e2)]
        comp = _remove(st.component(side), [lit])
        comp = _add(comp, guess_true + reads)
        before = self._pair_measure(st)
        st1 = st.with_component(side, comp)
        self._assert_pair_decrease(before, st1, "tower prefix guess")
        child1 = branch.child("guess", side, "prefix holds", added=guess_true + reads,
                              removed=[lit], counter=self.counter)
        sat = self._solve(st1, child1)
        if sat is not None:
            return sat

        # branch 2: c differs from the shared prefix at the diff witness
        child2 = branch.child("guess", side, "prefix fails", counter=self.counter)
        st2, child2, ipt, dv = self._degree_reduction(st, child2, side, lit, base, i1, e1, i2, e2)
        return self._solve_degree_branches(st2, child2, side, lit, i2, e2, degree, ipt, dv)

    def _degree_reduction(self, st: PairState, node: TreeNode, side: str, lit: Literal,
                          base: Term, i1: List[Term], e1: List[Term],
                          i2: List[Term], e2: List[Term]):
        c0 = lit.lhs
        if i1:
            cmid = self.gen.fresh(Sort.ARRAY)
            self.partition.tag(cmid.sym, Locality.COMMON)
            self.prec.insert_between(cmid.sym, Sort.ARRAY, c0.sym, base.sym)
            deflit = mk_eq(cmid, mk_nested_write(base, i1, e1))
            st = PairState(_add(st.a, [deflit]), _add(st.b, [deflit]))
            node = node.child("Define0", "", (cmid.sym, mk_nested_write(base, i1, e1)),
                              added=[deflit], counter=self.counter)
        else:
            cmid = base
        comp = _remove(st.component(side), [lit])
        comp = _add(comp, [mk_eq(c0, mk_nested_write(cmid, i2, e2))])
        st = st.with_component(side, comp)

        ipt = self.fresh_common(Sort.INDEX)
        dv = self.fresh_common(Sort.ELEM)
        dv2 = self.fresh_common(Sort.ELEM)
        defs = [mk_eq(Term(DIFF, (c0, cmid), Sort.INDEX), ipt),
                mk_eq(Term(RD, (c0, ipt), Sort.ELEM), dv),
                mk_eq(Term(RD, (cmid, ipt), Sort.ELEM), dv2)]
        for name, body, dlit in ((ipt.sym, Term(DIFF, (c0, cmid), Sort.INDEX), defs[0]),
                                 (dv.sym, Term(RD, (c0, ipt), Sort.ELEM), defs[1]),
                                 (dv2.sym, Term(RD, (cmid, ipt), Sort.ELEM), defs[2])):
            st = PairState(_add(st.a, [dlit]), _add(st.b, [dlit]))
            node = node.child("Define0", "", (name, body), added=[dlit], counter=self.counter)
        comp = _add(st.component(side), [mk_neq(dv, dv2)])
        st = st.with_component(side, comp)
        node = node.child("step", side, "difference witness for the failed prefix",
                          added=[mk_neq(dv, dv2)], counter=self.counter)
        return st, node, ipt, dv

    def _solve_degree_branches(self, st: PairState, node: TreeNode, side: str,
                               lit: Literal, i2: List[Term], e2: List[Term],
                               degree: int, ipt: Term, dv: Term) -> Optional[SatPair]:
        cases = list(zip(i2, e2))
        if len(cases) == 1:
            kids = [(node, cases[0])]
        else:
            kind = "Disjunction1" if side == A_SIDE else "Disjunction2"
            branch = node.child(kind, side,
                                ["%s = %s and %s = %s" % (ipt.sym, i.sym, dv.sym, e.sym)
                                 for i, e in cases], counter=self.counter)
            kids = [(branch.child("guess", side, "%s = %s" % (ipt.sym, i.sym),
                                  counter=self.counter), (i, e))
                    for i, e in cases]
        sat = None
        for child, (ik, ek) in kids:
            noncommon_before = self._noncommon_count(st)
            st_k = st
            for gone, target in ((ik, ipt), (ek, dv)):
                if gone == target:
                    continue
                sides = (A_SIDE, B_SIDE) if self.partition.is_common(gone) else (side,)
                for s in sides:
                    st_k = st_k.with_component(s, substitute_constraint(st_k.component(s),
                                                                        {gone: target}))
                self.subst[gone.sym] = target.sym
            if not self._noncommon_count(st_k) < noncommon_before:
                raise InternalInvariantError("degree reduction did not shrink the private signature")
            new_lit = next((l for l in st_k.component(side).main_part
                            if l.positive and l.lhs == lit.lhs and l.rhs.sym == WR), None)
            if new_lit is not None:
                new_degree = len(self._split_tower(new_lit)[4])
                if new_degree >= degree:
                    raise InternalInvariantError("degree did not decrease: %d -> %d"
                                                 % (degree, new_degree))
            got = self._solve(st_k, child)
            if got is not None and sat is None:
                sat = got
                break
        return sat

    # -- alpha with mirroring ----------------------------------------------

    def _alpha(self, st: PairState, node: TreeNode):
        for side in (A_SIDE, B_SIDE):
            c = st.component(side)
            instr = find_instruction(c, self.prec)
            if instr is None:
                continue
            removed_common = [l for l in instr.removed if self.partition.is_common_literal(l)]
            before = self._pair_measure(st)
            if removed_common:
                if len(removed_common) != len(instr.removed):
                    raise InternalInvariantError(
                        "instruction mixes shared and private parents: %r" % (instr,))
                bad = [l for l in instr.added if not self.partition.is_common_literal(l)]
                if bad:
                    raise InternalInvariantError(
                        "shared parents produced private literals: %r" % (bad,))
                other = B_SIDE if side == A_SIDE else A_SIDE
                oc = st.component(other)
                missing = [l for l in instr.removed
                           if l not in oc.index_part and l not in oc.main_part]
                if missing:
                    raise InternalInvariantError(
                        "shared parents missing from the %s component: %r" % (other, missing))
                st2 = PairState(apply_instruction(st.a, instr), apply_instruction(st.b, instr))
                label = "%s/both" % instr.name
            else:
                st2 = st.with_component(side, apply_instruction(c, instr))
                label = "%s/%s" % (instr.name, side)
            self._assert_pair_decrease(before, st2, label)
            child = node.child("alpha:" + instr.name, side, None,
                               added=instr.added, removed=instr.removed, counter=self.counter)
            return st2, child
        return None

    # -- sat leaf ------------------------------------------------------------

    def _sat_leaf(self, st: PairState, node: TreeNode) -> SatPair:
        node.child("sat-leaf", "", None, counter=self.counter)
        merged = Constraint.from_literals(st.a.literals() + st.b.literals())
        mod = is_modular(merged, self.prec)
        if mod is not True:
            raise InternalInvariantError("merged pair is not modular: %r" % (mod,))
        if decide_modular_sat(merged, self.prec) is not True:
            raise InternalInvariantError("merged pair has a joinable disequality")
        model = build_model(merged, self.prec)
        return SatPair(model, dict(self.subst), merged)

    # -- measures --------------------------------------------------------------

    def _pair_measure(self, st: PairState):
        entries = []
        in_a = st.a.index_part | st.a.main_part
        in_b = st.b.index_part | st.b.main_part
        for lit in in_a | in_b:
            tag = 0 if (lit in in_a and lit in in_b) else (1 if lit in in_a else 2)
            entries.append((literal_measure(lit), tag))
        return entries

    def _assert_pair_decrease(self, before, st2: PairState, what: str) -> None:
        after = self._pair_measure(st2)

        def ms_eq(m1, m2):
            return sorted(map(term_key, m1)) == sorted(map(term_key, m2))

        def ms_gt(m1, m2):
            from .ordering import lpo_gt
            return _multiset_gt(m1, m2, lambda s, t: s == t,
                                lambda s, t: lpo_gt(s, t, self.prec))

        def pair_eq(p1, p2):
            return ms_eq(p1[0], p2[0]) and p1[1] == p2[1]

        def pair_gt(p1, p2):
            if ms_gt(p1[0], p2[0]):
                return True
            return ms_eq(p1[0], p2[0]) and p1[1] > p2[1]

        if not _multiset_gt(before, after, pair_eq, pair_gt):
            raise InternalInvariantError("pair measure did not decrease on %s" % what)

    def _noncommon_count(self, st: PairState) -> int:
        names = {c.sym for c in st.a.constants() | st.b.constants()}
        return sum(1 for n in names if self.partition.tags.get(n) is not Locality.COMMON)


def _add(c: Constraint, lits: Iterable[Literal]) -> Constraint:
    return Constraint.from_literals(set(c.index_part | c.main_part) | set(lits))


def _remove(c: Constraint, lits: Iterable[Literal]) -> Constraint:
    return Constraint.from_literals(set(c.index_part | c.main_part) - set(lits))


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------


def propagate_common(st: PairState, partition: SignaturePartition,
                     prec: Precedence) -> PairState:
    """Copy every one-sided shared literal to the other component."""
    changed = True
    while changed:
        changed = False
        for side in (A_SIDE, B_SIDE):
            src = st.component(side)
            dst_side = B_SIDE if side == A_SIDE else A_SIDE
            dst = st.component(dst_side)
            for lit in src.literals():
                if partition.is_common_literal(lit) and \
                        lit not in dst.index_part and lit not in dst.main_part:
                    st = st.with_component(dst_side, _add(dst, [lit]))
                    changed = True
    return st


def term_share(st: PairState, lit: Literal, partition: SignaturePartition,
               prec: Precedence, gen: FreshGen) -> PairState:
    """Rename the private constant of ``lit`` (whose other side is a
    shared term) into a fresh shared constant, in both components."""
    if lit.lhs.is_const() and not partition.is_common(lit.lhs) and partition.is_common(lit.rhs):
        strict, body = lit.lhs, lit.rhs
    elif lit.rhs.is_const() and not partition.is_common(lit.rhs) and partition.is_common(lit.lhs):
        strict, body = lit.rhs, lit.lhs
    else:
        raise ValueError("not a term-sharing candidate: %r" % (lit,))
    side = partition.strict_side(strict)
    fresh = gen.fresh(strict.sort)
    partition.tag(fresh.sym, Locality.COMMON)
    if body.sym == WR:
        prec.insert_above(fresh.sym, Sort.ARRAY, split_write(body)[0].sym)
        deflit = mk_eq(fresh, body)
    else:
        prec.insert_bottom(fresh.sym, fresh.sort)
        deflit = mk_eq(body, fresh)
    st = PairState(_add(st.a, [deflit]), _add(st.b, [deflit]))
    comp = substitute_constraint(st.component(side), {strict: fresh})
    return st.with_component(side, comp)


def fix_unsuitable(st: PairState, lit: Literal, partition: SignaturePartition,
                   prec: Precedence, gen: FreshGen) -> List[PairState]:
    """Both guesses of the tower-prefix case split, as plain states (the
    engine drives the full recursion; this is the one-step interface)."""
    itp = Interpolator.__new__(Interpolator)
    itp.partition = partition
    itp.prec = prec
    itp.gen = gen
    itp.counter = [0]
    itp.subst = {}
    side = partition.strict_side(lit.rhs)
    if side is None or not partition.is_common(lit.lhs):
        raise ValueError("not an unsuitable tower literal: %r" % (lit,))
    c0, base, i1, e1, i2, e2 = itp._split_tower(lit)
    if not i2:
        raise ValueError("literal %r has degree 0" % (lit,))
    prefix = mk_nested_write(base, i1, e1)
    comp = _remove(st.component(side), [lit])
    guess = [] if c0 == prefix else [mk_eq(c0, prefix)]
    reads = [mk_eq(Term(RD, (base, i), Sort.ELEM), e) for i, e in zip(i2, e2)]
    branch1 = st.with_component(side, _add(comp, guess + reads))
    dummy = TreeNode(0, "root")
    branch2, _, _, _ = itp._degree_reduction(st, dummy, side, lit, base, i1, e1, i2, e2)
    return [branch1, branch2]


def interpolate(a_lits: Iterable[Literal], b_lits: Iterable[Literal],
                seed: Optional[int] = None):
    """Decide A and B jointly; on unsat return UnsatWithInterpolant, on
    sat return SatPair with a model of the union."""
    return Interpolator(list(a_lits), list(b_lits), seed).run()
