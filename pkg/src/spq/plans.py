"""Plan classes, their validity checks, derived variable sets and exponent calculus.

Variable sets are bitmasks over ``Query.index``. A plan is one of ``GJPlan``,
``PTPlan``, ``PTCPlan``, ``PTCRPlan``, ``RPTPlan`` or ``TDPlan``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Mapping, Union

from .query import UNIFORM, Atom, CardinalityProfile, Query, QueryError, bits, rho


class InvalidPlan(ValueError):
    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


# ---------------------------------------------------------------- exponents


@dataclass(frozen=True)
class SpaceTimeExponent:
    s: Fraction
    t: Fraction

    def __post_init__(self):
        object.__setattr__(self, "s", Fraction(self.s))
        object.__setattr__(self, "t", Fraction(self.t))
        if self.s < 0 or self.t < 0:
            raise ValueError("exponents are nonnegative")

    def __iter__(self):
        return iter((self.s, self.t))

    def __str__(self) -> str:
        return f"({self.s}, {self.t})"


def dominates(e1: SpaceTimeExponent, e2: SpaceTimeExponent) -> str:
    """``strict`` if e1 strictly dominates e2, ``weak`` if e2 strictly dominates e1."""
    le = e1.s <= e2.s and e1.t <= e2.t
    ge = e2.s <= e1.s and e2.t <= e1.t
    if le and ge:
        return "equal"
    if le:
        return "strict"
    if ge:
        return "weak"
    return "incomparable"


# ---------------------------------------------------------------- pseudo-trees


class PseudoTree:
    """Rooted tree given by a parent map (root maps to None)."""

    __slots__ = ("parent", "_kids", "_root")

    def __init__(self, parent: Mapping[str, str | None]):
        self.parent = dict(parent)
        kids: dict[str, list[str]] = {v: [] for v in self.parent}
        roots = []
        for v, p in self.parent.items():
            if p is None:
                roots.append(v)
            elif p in kids:
                kids[p].append(v)
        self._kids = {v: tuple(sorted(ch)) for v, ch in kids.items()}
        self._root = roots[0] if len(roots) == 1 else None

    @classmethod
    def chain(cls, order: Iterable[str]) -> "PseudoTree":
        order = list(order)
        return cls({v: (order[i - 1] if i else None) for i, v in enumerate(order)})

    @classmethod
    def from_nested(cls, obj: Mapping) -> "PseudoTree":
        parent: dict[str, str | None] = {}

        def walk(node, up):
            v = node["var"]
            if v in parent:
                raise ValueError(f"variable {v} appears twice in the tree")
            parent[v] = up
            for ch in node.get("children", ()):
                walk(ch, v)

        walk(obj, None)
        return cls(parent)

    def to_nested(self) -> dict:
        def walk(v):
            return {"var": v, "children": [walk(c) for c in self._kids[v]]}

        return walk(self.root)

    @property
    def root(self) -> str:
        if self._root is None:
            raise ValueError("tree does not have exactly one root")
        return self._root

    @property
    def nodes(self) -> tuple[str, ...]:
        return tuple(self.parent)

    def children(self, v: str) -> tuple[str, ...]:
        return self._kids[v]

    def structural_problems(self) -> list[str]:
        roots = [v for v, p in self.parent.items() if p is None]
        if len(roots) != 1:
            return [f"tree has {len(roots)} roots"]
        bad = [v for v, p in self.parent.items() if p is not None and p not in self.parent]
        if bad:
            return [f"parent of {v} is not a tree node" for v in bad]
        seen = set()
        stack = [roots[0]]
        while stack:
            v = stack.pop()
            seen.add(v)
            stack.extend(self._kids[v])
        if len(seen) != len(self.parent):
            return ["tree contains a cycle"]
        return []

    def preorder(self) -> list[str]:
        out, stack = [], [self.root]
        while stack:
            v = stack.pop()
            out.append(v)
            stack.extend(reversed(self._kids[v]))
        return out

    def __eq__(self, other: object) -> bool:
        return isinstance(other, PseudoTree) and self.parent == other.parent

    def __hash__(self) -> int:
        return hash(frozenset(self.parent.items()))

    def __repr__(self) -> str:
        return f"PseudoTree({self._render(self.root) if self._root else self.parent})"

    def _render(self, v: str) -> str:
        kids = self._kids[v]
        if not kids:
            return v
        if len(kids) == 1:
            return f"{v}-{self._render(kids[0])}"
        return f"{v}-{{{', '.join(self._render(c) for c in kids)}}}"


# ---------------------------------------------------------------- plan types


@dataclass(frozen=True)
class GJPlan:
    order: tuple[str, ...]
    kind = "gj"


@dataclass(frozen=True)
class PTPlan:
    tree: PseudoTree
    kind = "pt"


@dataclass(frozen=True)
class PTCPlan:
    tree: PseudoTree
    caches: frozenset
    kind = "ptc"

    def __post_init__(self):
        object.__setattr__(self, "caches", frozenset(self.caches))


@dataclass(frozen=True)
class PTCRPlan:
    tree: PseudoTree
    cache_size: tuple[tuple[str, int], ...] = ()
    kind = "ptcr"

    def __post_init__(self):
        items = self.cache_size.items() if isinstance(self.cache_size, Mapping) else self.cache_size
        object.__setattr__(self, "cache_size", tuple(sorted((v, int(c)) for v, c in items if int(c) != 0)))

    def c(self, v: str) -> int:
        for k, c in self.cache_size:
            if k == v:
                return c
        return 0


@dataclass(frozen=True)
class RPTPlan:
    base: PTCRPlan
    inputs: tuple[str, ...] = ()
    replacements: tuple[tuple[str, "RPTPlan"], ...] = ()
    kind = "rpt"

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "replacements", tuple(sorted(self.replacements, key=lambda r: r[0])))


@dataclass(frozen=True)
class TreeDecomposition:
    bags: tuple[tuple[str, frozenset], ...]
    parent: tuple[tuple[str, str | None], ...]
    covering: tuple[tuple[str, str], ...]

    def __post_init__(self):
        def norm(x):
            return tuple(sorted((x.items() if isinstance(x, Mapping) else x), key=lambda kv: kv[0]))

        object.__setattr__(self, "bags", tuple((n, frozenset(b)) for n, b in norm(self.bags)))
        object.__setattr__(self, "parent", norm(self.parent))
        object.__setattr__(self, "covering", norm(self.covering))

    @property
    def bag(self) -> dict[str, frozenset]:
        return dict(self.bags)

    @property
    def parent_of(self) -> dict[str, str | None]:
        return dict(self.parent)

    @property
    def cover_of(self) -> dict[str, str]:
        return dict(self.covering)

    @property
    def nodes(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.bags)

    @property
    def root(self) -> str:
        roots = [n for n, p in self.parent if p is None]
        if len(roots) != 1:
            raise ValueError("decomposition does not have exactly one root")
        return roots[0]

    def children(self, node: str) -> list[str]:
        return sorted(n for n, p in self.parent if p == node)

    def postorder(self) -> list[str]:
        out = []

        def walk(n):
            for c in self.children(n):
                walk(c)
            out.append(n)

        walk(self.root)
        return out

    def separator(self, node: str, q: Query) -> tuple[str, ...]:
        """Z^v: bag intersected with the parent bag, head variables at the root."""
        p = self.parent_of[node]
        if p is None:
            return q.head
        mine, theirs = self.bag[node], self.bag[p]
        return tuple(v for v in q.variables if v in mine and v in theirs)


@dataclass(frozen=True)
class TDPlan:
    td: TreeDecomposition
    inner: tuple[tuple[str, Any], ...]
    kind = "td"

    def __post_init__(self):
        items = self.inner.items() if isinstance(self.inner, Mapping) else self.inner
        object.__setattr__(self, "inner", tuple(sorted(items, key=lambda kv: kv[0])))

    @property
    def inner_of(self) -> dict[str, Any]:
        return dict(self.inner)


Plan = Union[GJPlan, PTPlan, PTCPlan, PTCRPlan, RPTPlan, TDPlan]


def tree_of(plan: Plan) -> PseudoTree:
    if isinstance(plan, (PTPlan, PTCPlan, PTCRPlan)):
        return plan.tree
    if isinstance(plan, RPTPlan):
        return plan.base.tree
    raise TypeError(f"{type(plan).__name__} has no pseudo-tree")


# ---------------------------------------------------------------- atom roles


@dataclass(frozen=True)
class AtomRole:
    """Where an atom of a (sub-)query reads its data.

    ``source`` names a database relation (or a TD message); ``columns`` gives the
    source column of each atom variable; support-only atoms contribute 1.
    """

    source: str
    columns: tuple[int, ...]
    annotated: bool = True
    message: bool = False


def identity_roles(q: Query) -> dict[str, AtomRole]:
    return {a.name: AtomRole(a.name, tuple(range(len(a.vars)))) for a in q.atoms}


def restrict_query(
    q: Query, roles: Mapping[str, AtomRole], keep: int, annotated_if: int, head: Iterable[str], name: str
) -> tuple[Query, dict[str, AtomRole]]:
    """Atoms meeting ``keep`` projected onto it; annotated only if they meet ``annotated_if``."""
    atoms, new_roles = [], {}
    for a, am in zip(q.atoms, q.atom_masks):
        if not am & keep:
            continue
        pos = [i for i, v in enumerate(a.vars) if keep >> q.index[v] & 1]
        role = roles[a.name]
        atoms.append(Atom(a.name, tuple(a.vars[i] for i in pos)))
        new_roles[a.name] = AtomRole(
            role.source,
            tuple(role.columns[i] for i in pos),
            role.annotated and bool(am & annotated_if) and len(pos) == len(a.vars),
            role.message,
        )
    return Query(tuple(head), tuple(atoms), name=name), new_roles


# ---------------------------------------------------------------- derived sets


class TreeInfo:
    """Ancestor/descendant/context sets of a valid pseudo-tree, as bitmasks."""

    def __init__(self, q: Query, tree: PseudoTree):
        self.q = q
        self.tree = tree
        idx = q.index
        n = len(q.variables)
        self.order = [idx[v] for v in tree.preorder()]
        self.parent = [-1] * n
        self.children: list[list[int]] = [[] for _ in range(n)]
        self.depth = [0] * n
        self.anc = [0] * n
        for v in self.order:
            name = q.variables[v]
            p = tree.parent[name]
            if p is not None:
                pi = idx[p]
                self.parent[v] = pi
                self.children[pi].append(v)
                self.depth[v] = self.depth[pi] + 1
                self.anc[v] = self.anc[pi] | (1 << pi)
        self.descc = [1 << v for v in range(n)]
        nbr_desc = list(q.neighbors)
        for v in reversed(self.order):
            p = self.parent[v]
            if p >= 0:
                self.descc[p] |= self.descc[v]
                nbr_desc[p] |= nbr_desc[v]
        self.con = [self.anc[v] & nbr_desc[v] for v in range(n)]
        x = q.head_mask
        self.outt = [d & x for d in self.descc]
        self.out = [(d & ~(1 << v)) & x for v, d in enumerate(self.descc)]
        self.root = self.order[0]

    def ancc(self, v: int) -> int:
        return self.anc[v] | (1 << v)

    def by_depth(self, mask: int) -> list[int]:
        return sorted(bits(mask), key=lambda v: self.depth[v])

    def deepest(self, mask: int) -> int:
        return max(bits(mask), key=lambda v: self.depth[v])

    def last_var(self, atom_mask: int) -> int:
        return self.deepest(atom_mask)


class PTCRInfo(TreeInfo):
    """Adds icon/scon and ria/raexc/ra (with an optional input chain on top)."""

    def __init__(self, q: Query, tree: PseudoTree, cache_size, inputs: Iterable[str] = ()):
        super().__init__(q, tree)
        n = len(q.variables)
        size = cache_size if callable(cache_size) else (lambda v, cs=dict(cache_size): cs.get(v, 0))
        self.inputs = [q.index[v] for v in inputs]
        input_mask = q.mask(inputs)
        self.input_mask = input_mask
        self.icon = [0] * n
        self.scon = [0] * n
        self.ria = [0] * n
        self.ra = [0] * n
        for v in self.order:
            if input_mask >> v & 1:
                self.ra[v] = self.ancc(v)
                continue
            con = self.by_depth(self.con[v])
            k = min(max(size(q.variables[v]), 0), len(con))
            scon = con[len(con) - k :]
            icon = con[: len(con) - k]
            for u in scon:
                self.scon[v] |= 1 << u
            for u in icon:
                self.icon[v] |= 1 << u
            if icon:
                self.ria[v] = self.ra[self.parent[v]] & self.ancc(icon[-1])
            self.ra[v] = self.ria[v] | self.scon[v] | (1 << v)

    def raexc(self, v: int) -> int:
        return self.ria[v] | self.scon[v]


def context(q: Query, tree: PseudoTree, a: str) -> set[str]:
    info = TreeInfo(q, tree)
    return set(q.names(info.con[q.index[a]]))


def split_context(q: Query, plan: PTCRPlan, a: str) -> tuple[set[str], set[str]]:
    info = PTCRInfo(q, plan.tree, dict(plan.cache_size))
    v = q.index[a]
    return set(q.names(info.icon[v])), set(q.names(info.scon[v]))


def relevant_ancestors(q: Query, plan: PTCRPlan, a: str) -> tuple[set[str], set[str], set[str]]:
    info = PTCRInfo(q, plan.tree, dict(plan.cache_size))
    v = q.index[a]
    return set(q.names(info.ria[v])), set(q.names(info.raexc(v))), set(q.names(info.ra[v]))


# ---------------------------------------------------------------- sub-queries


def rpt_subquery(
    q: Query, roles: Mapping[str, AtomRole], info: PTCRInfo, anchor: int
) -> tuple[Query, dict[str, AtomRole], tuple[str, ...]]:
    """Query restricted to desc(A) u ra(A) with head scon(A) u outt(A); returns (query, roles, inputs)."""
    keep = info.descc[anchor] | info.ra[anchor]
    head_mask = info.scon[anchor] | info.outt[anchor]
    head = [q.variables[v] for v in info.by_depth(info.scon[anchor])]
    head += [v for v in q.head if info.outt[anchor] >> q.index[v] & 1]
    assert q.mask(head) == head_mask
    sub, sub_roles = restrict_query(q, roles, keep, info.descc[anchor], head, f"{q.name}_{q.variables[anchor]}")
    inputs = tuple(q.variables[v] for v in info.by_depth(info.ria[anchor]))
    return sub, sub_roles, inputs


def message_name(q: Query, node: str) -> str:
    name = f"M_{node}"
    taken = {a.name for a in q.atoms}
    while name in taken:
        name += "_"
    return name


def td_subqueries(
    q: Query, td: TreeDecomposition, roles: Mapping[str, AtomRole] | None = None
) -> dict[str, tuple[Query, dict[str, AtomRole]]]:
    """Per bag: Q^v(Z^v) over the atoms restricted to the bag plus one message atom per child."""
    roles = roles if roles is not None else identity_roles(q)
    bag = td.bag
    cover = td.cover_of
    out = {}
    for node in td.nodes:
        keep = q.mask(bag[node])
        atoms, new_roles = [], {}
        for a, am in zip(q.atoms, q.atom_masks):
            if not am & keep:
                continue
            pos = [i for i, v in enumerate(a.vars) if keep >> q.index[v] & 1]
            role = roles[a.name]
            atoms.append(Atom(a.name, tuple(a.vars[i] for i in pos)))
            new_roles[a.name] = AtomRole(
                role.source,
                tuple(role.columns[i] for i in pos),
                role.annotated and cover.get(a.name) == node,
                role.message,
            )
        for child in td.children(node):
            z = td.separator(child, q)
            if not z:
                continue
            mname = message_name(q, child)
            atoms.append(Atom(mname, z))
            new_roles[mname] = AtomRole(f"msg:{child}", tuple(range(len(z))), True, True)
        head = td.separator(node, q)
        out[node] = (Query(tuple(head), tuple(atoms), name=f"{q.name}_{node}"), new_roles)
    return out


def td_profiles(
    q: Query, td: TreeDecomposition, subs: Mapping[str, tuple[Query, Mapping[str, AtomRole]]],
    profile: CardinalityProfile = UNIFORM,
) -> tuple[Fraction, dict[str, CardinalityProfile]]:
    """Normalizer m and per-bag profiles: atoms keep cc/m, messages get rho*(Z^w)/m."""
    msg_bound = {}
    for node in td.nodes:
        if td.parent_of[node] is not None:
            msg_bound[node] = rho(q, q.mask(td.separator(node, q)), profile)
    m = max([profile.get(a.name) for a in q.atoms] + list(msg_bound.values()))
    per_bag = {}
    for node in td.nodes:
        sub, sub_roles = subs[node]
        cc = {}
        for a in sub.atoms:
            role = sub_roles[a.name]
            if role.message:
                child = role.source.split(":", 1)[1]
                cc[a.name] = msg_bound[child] / m
            else:
                cc[a.name] = profile.get(a.name) / m
        per_bag[node] = CardinalityProfile.of(cc, check=False)
    return m, per_bag


# ---------------------------------------------------------------- validation


def validate(q: Query, plan: Plan, roles: Mapping[str, AtomRole] | None = None, inputs: Iterable[str] = ()) -> list[str]:
    """Empty list when ``plan`` is valid for ``q``; otherwise human-readable violations."""
    if isinstance(plan, GJPlan):
        return _validate_order(q, plan.order)
    if isinstance(plan, PTPlan):
        return _validate_tree(q, plan.tree)
    if isinstance(plan, PTCPlan):
        errs = _validate_tree(q, plan.tree)
        unknown = sorted(set(plan.caches) - set(q.variables))
        errs += [f"cache at unknown variable {v}" for v in unknown]
        if not errs and plan.tree.root not in plan.caches:
            errs.append(f"root {plan.tree.root} must be cached")
        return errs
    if isinstance(plan, PTCRPlan):
        errs = _validate_tree(q, plan.tree)
        errs += _validate_sizes(q, plan)
        if not errs:
            errs += _check_ptcr_invariants(q, PTCRInfo(q, plan.tree, dict(plan.cache_size)))
        return errs
    if isinstance(plan, RPTPlan):
        return _validate_rpt(q, plan, roles if roles is not None else identity_roles(q), tuple(inputs))
    if isinstance(plan, TDPlan):
        return _validate_td(q, plan)
    return [f"unknown plan type {type(plan).__name__}"]


def _validate_order(q: Query, order) -> list[str]:
    if sorted(order) != sorted(q.variables) or len(set(order)) != len(order):
        extra = sorted(set(order) - set(q.variables))
        missing = sorted(set(q.variables) - set(order))
        msg = "order is not a permutation of the query variables"
        if extra:
            msg += f"; unknown: {', '.join(extra)}"
        if missing:
            msg += f"; missing: {', '.join(missing)}"
        return [msg]
    return []


def _validate_tree(q: Query, tree: PseudoTree) -> list[str]:
    nodes = set(tree.nodes)
    errs = []
    extra = sorted(nodes - set(q.variables))
    missing = sorted(set(q.variables) - nodes)
    if extra:
        errs.append(f"tree nodes not in the query: {', '.join(extra)}")
    if missing:
        errs.append(f"query variables missing from the tree: {', '.join(missing)}")
    errs += tree.structural_problems()
    if errs:
        return errs
    info = TreeInfo(q, tree)
    for a, am in zip(q.atoms, q.atom_masks):
        low = info.deepest(am)
        if am & ~info.ancc(low):
            errs.append(f"atom {a} is not on a branch")
    return errs


def _validate_sizes(q: Query, plan: PTCRPlan) -> list[str]:
    errs = []
    for v, c in plan.cache_size:
        if v not in q.index:
            errs.append(f"cache size for unknown variable {v}")
        elif c < 0:
            errs.append(f"negative cache size at {v}")
    return errs


def _check_ptcr_invariants(q: Query, info: PTCRInfo) -> list[str]:
    errs = []
    for v in info.order:
        if info.input_mask >> v & 1:
            continue
        name = q.variables[v]
        if info.con[v] & ~info.raexc(v) or info.raexc(v) & ~info.anc[v]:
            errs.append(f"con({name}) within raexc({name}) within anc({name}) fails")
        if info.icon[v]:
            low = info.deepest(info.icon[v])
            if info.icon[v] & ~info.ria[v] or info.ria[v] & ~info.ancc(low):
                errs.append(f"icon({name}) within ria({name}) within ancc(min icon) fails")
        elif info.ria[v]:
            errs.append(f"ria({name}) must be empty when icon is empty")
    return errs


def _validate_rpt(q: Query, plan: RPTPlan, roles, inputs: tuple[str, ...]) -> list[str]:
    base = plan.base
    errs = _validate_tree(q, base.tree) + _validate_sizes(q, base)
    if errs:
        return errs
    if tuple(plan.inputs) != tuple(inputs):
        return [f"inputs {list(plan.inputs)} differ from the required {list(inputs)}"]
    tree = base.tree
    node = tree.root
    for i, v in enumerate(plan.inputs):
        if node != v:
            return [f"input variables must form a chain on top of the tree: expected {v}, found {node}"]
        kids = tree.children(v)
        if len(kids) != 1:
            return [f"input {v} must have exactly one child"]
        node = kids[0]
    info = PTCRInfo(q, tree, dict(base.cache_size), plan.inputs)
    real_root = q.index[node]
    errs += _check_ptcr_invariants(q, info)
    if info.ria[real_root] != info.input_mask:
        errs.append(
            f"ria of the real root {node} is {{{', '.join(q.names(info.ria[real_root]))}}}, "
            f"expected the inputs {{{', '.join(plan.inputs)}}}"
        )
    anchors = []
    for a, _ in plan.replacements:
        if a not in q.index:
            errs.append(f"replacement anchor {a} is not a variable")
        elif info.input_mask >> q.index[a] & 1:
            errs.append(f"replacement anchor {a} is an input variable")
        else:
            anchors.append(q.index[a])
    if len(set(anchors)) != len(anchors):
        errs.append("an anchor is replaced twice")
    for i in anchors:
        for j in anchors:
            if i != j and info.ancc(j) >> i & 1:
                errs.append(f"anchors {q.variables[i]} and {q.variables[j]} are on one branch")
    if errs:
        return errs
    for a, sub in plan.replacements:
        sub_q, sub_roles, sub_inputs = rpt_subquery(q, roles, info, q.index[a])
        if not isinstance(sub, RPTPlan):
            errs.append(f"replacement at {a} is not an RPT")
            continue
        errs += [f"replacement at {a}: {e}" for e in _validate_rpt(sub_q, sub, sub_roles, sub_inputs)]
    return errs


def _validate_td(q: Query, plan: TDPlan) -> list[str]:
    td = plan.td
    errs = []
    nodes = set(td.nodes)
    parent = td.parent_of
    if set(parent) != nodes:
        errs.append("parent map and bag map disagree on the node set")
        return errs
    roots = [n for n, p in parent.items() if p is None]
    if len(roots) != 1:
        return [f"decomposition has {len(roots)} roots"]
    for n, p in parent.items():
        if p is not None and p not in nodes:
            errs.append(f"parent of {n} is not a node")
    if errs:
        return errs
    seen, stack = set(), [roots[0]]
    while stack:
        n = stack.pop()
        seen.add(n)
        stack.extend(td.children(n))
    if seen != nodes:
        return ["decomposition is not a tree"]
    bag = td.bag
    for n, b in bag.items():
        unknown = sorted(set(b) - set(q.variables))
        if unknown:
            errs.append(f"bag {n} has unknown variables {', '.join(unknown)}")
        if not b:
            errs.append(f"bag {n} is empty")
    if errs:
        return errs
    if not set(q.head) <= bag[roots[0]]:
        errs.append("root bag does not contain the head variables")
    for v in q.variables:
        holding = {n for n in nodes if v in bag[n]}
        if not holding:
            errs.append(f"variable {v} is in no bag")
            continue
        tops = [n for n in holding if parent[n] not in holding]
        if len(tops) != 1:
            errs.append(f"bags containing {v} are not connected")
    cover = td.cover_of
    for a in q.atoms:
        n = cover.get(a.name)
        if n is None:
            errs.append(f"atom {a} is not covered")
        elif n not in nodes:
            errs.append(f"atom {a} covered by unknown node {n}")
        elif not set(a.vars) <= bag[n]:
            errs.append(f"atom {a} is not contained in its covering bag {n}")
    extra = sorted(set(cover) - {a.name for a in q.atoms})
    errs += [f"covering names unknown atom {e}" for e in extra]
    if errs:
        return errs
    inner = plan.inner_of
    if set(inner) != nodes:
        return ["inner plans must be given for exactly the decomposition nodes"]
    subs = td_subqueries(q, td)
    for n in td.nodes:
        sub_q, sub_roles = subs[n]
        if isinstance(inner[n], TDPlan):
            errs.append(f"bag {n}: nested decompositions are not supported")
            continue
        errs += [f"bag {n}: {e}" for e in validate(sub_q, inner[n], sub_roles)]
    return errs


def check(q: Query, plan: Plan) -> None:
    errs = validate(q, plan)
    if errs:
        raise InvalidPlan(errs)


# ---------------------------------------------------------------- exponent calculus


def exponents(q: Query, plan: Plan, profile: CardinalityProfile = UNIFORM) -> SpaceTimeExponent:
    check(q, plan)
    return _exponents(q, plan, profile, identity_roles(q), ())


def _exponents(q: Query, plan: Plan, profile, roles, inputs) -> SpaceTimeExponent:
    if isinstance(plan, GJPlan):
        return SpaceTimeExponent(rho(q, q.head_mask, profile), rho(q, q.all_mask, profile))
    if isinstance(plan, PTPlan):
        info = TreeInfo(q, plan.tree)
        s = max(rho(q, info.outt[v], profile) for v in info.order)
        t = max(rho(q, info.ancc(v) | info.out[v], profile) for v in info.order)
        return SpaceTimeExponent(s, t)
    if isinstance(plan, PTCPlan):
        return _ptc_exponents(q, plan, profile)
    if isinstance(plan, PTCRPlan):
        info = PTCRInfo(q, plan.tree, dict(plan.cache_size))
        return _ptcr_nodes(q, info, info.order, profile)
    if isinstance(plan, RPTPlan):
        return _rpt_exponents(q, plan, profile, roles)
    if isinstance(plan, TDPlan):
        return _td_exponents(q, plan, profile)
    raise TypeError(type(plan).__name__)


def _ptc_exponents(q: Query, plan: PTCPlan, profile) -> SpaceTimeExponent:
    info = TreeInfo(q, plan.tree)
    cached = q.mask(plan.caches)
    s = Fraction(0)
    t = Fraction(0)
    # path[v]: con(B_v) plus the nodes from B_v down to v
    path = [0] * len(q.variables)
    for v in info.order:
        if cached >> v & 1:
            path[v] = info.con[v] | (1 << v)
            s = max(s, rho(q, info.con[v] | info.outt[v], profile))
        else:
            path[v] = path[info.parent[v]] | (1 << v)
        t = max(t, rho(q, path[v] | info.out[v], profile))
    return SpaceTimeExponent(s, t)


def _ptcr_nodes(q: Query, info: PTCRInfo, nodes, profile) -> SpaceTimeExponent:
    s = Fraction(0)
    t = Fraction(0)
    for v in nodes:
        s = max(s, rho(q, info.scon[v] | info.outt[v], profile))
        t = max(t, rho(q, info.ra[v] | info.out[v], profile))
    return SpaceTimeExponent(s, t)


def _rpt_exponents(q: Query, plan: RPTPlan, profile, roles) -> SpaceTimeExponent:
    info = PTCRInfo(q, plan.base.tree, dict(plan.base.cache_size), plan.inputs)
    replaced = 0
    for a, _ in plan.replacements:
        replaced |= info.descc[q.index[a]]
    nodes = [v for v in info.order if not (info.input_mask | replaced) >> v & 1]
    best = _ptcr_nodes(q, info, nodes, profile)
    s, t = best.s, best.t
    for a, sub in plan.replacements:
        sub_q, sub_roles, _ = rpt_subquery(q, roles, info, q.index[a])
        e = _rpt_exponents(sub_q, sub, profile, sub_roles)
        s, t = max(s, e.s), max(t, e.t)
    return SpaceTimeExponent(s, t)


def _td_exponents(q: Query, plan: TDPlan, profile) -> SpaceTimeExponent:
    subs = td_subqueries(q, plan.td)
    m, profiles = td_profiles(q, plan.td, subs, profile)
    inner = plan.inner_of
    s = Fraction(0)
    t = Fraction(0)
    for node in plan.td.nodes:
        sub_q, sub_roles = subs[node]
        e = _exponents(sub_q, inner[node], profiles[node], sub_roles, ())
        s, t = max(s, e.s * m), max(t, e.t * m)
    return SpaceTimeExponent(s, t)


# ---------------------------------------------------------------- JSON


def plan_to_json(plan: Plan) -> dict:
    if isinstance(plan, GJPlan):
        return {"kind": "gj", "order": list(plan.order)}
    if isinstance(plan, PTPlan):
        return {"kind": "pt", "tree": plan.tree.to_nested()}
    if isinstance(plan, PTCPlan):
        return {"kind": "ptc", "tree": plan.tree.to_nested(), "caches": sorted(plan.caches)}
    if isinstance(plan, PTCRPlan):
        return {"kind": "ptcr", "tree": plan.tree.to_nested(), "cache_size": dict(plan.cache_size)}
    if isinstance(plan, RPTPlan):
        return {
            "kind": "rpt",
            "inputs": list(plan.inputs),
            "base": plan_to_json(plan.base),
            "replacements": [{"anchor": a, "sub": plan_to_json(s)} for a, s in plan.replacements],
        }
    if isinstance(plan, TDPlan):
        td = plan.td
        return {
            "kind": "td",
            "root": td.root,
            "bags": {n: sorted(b) for n, b in td.bags},
            "edges": [[p, n] for n, p in td.parent if p is not None],
            "covering": dict(td.covering),
            "inner": {n: plan_to_json(p) for n, p in plan.inner},
        }
    raise TypeError(type(plan).__name__)


class PlanFormatError(ValueError):
    pass


def plan_from_json(obj: Mapping) -> Plan:
    try:
        kind = obj["kind"]
        if kind == "gj":
            return GJPlan(tuple(obj["order"]))
        if kind == "pt":
            return PTPlan(PseudoTree.from_nested(obj["tree"]))
        if kind == "ptc":
            return PTCPlan(PseudoTree.from_nested(obj["tree"]), frozenset(obj["caches"]))
        if kind == "ptcr":
            return PTCRPlan(PseudoTree.from_nested(obj["tree"]), dict(obj.get("cache_size", {})))
        if kind == "rpt":
            base = plan_from_json(obj["base"])
            if not isinstance(base, PTCRPlan):
                raise PlanFormatError("rpt base must be a ptcr plan")
            reps = tuple((r["anchor"], plan_from_json(r["sub"])) for r in obj.get("replacements", ()))
            return RPTPlan(base, tuple(obj.get("inputs", ())), reps)
        if kind == "td":
            bags = {n: frozenset(b) for n, b in obj["bags"].items()}
            parent: dict[str, str | None] = {n: None for n in bags}
            for p, c in obj.get("edges", ()):
                if c not in parent:
                    raise PlanFormatError(f"edge to unknown node {c}")
                if parent[c] is not None:
                    raise PlanFormatError(f"node {c} has two parents")
                parent[c] = p
            if "root" in obj and parent.get(obj["root"], "") is not None:
                raise PlanFormatError("declared root has a parent")
            td = TreeDecomposition(bags, parent, obj["covering"])
            inner = {n: plan_from_json(p) for n, p in obj.get("inner", {}).items()}
            return TDPlan(td, inner)
    except (KeyError, TypeError, AttributeError) as exc:
        raise PlanFormatError(f"malformed plan: {exc!r}") from None
    raise PlanFormatError(f"unknown plan kind {obj.get('kind')!r}")


def dumps_plan(plan: Plan) -> str:
    return json.dumps(plan_to_json(plan), indent=2, sort_keys=True) + "\n"


def loads_plan(text: str) -> Plan:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PlanFormatError(f"plan is not JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise PlanFormatError("plan must be a JSON object")
    return plan_from_json(obj)
