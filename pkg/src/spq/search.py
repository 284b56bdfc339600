"""Plan enumeration, Pareto frontiers of exponents, and budgeted best-time search.

Pseudo-tree families are searched by a memoized recursion over subtree states:
the ancestors that still matter, the class-specific context (path since the last
cache, or the relevant ancestors of the parent), and the set of variables left
to place. At each state every root, every cache choice and every grouping of the
remaining connected components into child subtrees is tried, so the search
covers every plan of the class. Caps on s and t prune options whose own node
already exceeds them.
"""

from __future__ import annotations

import itertools
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterator

from .plans import (
    GJPlan,
    Plan,
    PseudoTree,
    PTCPlan,
    PTCRPlan,
    PTPlan,
    RPTPlan,
    SpaceTimeExponent,
    TDPlan,
    TreeDecomposition,
    TreeInfo,
    td_profiles,
    td_subqueries,
    validate,
)
from .query import UNIFORM, CardinalityProfile, Query, QueryError, bits, rho

CLASSES = ("gj", "pt", "ptc", "ptcr", "rpt", "td[gj]", "td[pt]", "td[ptcr]")
DEFAULT_VAR_CAP = 12
DEFAULT_RPT_DEPTH = 2
INF = Fraction(10**9)


def var_cap() -> int:
    return int(os.environ.get("SPQ_VAR_CAP", DEFAULT_VAR_CAP))


def _check_cap(q: Query) -> None:
    cap = var_cap()
    if len(q.variables) > cap:
        raise QueryError(f"query has {len(q.variables)} variables, above the search cap {cap} (set SPQ_VAR_CAP)")


@dataclass(frozen=True)
class SearchBudget:
    max_plans: int = 50_000_000
    max_seconds: float = 7200.0
    space_cap: Fraction | None = None

    def __post_init__(self):
        if self.max_plans <= 0 or self.max_seconds <= 0:
            raise ValueError("budget limits must be positive")


class BudgetExhausted(Exception):
    pass


@dataclass
class Frontier:
    points: list[tuple[SpaceTimeExponent, Plan]]
    exhaustive: bool = True
    note: str = ""

    def exponents(self) -> list[tuple[Fraction, Fraction]]:
        return [(e.s, e.t) for e, _ in self.points]


@dataclass
class BestTime:
    t: Fraction | None
    witness: Plan | None
    exhaustive: bool


# ---------------------------------------------------------------- Pareto helpers


def pareto(points: list) -> list:
    """Minimal (s, t, ...) entries; the first entry wins among equal exponents."""
    points = sorted(points, key=lambda p: (p[0], p[1]))
    out = []
    best_t = None
    for p in points:
        if best_t is None or p[1] < best_t:
            out.append(p)
            best_t = p[1]
    return out


def _combine(a: list, b: list, join) -> list:
    return pareto([(max(p[0], r[0]), max(p[1], r[1]), join(p[2], r[2])) for p in a for r in b])


# ---------------------------------------------------------------- graph helpers


def _components(q: Query, mask: int) -> list[int]:
    nb = q.neighbors
    comps = []
    left = mask
    while left:
        seed = left & -left
        comp = seed
        frontier = seed
        while frontier:
            v = frontier.bit_length() - 1
            frontier &= ~(1 << v)
            new = nb[v] & mask & ~comp
            comp |= new
            frontier |= new
        comps.append(comp)
        left &= ~comp
    return comps


def _neighborhood(q: Query, mask: int) -> int:
    out = 0
    nb = q.neighbors
    for v in bits(mask):
        out |= nb[v]
    return out & ~mask


def _submasks(mask: int):
    sub = mask
    while True:
        yield sub
        if sub == 0:
            return
        sub = (sub - 1) & mask


# ---------------------------------------------------------------- pseudo-tree family search


class _TreeSearch:
    """Frontier recursion for pt, ptc, ptcr and rpt over one query."""

    def __init__(self, q: Query, cls: str, profile: CardinalityProfile, s_cap, t_cap, budget: SearchBudget,
                 rpt_depth: int = DEFAULT_RPT_DEPTH):
        self.q = q
        self.cls = cls
        self.profile = profile
        self.s_cap = s_cap
        self.t_cap = t_cap
        self.budget = budget
        self.rpt_depth = rpt_depth if cls == "rpt" else 0
        self.memo: dict = {}
        self.expanded = 0
        self.deadline = time.monotonic() + budget.max_seconds
        self.min_pruned_t: Fraction | None = None
        self._nbhd: dict[int, int] = {}

    def rho(self, mask: int) -> Fraction:
        return rho(self.q, mask, self.profile)

    def nbhd(self, mask: int) -> int:
        got = self._nbhd.get(mask)
        if got is None:
            got = self._nbhd[mask] = _neighborhood(self.q, mask)
        return got

    def _tick(self) -> None:
        self.expanded += 1
        if self.expanded > self.budget.max_plans:
            raise BudgetExhausted
        if self.expanded & 1023 == 0 and time.monotonic() > self.deadline:
            raise BudgetExhausted

    def _fits(self, s, t) -> bool:
        if s > self.s_cap:
            return False
        if t > self.t_cap:
            if self.min_pruned_t is None or t < self.min_pruned_t:
                self.min_pruned_t = t
            return False
        return True

    # -- top level

    def initial_ctx(self):
        if self.cls == "pt":
            return 0
        if self.cls == "ptc":
            return (0, None)
        return ((), 0, self.rpt_depth)

    def frontier(self, roots=None) -> list:
        q = self.q
        return self.subtree(self.initial_ctx(), q.all_mask, q.head_mask, True, roots)

    # -- recursion

    def subtree(self, ctx, S: int, X: int, is_root: bool, roots=None) -> list:
        key = (ctx, S, X, is_root)
        if roots is None:
            got = self.memo.get(key)
            if got is not None:
                return got
        out = []
        NS = self.nbhd(S)
        for A in bits(S) if roots is None else roots:
            rest = S & ~(1 << A)
            for s_a, t_a, label, child_ctx, sub in self.options(ctx, S, X, A, NS, is_root):
                self._tick()
                if not self._fits(s_a, t_a):
                    continue
                if sub is not None:
                    kids = sub
                else:
                    kids = self.groupings(child_ctx, _components(self.q, rest), X)
                for s, t, w in kids:
                    s, t = max(s, s_a), max(t, t_a)
                    out.append((s, t, (A, label, w)))
        out = pareto(out)
        if roots is None:
            self.memo[key] = out
        return out

    def options(self, ctx, S, X, A, NS, is_root):
        bit = 1 << A
        out_x = S & X & ~bit
        cls = self.cls
        if cls == "pt":
            C = ctx
            yield self.rho(S & X), self.rho(C | bit | out_x), None, C | bit, None
            return
        if cls == "ptc":
            Cn, E = ctx
            con = Cn & NS
            s = self.rho(con | (S & X))
            path = con | bit
            yield s, self.rho(path | out_x), True, (Cn | bit, path), None
            if not is_root:
                path = E | bit
                yield Fraction(0), self.rho(path | out_x), False, (Cn | bit, path), None
            return
        R, ra, depth = ctx
        con = [c for c in R if NS >> c & 1]
        ks = [0] if is_root else range(len(con) + 1)
        for k in ks:
            scon = 0
            for c in con[len(con) - k:]:
                scon |= 1 << c
            icon = con[: len(con) - k]
            ria = 0
            if icon:
                upto = R.index(icon[-1])
                for c in R[: upto + 1]:
                    if ra >> c & 1:
                        ria |= 1 << c
            ra_a = ria | scon | bit
            s = self.rho(scon | (S & X))
            t = self.rho(ra_a | out_x)
            yield s, t, k, (R + (A,), ra_a, depth), None
            if depth > 0 and scon and not is_root:
                inputs = tuple(c for c in R if ria >> c & 1)
                sub_ctx = (inputs, ria, depth - 1)
                sub_s = scon | S
                sub = self.subtree(sub_ctx, sub_s, scon | (S & X), True)
                self._tick()
                yield Fraction(0), Fraction(0), ("replace", k, S, inputs), None, [
                    (p[0], p[1], p[2]) for p in sub
                ]

    def child_ctx(self, ctx, G: int):
        cls = self.cls
        NG = self.nbhd(G)
        if cls == "pt":
            return ctx
        if cls == "ptc":
            Cn, path = ctx
            return (Cn & NG, path)
        R, ra, depth = ctx
        return (tuple(c for c in R if (NG | ra) >> c & 1), ra, depth)

    def groupings(self, ctx, comps: list[int], X: int) -> list:
        m = len(comps)
        if m == 0:
            return [(Fraction(0), Fraction(0), ())]
        local: dict[int, list] = {}

        def part(mask: int) -> list:
            if mask == 0:
                return [(Fraction(0), Fraction(0), ())]
            got = local.get(mask)
            if got is not None:
                return got
            low = mask & -mask
            rest = mask & ~low
            res = []
            for sub in _submasks(rest):
                g = low | sub
                G = 0
                for i in bits(g):
                    G |= comps[i]
                fg = self.subtree(self.child_ctx(ctx, G), G, X, False)
                if not fg:
                    continue
                fr = part(rest & ~sub)
                if not fr:
                    continue
                res += _combine(fg, fr, lambda a, b: (a,) + b)
            res = pareto(res)
            local[mask] = res
            return res

        return part((1 << m) - 1)

    # -- witnesses

    def build(self, w, inputs=()) -> Plan:
        q = self.q
        parent: dict[str, str | None] = {}
        sizes: dict[str, int] = {}
        caches: set[str] = set()
        reps: list = []
        prev = None
        for v in inputs:
            parent[q.variables[v]] = prev
            prev = q.variables[v]
        self._walk(w, prev, parent, sizes, caches, reps)
        tree = PseudoTree(parent)
        if self.cls == "pt":
            return PTPlan(tree)
        if self.cls == "ptc":
            return PTCPlan(tree, caches)
        base = PTCRPlan(tree, sizes)
        if self.cls == "ptcr":
            return base
        return RPTPlan(base, tuple(q.variables[v] for v in inputs), tuple(reps))

    def _walk(self, w, up, parent, sizes, caches, reps) -> None:
        q = self.q
        A, label, kids = w
        name = q.variables[A]
        parent[name] = up
        if isinstance(label, tuple) and label[0] == "replace":
            _, k, S, inputs = label
            sizes[name] = k
            self._canonical(A, S, up, parent)
            reps.append((name, self.build(kids, inputs)))
            return
        if self.cls == "ptc" and label:
            caches.add(name)
        if self.cls in ("ptcr", "rpt") and label:
            sizes[name] = label
        for kid in kids:
            self._walk(kid, name, parent, sizes, caches, reps)

    def _canonical(self, A: int, S: int, up, parent) -> None:
        q = self.q
        parent[q.variables[A]] = up
        for comp in _components(q, S & ~(1 << A)):
            root = (comp & -comp).bit_length() - 1
            self._canonical(root, comp, q.variables[A], parent)


# ---------------------------------------------------------------- public search API


def _tree_frontier(q, cls, profile, s_cap, t_cap, budget, roots=None, rpt_depth=DEFAULT_RPT_DEPTH):
    srch = _TreeSearch(q, cls, profile, s_cap, t_cap, budget, rpt_depth)
    exhaustive = True
    pts: list = []
    for A in (bits(q.all_mask) if roots is None else roots):
        try:
            pts += srch.frontier([A])
        except BudgetExhausted:
            exhaustive = False
            break
    pts = pareto(pts)
    return [(SpaceTimeExponent(s, t), srch.build(w)) for s, t, w in pts], exhaustive, srch.min_pruned_t


def _gj_point(q: Query, profile) -> tuple[SpaceTimeExponent, GJPlan]:
    e = SpaceTimeExponent(rho(q, q.head_mask, profile), rho(q, q.all_mask, profile))
    return e, GJPlan(q.variables)


def _td_frontier(q, inner_cls, profile, s_cap, t_cap, budget, tds=None):
    start = time.monotonic()
    points = []
    exhaustive = True
    for td in enumerate_td(q) if tds is None else tds:
        left = budget.max_seconds - (time.monotonic() - start)
        if left <= 0:
            exhaustive = False
            break
        subs = td_subqueries(q, td)
        m, profiles = td_profiles(q, td, subs, profile)
        combined = [(Fraction(0), Fraction(0), ())]
        for node in td.nodes:
            sub_q = subs[node][0]
            if inner_cls == "gj":
                e, p = _gj_point(sub_q, profiles[node])
                fr = [(e.s, e.t, ((node, p),))] if e.s * m <= s_cap and e.t * m <= t_cap else []
            else:
                pts, ex, _ = _tree_frontier(
                    sub_q, inner_cls, profiles[node], s_cap / m, t_cap / m,
                    SearchBudget(budget.max_plans, max(left, 1e-3)),
                )
                exhaustive &= ex
                fr = [(e.s, e.t, ((node, p),)) for e, p in pts]
            combined = _combine(combined, fr, lambda a, b: a + b)
            if not combined:
                break
        for s, t, inner in combined:
            points.append((s * m, t * m, TDPlan(td, dict(inner))))
    points = pareto(points)
    return [(SpaceTimeExponent(s, t), p) for s, t, p in points], exhaustive


def _split_class(cls: str) -> tuple[bool, str]:
    if cls not in CLASSES:
        raise ValueError(f"unknown plan class {cls!r}; choose from {', '.join(CLASSES)}")
    if cls.startswith("td["):
        return True, cls[3:-1]
    return False, cls


def _worker(args):
    q_text_atoms, cls, profile, s_cap, t_cap, budget, part, rpt_depth = args
    q = Query(*q_text_atoms)
    is_td, inner = _split_class(cls)
    if is_td:
        pts, ex = _td_frontier(q, inner, profile, s_cap, t_cap, budget, part)
    else:
        pts, ex, _ = _tree_frontier(q, inner, profile, s_cap, t_cap, budget, part, rpt_depth)
    return pts, ex


def pareto_frontier(
    q: Query,
    cls: str,
    budget: SearchBudget | None = None,
    *,
    profile: CardinalityProfile = UNIFORM,
    t_cap: Fraction | None = None,
    jobs: int = 1,
    rpt_depth: int = DEFAULT_RPT_DEPTH,
) -> Frontier:
    """Minimal (s, t) pairs of the class with one witness plan each."""
    _check_cap(q)
    budget = budget or SearchBudget()
    is_td, inner = _split_class(cls)
    s_cap = Fraction(budget.space_cap) if budget.space_cap is not None else INF
    t_cap = Fraction(t_cap) if t_cap is not None else INF
    note = "elimination-order TDs" if is_td else ""
    if cls == "gj":
        e, p = _gj_point(q, profile)
        pts = [(e, p)] if e.s <= s_cap and e.t <= t_cap else []
        return Frontier(pts, True)
    if jobs > 1:
        parts = _partition(q, is_td, jobs)
        args = [((q.head, q.atoms, q.name), cls, profile, s_cap, t_cap, budget, part, rpt_depth) for part in parts]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_worker, args))
        merged = pareto([(e.s, e.t, i, p) for i, (pts, _) in enumerate(results) for e, p in pts])
        pts = [(SpaceTimeExponent(s, t), p) for s, t, _, p in merged]
        return Frontier(pts, all(ex for _, ex in results), note)
    if is_td:
        pts, ex = _td_frontier(q, inner, profile, s_cap, t_cap, budget)
    else:
        pts, ex, _ = _tree_frontier(q, inner, profile, s_cap, t_cap, budget, rpt_depth=rpt_depth)
    return Frontier(pts, ex, note)


def _partition(q: Query, is_td: bool, jobs: int) -> list:
    if is_td:
        tds = list(enumerate_td(q))
        return [tds[i::jobs] for i in range(jobs) if tds[i::jobs]]
    roots = bits(q.all_mask)
    return [roots[i::jobs] for i in range(jobs) if roots[i::jobs]]


def find_plan(
    q: Query, cls: str, s_cap, t_cap, budget: SearchBudget | None = None, *,
    profile: CardinalityProfile = UNIFORM, rpt_depth: int = DEFAULT_RPT_DEPTH,
) -> tuple[Plan | None, bool]:
    """Some plan with s <= s_cap and t <= t_cap, or None; second value says whether the answer is exhaustive."""
    budget = budget or SearchBudget()
    fr = pareto_frontier(q, cls, SearchBudget(budget.max_plans, budget.max_seconds, Fraction(s_cap)),
                         profile=profile, t_cap=Fraction(t_cap), rpt_depth=rpt_depth)
    return (fr.points[0][1] if fr.points else None), fr.exhaustive


def best_time_given_space(
    q: Query, cls: str, s_budget, budget: SearchBudget | None = None, *,
    profile: CardinalityProfile = UNIFORM, rpt_depth: int = DEFAULT_RPT_DEPTH,
) -> BestTime:
    """Least t over plans with s <= s_budget.

    Pseudo-tree classes deepen a t cap: each pass prunes every node above the
    cap, and a failed pass proposes the least pruned node time as the next cap.
    """
    _check_cap(q)
    budget = budget or SearchBudget()
    s_cap = Fraction(s_budget)
    is_td, inner = _split_class(cls)
    if is_td or cls == "gj":
        fr = pareto_frontier(q, cls, SearchBudget(budget.max_plans, budget.max_seconds, s_cap), profile=profile)
        if not fr.points:
            return BestTime(None, None, fr.exhaustive)
        e, p = min(fr.points, key=lambda ep: ep[0].t)
        return BestTime(e.t, p, fr.exhaustive)
    deadline = time.monotonic() + budget.max_seconds
    t_cap = min((profile.get(a.name) for a in q.atoms), default=Fraction(0))
    while True:
        left = deadline - time.monotonic()
        if left <= 0:
            return BestTime(None, None, False)
        pts, ex, nxt = _tree_frontier(q, inner, profile, s_cap, t_cap,
                                      SearchBudget(budget.max_plans, left), rpt_depth=rpt_depth)
        if pts:
            e, p = min(pts, key=lambda ep: ep[0].t)
            return BestTime(e.t, p, ex)
        if not ex:
            return BestTime(None, None, False)
        if nxt is None:
            return BestTime(None, None, True)
        t_cap = nxt


# ---------------------------------------------------------------- enumeration


def _pt_subtrees(q: Query, S: int) -> Iterator[list[tuple[int, int]]]:
    """All valid subtrees on S as lists of (node, parent or -1 for the subtree root)."""
    for A in bits(S):
        comps = _components(q, S & ~(1 << A))
        for groups in _set_partitions(comps):
            choices = [list(_pt_subtrees(q, g)) for g in groups]
            for combo in itertools.product(*choices):
                edges = [(A, -1)]
                for sub in combo:
                    edges += [(v, A if p == -1 else p) for v, p in sub]
                yield edges


def _set_partitions(items: list[int]) -> Iterator[list[int]]:
    """Partitions of component masks into groups, each group given as the union mask."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        yield [first] + part
        for i in range(len(part)):
            yield part[:i] + [part[i] | first] + part[i + 1:]


def enumerate_pt(q: Query) -> Iterator[PseudoTree]:
    _check_cap(q)
    for edges in _pt_subtrees(q, q.all_mask):
        yield PseudoTree({q.variables[v]: (None if p == -1 else q.variables[p]) for v, p in edges})


def enumerate_ptcr(q: Query) -> Iterator[PTCRPlan]:
    for tree in enumerate_pt(q):
        info = TreeInfo(q, tree)
        names = [q.variables[v] for v in info.order]
        ranges = [range(bin(info.con[v]).count("1") + 1) for v in info.order]
        for ks in itertools.product(*ranges):
            yield PTCRPlan(tree, {n: k for n, k in zip(names, ks) if k})


def enumerate_rpt(q: Query, depth: int = DEFAULT_RPT_DEPTH) -> Iterator[RPTPlan]:
    """Base PTCRs plus replacements at cached anchors, sub-plans drawn recursively."""
    if depth < 0 or depth > 3:
        raise ValueError("depth must lie in 0..3")
    seen = set()
    for p in _rpt_plans(q, depth, ()):
        key = _rpt_key(p)
        if key not in seen:
            seen.add(key)
            yield p


def _rpt_key(p: RPTPlan):
    replaced = {a for a, _ in p.replacements}
    tree = p.base.tree

    def shape(v):
        if v in replaced:
            return (v,)
        return (v, tuple(shape(c) for c in tree.children(v)))

    sizes = tuple(sorted((v, c) for v, c in p.base.cache_size))
    return (shape(tree.root), sizes, p.inputs, tuple((a, _rpt_key(s)) for a, s in p.replacements))


def _rpt_plans(q: Query, depth: int, inputs: tuple[str, ...]) -> Iterator[RPTPlan]:
    from .plans import PTCRInfo, identity_roles, rpt_subquery

    for tree in _trees_under_inputs(q, inputs):
        info = TreeInfo(q, tree)
        order = [v for v in info.order if q.variables[v] not in inputs]
        ranges = []
        for v in order:
            ranges.append([0] if v == order[0] and inputs else range(bin(info.con[v]).count("1") + 1))
        for ks in itertools.product(*ranges):
            base = PTCRPlan(tree, {q.variables[v]: k for v, k in zip(order, ks) if k})
            plain = RPTPlan(base, inputs)
            if validate(q, plain, inputs=inputs):
                continue
            yield plain
            if depth == 0:
                continue
            pinfo = PTCRInfo(q, tree, dict(base.cache_size), inputs)
            anchors = [v for v in order if pinfo.scon[v] and v != order[0]]
            for chosen in _antichains(pinfo, anchors):
                options = []
                for a in chosen:
                    sub_q, _, sub_inputs = rpt_subquery(q, identity_roles(q), pinfo, a)
                    options.append([(q.variables[a], s) for s in _rpt_plans(sub_q, depth - 1, sub_inputs)])
                for combo in itertools.product(*options):
                    yield RPTPlan(base, inputs, combo)


def _antichains(info, anchors: list[int]) -> Iterator[list[int]]:
    """Nonempty sets of anchors with no two on one branch."""
    def rec(i, chosen):
        if i == len(anchors):
            if chosen:
                yield list(chosen)
            return
        yield from rec(i + 1, chosen)
        a = anchors[i]
        if all(not (info.ancc(a) >> b & 1) and not (info.ancc(b) >> a & 1) for b in chosen):
            chosen.append(a)
            yield from rec(i + 1, chosen)
            chosen.pop()

    yield from rec(0, [])


def _trees_under_inputs(q: Query, inputs: tuple[str, ...]) -> Iterator[PseudoTree]:
    if not inputs:
        yield from enumerate_pt(q)
        return
    in_mask = q.mask(inputs)
    rest = q.all_mask & ~in_mask
    for A in bits(rest):
        comps = _components(q, rest & ~(1 << A))
        for groups in _set_partitions(comps):
            choices = [list(_pt_subtrees(q, g)) for g in groups]
            for combo in itertools.product(*choices):
                parent: dict[str, str | None] = {}
                prev = None
                for v in inputs:
                    parent[v] = prev
                    prev = v
                parent[q.variables[A]] = prev
                for sub in combo:
                    for v, p in sub:
                        parent[q.variables[v]] = q.variables[A] if p == -1 else q.variables[p]
                yield PseudoTree(parent)


def enumerate_td(q: Query) -> Iterator[TreeDecomposition]:
    """Tree decompositions induced by elimination orders, one per admissible root bag."""
    _check_cap(q)
    adj = list(q.neighbors)
    hm = q.head_mask
    for v in bits(hm):
        adj[v] |= hm & ~(1 << v)
    memo: dict[int, set] = {}

    def filled(elim: int, v: int) -> int:
        """Remaining variables joined to v through eliminated ones (order does not matter)."""
        reach, stack, out = 1 << v, [v], 0
        while stack:
            u = stack.pop()
            for w in bits(adj[u] & ~reach):
                reach |= 1 << w
                if elim >> w & 1:
                    stack.append(w)
                else:
                    out |= 1 << w
        return out

    def bags_from(elim: int) -> set:
        got = memo.get(elim)
        if got is not None:
            return got
        remaining = q.all_mask & ~elim
        if remaining == 0:
            memo[elim] = {frozenset()}
            return memo[elim]
        out = set()
        for v in bits(remaining):
            bag = filled(elim, v) | (1 << v)
            for rest in bags_from(elim | (1 << v)):
                out.add(_maximal(rest | {bag}))
        memo[elim] = out
        return out

    seen = set()
    for bagset in sorted(bags_from(0), key=lambda bs: sorted(bits(b) for b in bs)):
        key = tuple(sorted(bagset))
        if key in seen:
            continue
        seen.add(key)
        bags = sorted(bagset, key=lambda b: sorted(bits(b)))
        for td in _junction_trees(q, bags):
            yield td


def _maximal(bags: set) -> frozenset:
    return frozenset(b for b in bags if b and not any(b != o and b & o == b for o in bags))


def _junction_trees(q: Query, bags: list[int]) -> Iterator[TreeDecomposition]:
    n = len(bags)
    names = [f"b{i}" for i in range(n)]
    # Maximum-weight spanning tree on separator sizes (Prim, ties by index).
    in_tree = {0}
    edges: list[tuple[int, int]] = []
    while len(in_tree) < n:
        best = None
        for i in in_tree:
            for j in range(n):
                if j in in_tree:
                    continue
                w = bin(bags[i] & bags[j]).count("1")
                if best is None or w > best[0]:
                    best = (w, i, j)
        _, i, j = best
        edges.append((i, j))
        in_tree.add(j)
    adj: dict[int, list[int]] = {i: [] for i in range(n)}
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    hm = q.head_mask
    for root in range(n):
        if hm & ~bags[root]:
            continue
        parent: dict[str, str | None] = {names[root]: None}
        stack = [root]
        while stack:
            u = stack.pop()
            for w in adj[u]:
                if names[w] not in parent:
                    parent[names[w]] = names[u]
                    stack.append(w)
        covering = {}
        for a, am in zip(q.atoms, q.atom_masks):
            covering[a.name] = names[next(i for i in range(n) if am & ~bags[i] == 0)]
        yield TreeDecomposition(
            {names[i]: q.names(bags[i]) for i in range(n)}, parent, covering
        )
