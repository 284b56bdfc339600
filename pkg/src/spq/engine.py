"""Evaluators for every plan class, a brute-force oracle, and the resource meter.

All evaluators run over dictionary-encoded values and sorted trie indexes. The
meter counts loop iterations, index probes and semiring operations as steps,
and live entries of OUT/TMP relations, caches and messages as auxiliary cells.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Mapping

from .plans import (
    AtomRole,
    GJPlan,
    PTCPlan,
    PTCRPlan,
    PTCRInfo,
    PTPlan,
    RPTPlan,
    TDPlan,
    TreeInfo,
    check,
    identity_roles,
    rpt_subquery,
    td_subqueries,
)
from .query import Query
from .relation import Database, DataMismatch, KRelation, TrieIndex, _build
from .semiring import Semiring

RECURSION_GUARD = 256

_EMPTY: dict = {}


class LexOrderViolation(AssertionError):
    """Relevant-ancestor values arrived out of lexicographic order at a node."""


@dataclass
class ResourceMeter:
    steps: int = 0
    aux_cells_now: int = 0
    aux_cells_peak: int = 0
    index_cells: int = 0
    # Per source relation: how many times one of its values entered a product.
    multiplications: Counter = field(default_factory=Counter)

    def alloc(self, n: int) -> None:
        self.aux_cells_now += n
        if self.aux_cells_now > self.aux_cells_peak:
            self.aux_cells_peak = self.aux_cells_now

    def free(self, n: int) -> None:
        self.aux_cells_now -= n
        assert self.aux_cells_now >= 0, "freed more cells than allocated"

    def snapshot(self) -> "ResourceMeter":
        return ResourceMeter(
            self.steps, self.aux_cells_now, self.aux_cells_peak, self.index_cells, Counter(self.multiplications)
        )

    def report(self) -> str:
        return f"steps={self.steps}\naux_cells_peak={self.aux_cells_peak}\nindex_cells={self.index_cells}\n"


@dataclass
class EvalResult:
    output: KRelation
    meter: ResourceMeter


def _cells(rel: Mapping, width: int) -> int:
    return len(rel) * (width + 1)


# ---------------------------------------------------------------- oracle


def eval_oracle(q: Query, db: Database, k: Semiring) -> KRelation:
    """Sum over all assignments of the product of atom values (pruned backtracking)."""
    db.check(q)
    order = list(q.variables)
    pos = {v: i for i, v in enumerate(order)}
    domain = []
    for v in order:
        dom = None
        for a in q.atoms:
            if v in a.vars:
                col = a.vars.index(v)
                vals = {t[col] for t in db.relations[a.name].entries}
                dom = vals if dom is None else dom & vals
        domain.append(sorted(dom))
    # Atoms become checkable once their last variable in ``order`` is assigned.
    ready: list[list] = [[] for _ in order]
    for a in q.atoms:
        last = max(pos[v] for v in a.vars)
        ready[last].append((db.relations[a.name].entries, [pos[v] for v in a.vars]))
    head = [pos[v] for v in q.head]
    x = [None] * len(order)
    out: dict[tuple, Any] = {}

    def walk(i: int, acc):
        if i == len(order):
            key = tuple(x[j] for j in head)
            out[key] = k.plus(out[key], acc) if key in out else acc
            return
        for val in domain[i]:
            x[i] = val
            prod = acc
            for entries, cols in ready[i]:
                w = entries.get(tuple(x[j] for j in cols))
                if w is None:
                    break
                prod = k.times(prod, w)
            else:
                walk(i + 1, prod)

    walk(0, k.one)
    return KRelation(q.head, {t: v for t, v in out.items() if not k.is_zero(v)})


# ---------------------------------------------------------------- run context


class _Run:
    """Per-evaluation state shared by nested evaluators: semiring, meter, sources, indexes."""

    def __init__(self, db: Database, k: Semiring, meter: ResourceMeter, assert_lex: bool):
        self.db = db
        self.k = k
        self.meter = meter
        self.assert_lex = assert_lex
        self.messages: dict[str, KRelation] = {}
        self._local: dict = {}
        self._counted: set = set()

    def relation(self, source: str) -> KRelation:
        if source in self.messages:
            return self.messages[source]
        return self.db.relations[source]

    def index(self, source: str, columns: tuple[int, ...]) -> TrieIndex:
        key = (source, columns)
        if source in self.messages:
            idx = self._local.get(key)
            if idx is None:
                idx = self._local[key] = _build(self.messages[source], columns)
        else:
            idx = self.db.index(source, columns)
        if key not in self._counted:
            self._counted.add(key)
            self.meter.index_cells += idx.cells
        return idx


class _Probe:
    """Access path of one atom at one of its variables: prefix positions plus trie level."""

    __slots__ = ("prefix", "levels", "member", "leaf", "source")

    def __init__(self, prefix, levels, member, leaf, source):
        self.prefix = prefix
        self.levels = levels
        self.member = member
        self.leaf = leaf
        self.source = source


def _atom_probes(
    run: _Run, q: Query, roles: Mapping[str, AtomRole], rank, atoms=None, first=None
) -> dict[int, list[_Probe]]:
    """Per variable id, one probe per atom containing it, with atom variables sorted by ``rank``.

    ``first`` optionally maps an atom to the variable ids that must lead its order.
    """
    idx_of = q.index
    probes: dict[int, list[_Probe]] = {}
    for a in q.atoms if atoms is None else atoms:
        role = roles[a.name]
        ids = [idx_of[v] for v in a.vars]
        pos_of = {i: p for p, i in enumerate(ids)}
        ordered = sorted(ids, key=rank)
        if first is not None:
            lead = first(a, ids)
            ordered = lead + [i for i in ordered if i not in lead]
        arity = len(run.relation(role.source).schema)
        used = [role.columns[pos_of[i]] for i in ordered]
        rest = [c for c in range(arity) if c not in used]
        idx = run.index(role.source, tuple(used + rest))
        for j, v in enumerate(ordered):
            ends = role.annotated and j == len(ordered) - 1
            probes.setdefault(v, []).append(
                _Probe(tuple(ordered[:j]), idx.levels[j], idx.member[j + 1], idx.leaf if ends else None, role.source)
            )
    return probes


def _extend(run: _Run, probes: list[_Probe], x: list):
    """Values of a variable consistent with every probe, in increasing order, with the product of ending atoms."""
    meter = run.meter
    k = run.k
    if not probes:
        raise DataMismatch("variable occurs in no atom")
    keyed = []
    best = None
    for p in probes:
        key = tuple([x[i] for i in p.prefix])
        lst = p.levels.get(key)
        meter.steps += 1
        if not lst:
            return
        keyed.append((p, key))
        if best is None or len(lst) < len(best[1]):
            best = (len(keyed) - 1, lst)
    drive, values = best
    others = [pk for i, pk in enumerate(keyed) if i != drive]
    enders = [pk for pk in keyed if pk[0].leaf is not None]
    one, times = k.one, k.times
    mult = meter.multiplications
    for a in values:
        meter.steps += 1
        ok = True
        for p, key in others:
            meter.steps += 1
            if key + (a,) not in p.member:
                ok = False
                break
        if not ok:
            continue
        s = one
        for p, key in enders:
            s = times(s, p.leaf[key + (a,)])
            meter.steps += 1
            mult[p.source] += 1
        yield a, s


def extension_iter(q: Query, db: Database, k: Semiring, a: str, bound: Mapping[str, Any], meter=None):
    """Values of ``a`` extending ``bound``, each with the product of atoms whose only unbound variable is ``a``."""
    if a in bound:
        raise ValueError(f"{a} is already bound")
    meter = meter or ResourceMeter()
    run = _Run(db, k, meter, False)
    idx_of = q.index
    target = idx_of[a]
    bound_ids = {idx_of[v] for v in bound}
    atoms = [at for at in q.atoms if a in at.vars]
    roles = identity_roles(q)
    # Bound variables first, then ``a``, then the rest.
    probes = _atom_probes(
        run, q, roles, lambda i: (0 if i in bound_ids else 1 if i == target else 2, i), atoms
    )
    x = [None] * len(q.variables)
    for v, val in bound.items():
        x[idx_of[v]] = val
    return _extend(run, probes[target], x)


# ---------------------------------------------------------------- generic join


class _GJEval:
    def __init__(self, run: _Run, q: Query, roles, plan: GJPlan):
        self.run = run
        self.q = q
        rank = {q.index[v]: i for i, v in enumerate(plan.order)}
        self.order = [q.index[v] for v in plan.order]
        self.probes = _atom_probes(run, q, roles, rank.__getitem__)
        self.head = [q.index[v] for v in q.head]
        self.layout = self.head

    def evaluate(self) -> dict:
        run, k = self.run, self.run.k
        meter = run.meter
        x = [None] * len(self.q.variables)
        out: dict = {}
        width = len(self.head) + 1
        order, probes, head = self.order, self.probes, self.head
        n = len(order)

        def walk(level, acc):
            if level == n:
                key = tuple([x[i] for i in head])
                if key in out:
                    out[key] = k.plus(out[key], acc)
                    meter.steps += 1
                else:
                    out[key] = acc
                    meter.alloc(width)
                return
            v = order[level]
            for a, s in _extend(run, probes[v], x):
                x[v] = a
                meter.steps += 1
                walk(level + 1, k.times(acc, s))

        walk(0, k.one)
        return out


# ---------------------------------------------------------------- pseudo-tree family


_UNSET = object()


class _TreeEval:
    """Algorithm-1 style recursion; caching mode ``pt``, ``ptc`` or ``ptcr``."""

    def __init__(self, run: _Run, q: Query, roles, plan, inputs=()):
        if len(q.variables) > RECURSION_GUARD:
            raise ValueError("too many variables for recursive evaluation")
        self.run = run
        self.q = q
        self.roles = roles
        n = len(q.variables)
        if isinstance(plan, PTPlan):
            self.mode = "pt"
            self.info = TreeInfo(q, plan.tree)
        elif isinstance(plan, PTCPlan):
            self.mode = "ptc"
            self.info = TreeInfo(q, plan.tree)
            self.cached = q.mask(plan.caches)
        else:
            base = plan.base if isinstance(plan, RPTPlan) else plan
            self.mode = "ptcr"
            self.info = PTCRInfo(q, base.tree, dict(base.cache_size), inputs)
        info = self.info
        self.x: list = [None] * n
        self.probes = _atom_probes(run, q, roles, info.depth.__getitem__)
        head = q.head_mask
        self.in_head = [bool(head >> v & 1) for v in range(n)]
        self.children = info.children
        self.layout: list[list[int]] = [[] for _ in range(n)]
        self.widths: list[list[int]] = [[] for _ in range(n)]
        for v in reversed(info.order):
            lay = [v] if self.in_head[v] else []
            ws = [len(lay)]
            for c in self.children[v]:
                lay = lay + self.layout[c]
                ws.append(len(lay))
            self.layout[v] = lay
            self.widths[v] = ws
        self.input_mask = getattr(info, "input_mask", 0)
        self.real_root = next(v for v in info.order if not self.input_mask >> v & 1)
        self.cache: list[dict] = [dict() for _ in range(n)]
        self.cache_cells = [0] * n
        if self.mode == "ptc":
            self.key_ids = [info.by_depth(info.con[v]) for v in range(n)]
        if self.mode == "ptcr":
            self.ria_ids = [info.by_depth(info.ria[v]) for v in range(n)]
            self.scon_ids = [info.by_depth(info.scon[v]) for v in range(n)]
            self.last: list = [_UNSET] * n
            self.fill_probes = [self._fill_probes(v) for v in range(n)]
        self.subs: dict[int, tuple] = {}
        if isinstance(plan, RPTPlan):
            for anchor, sub_plan in plan.replacements:
                a = q.index[anchor]
                sub_q, sub_roles, sub_inputs = rpt_subquery(q, roles, info, a)
                sub = _TreeEval(run, sub_q, sub_roles, sub_plan, sub_inputs)
                names = [sub_q.variables[i] for i in sub.layout[sub.real_root]]
                key_pos = [names.index(q.variables[i]) for i in self.scon_ids[a]]
                out_pos = [names.index(q.variables[i]) for i in self.layout[a]]
                in_ids = [sub_q.index[v] for v in sub_inputs]
                self.subs[a] = (sub, key_pos, out_pos, in_ids)

    # -- fillCache support: nested join over scon(A) given ria(A)

    def _fill_probes(self, v: int) -> list[list[_Probe]]:
        info, q = self.info, self.q
        out = []
        bound = info.ria[v]
        for u in self.scon_ids[v]:
            atoms = [a for a, am in zip(q.atoms, q.atom_masks) if am >> u & 1]
            b = bound

            def lead(a, ids, b=b, u=u):
                return [i for i in sorted(ids, key=info.depth.__getitem__) if b >> i & 1] + [u]

            support = {n: AtomRole(r.source, r.columns, False, r.message) for n, r in self.roles.items()}
            probes = _atom_probes(self.run, q, support, info.depth.__getitem__, atoms, lead)
            out.append(probes[u])
            bound |= 1 << u
        return out

    # -- recursion

    def solve(self, v: int) -> tuple[dict, bool]:
        if self.mode == "pt":
            return self.body(v), True
        if self.mode == "ptc":
            if not self.cached >> v & 1:
                return self.body(v), True
            key = tuple([self.x[i] for i in self.key_ids[v]])
            self.run.meter.steps += 1
            got = self.cache[v].get(key)
            if got is None:
                got = self.body(v)
                self.cache[v][key] = got
                self.run.meter.alloc(len(key))
                self.cache_cells[v] += len(key) + _cells(got, len(self.layout[v]))
            return got, False
        x = self.x
        r = tuple([x[i] for i in self.ria_ids[v]])
        self.run.meter.steps += 1
        if self.last[v] is _UNSET or self.last[v] != r:
            if self.run.assert_lex and self.last[v] is not _UNSET and r < self.last[v]:
                raise LexOrderViolation(
                    f"at {self.q.variables[v]}: {r} arrived after {self.last[v]}"
                )
            self.clear(v)
            self.last[v] = r
            if v in self.subs:
                self.fill_replaced(v)
            else:
                self.fill(v, 0)
        key = tuple([x[i] for i in self.scon_ids[v]])
        return self.cache[v].get(key, _EMPTY), False

    def clear(self, v: int) -> None:
        self.run.meter.free(self.cache_cells[v])
        self.cache_cells[v] = 0
        self.cache[v] = {}

    def fill(self, v: int, j: int) -> None:
        x = self.x
        scon = self.scon_ids[v]
        if j == len(scon):
            got = self.body(v)
            if got:
                key = tuple([x[i] for i in scon])
                self.cache[v][key] = got
                self.run.meter.alloc(len(key))
                self.cache_cells[v] += len(key) + _cells(got, len(self.layout[v]))
            return
        u = scon[j]
        saved = x[u]
        for a, _ in _extend(self.run, self.fill_probes[v][j], x):
            x[u] = a
            self.fill(v, j + 1)
        x[u] = saved

    def fill_replaced(self, v: int) -> None:
        sub, key_pos, out_pos, in_ids = self.subs[v]
        for i, val in zip(in_ids, self.last[v]):
            sub.x[i] = val
        root = sub.real_root
        got, owned = sub.solve(root)
        meter, k = self.run.meter, self.run.k
        cache = self.cache[v]
        width = len(out_pos)
        for t, val in got.items():
            key = tuple([t[p] for p in key_pos])
            row = tuple([t[p] for p in out_pos])
            bucket = cache.get(key)
            if bucket is None:
                bucket = cache[key] = {}
                meter.alloc(len(key))
                self.cache_cells[v] += len(key)
            if row in bucket:
                bucket[row] = k.plus(bucket[row], val)
                meter.steps += 1
            else:
                bucket[row] = val
                meter.alloc(width + 1)
                self.cache_cells[v] += width + 1
            meter.steps += 1
        if owned:
            meter.free(_cells(got, len(sub.layout[root])))
        else:
            sub.clear(root)
            sub.last[root] = _UNSET

    def body(self, v: int) -> dict:
        run = self.run
        meter, k = run.meter, run.k
        times, plus = k.times, k.plus
        x = self.x
        out: dict = {}
        in_head = self.in_head[v]
        widths = self.widths[v]
        out_width = widths[-1] + 1
        for a, s in _extend(run, self.probes[v], x):
            x[v] = a
            tmp = {(a,) if in_head else (): s}
            meter.alloc(widths[0] + 1)
            tmp_cells = widths[0] + 1
            for ci, c in enumerate(self.children[v]):
                got, owned = self.solve(c)
                if not got:
                    meter.free(tmp_cells)
                    tmp = _EMPTY
                    tmp_cells = 0
                    break
                new = {}
                for t1, v1 in tmp.items():
                    for t2, v2 in got.items():
                        new[t1 + t2] = times(v1, v2)
                        meter.steps += 1
                new_cells = _cells(new, widths[ci + 1])
                meter.alloc(new_cells)
                meter.free(tmp_cells)
                if owned:
                    meter.free(_cells(got, len(self.layout[c])))
                tmp, tmp_cells = new, new_cells
            for t, val in tmp.items():
                if t in out:
                    out[t] = plus(out[t], val)
                    meter.steps += 1
                else:
                    out[t] = val
                    meter.alloc(out_width)
            meter.free(tmp_cells)
        return out

    def evaluate(self) -> dict:
        got, owned = self.solve(self.real_root)
        if not owned:
            # Hand the result over from the root cache to the caller.
            got = dict(got)
            self.run.meter.alloc(_cells(got, len(self.layout[self.real_root])))
        return got


# ---------------------------------------------------------------- dispatch


def _to_relation(q: Query, layout_names, result: dict, k: Semiring) -> KRelation:
    pos = [list(layout_names).index(v) for v in q.head]
    return KRelation(q.head, {tuple(t[p] for p in pos): v for t, v in result.items() if not k.is_zero(v)})


def _evaluate(run: _Run, q: Query, roles, plan) -> tuple[dict, list[str]]:
    """Result rows keyed by a layout of variable names; result cells stay allocated."""
    if isinstance(plan, GJPlan):
        ev = _GJEval(run, q, roles, plan)
        return ev.evaluate(), list(q.head)
    if isinstance(plan, (PTPlan, PTCPlan, PTCRPlan, RPTPlan)):
        ev = _TreeEval(run, q, roles, plan, plan.inputs if isinstance(plan, RPTPlan) else ())
        got = ev.evaluate()
        return got, [q.variables[i] for i in ev.layout[ev.real_root]]
    if isinstance(plan, TDPlan):
        return _evaluate_td(run, q, roles, plan)
    raise TypeError(type(plan).__name__)


def _evaluate_td(run: _Run, q: Query, roles, plan: TDPlan) -> tuple[dict, list[str]]:
    td = plan.td
    subs = td_subqueries(q, td, roles)
    inner = plan.inner_of
    k, meter = run.k, run.meter
    scalars: dict[str, Any] = {}
    result: dict = {}
    layout: list[str] = []
    for node in td.postorder():
        sub_q, sub_roles = subs[node]
        got, lay = _evaluate(run, sub_q, sub_roles, inner[node])
        width = len(lay)
        factor = k.one
        for child in td.children(node):
            if child in scalars:
                factor = k.times(factor, scalars.pop(child))
                meter.steps += 1
            src = f"msg:{child}"
            if src in run.messages:
                rel = run.messages.pop(src)
                meter.free(_cells(rel.entries, len(rel.schema)))
        if factor != k.one:
            if k.is_zero(factor):
                meter.free(_cells(got, width))
                got = {}
            else:
                for t in got:
                    got[t] = k.times(got[t], factor)
                    meter.steps += 1
        if td.parent_of[node] is None:
            result, layout = got, lay
        elif not sub_q.head:
            scalars[node] = got.get((), k.zero)
            meter.free(_cells(got, 0))
        else:
            rel = _to_relation(sub_q, lay, got, k)
            run.messages[f"msg:{node}"] = rel
    return result, layout


def evaluate(
    q: Query,
    db: Database,
    k: Semiring,
    plan,
    meter: ResourceMeter | None = None,
    *,
    assert_lex: bool = False,
    validate_plan: bool = True,
) -> EvalResult:
    """Evaluate ``q`` on ``db`` with ``plan`` (any plan class)."""
    db.check(q)
    if validate_plan:
        check(q, plan)
    meter = meter if meter is not None else ResourceMeter()
    run = _Run(db, k, meter, assert_lex)
    got, layout = _evaluate(run, q, identity_roles(q), plan)
    return EvalResult(_to_relation(q, layout, got, k), meter.snapshot())


def eval_gj(q, db, k, plan: GJPlan, meter=None) -> EvalResult:
    return evaluate(q, db, k, plan, meter)


def eval_pt(q, db, k, plan: PTPlan, meter=None) -> EvalResult:
    return evaluate(q, db, k, plan, meter)


def eval_ptc(q, db, k, plan: PTCPlan, meter=None) -> EvalResult:
    return evaluate(q, db, k, plan, meter)


def eval_ptcr(q, db, k, plan: PTCRPlan, meter=None, *, assert_lex=False) -> EvalResult:
    return evaluate(q, db, k, plan, meter, assert_lex=assert_lex)


def eval_rpt(q, db, k, plan: RPTPlan, meter=None, *, assert_lex=False) -> EvalResult:
    return evaluate(q, db, k, plan, meter, assert_lex=assert_lex)


def eval_td(q, db, k, plan: TDPlan, meter=None, *, assert_lex=False) -> EvalResult:
    return evaluate(q, db, k, plan, meter, assert_lex=assert_lex)


def annotation_owners(q: Query, plan) -> Counter:
    """How many (sub-)query atoms multiply each source relation's values; 1 everywhere means a partition."""
    owners: Counter = Counter()

    def walk(sub_q, roles, p, inputs=()):
        if isinstance(p, TDPlan):
            subs = td_subqueries(sub_q, p.td, roles)
            for node, inner in p.inner:
                walk(*subs[node], inner)
            return
        if isinstance(p, RPTPlan):
            info = PTCRInfo(sub_q, p.base.tree, dict(p.base.cache_size), p.inputs)
            replaced = 0
            for a, sp in p.replacements:
                replaced |= info.descc[sub_q.index[a]]
                walk(*rpt_subquery(sub_q, roles, info, sub_q.index[a])[:2], sp)
            for a, am in zip(sub_q.atoms, sub_q.atom_masks):
                role = roles[a.name]
                if role.annotated and not role.message and not (info.deepest(am) in _bitset(replaced)):
                    owners[role.source] += 1
            return
        for a in sub_q.atoms:
            role = roles[a.name]
            if role.annotated and not role.message:
                owners[role.source] += 1

    walk(q, identity_roles(q), plan)
    return owners


def _bitset(mask: int) -> set[int]:
    return {i for i in range(mask.bit_length()) if mask >> i & 1}
