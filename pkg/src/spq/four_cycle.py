"""Scalar four-cycle evaluation by heavy/light partitioning.

Each relation is split at degree threshold ceil(sqrt(|E_i|)). Combinations with
a heavy value are handled by a scalar pseudo-tree rooted at that value, which is
instantiated at most sqrt(|E_i|) times. The all-light combination streams
(A1, A3) pairs from both sides of the cycle in sorted order and merge-joins them.
"""

from __future__ import annotations

import heapq
import math
from typing import Any

from .engine import EvalResult, ResourceMeter, evaluate
from .plans import PseudoTree, PTPlan
from .query import Atom, Query, QueryError
from .relation import Database, KRelation
from .semiring import Semiring

CYCLE = Query(
    (),
    (Atom("E1", ("A1", "A2")), Atom("E2", ("A2", "A3")), Atom("E3", ("A3", "A4")), Atom("E4", ("A1", "A4"))),
    name="cycle4",
)

# Pseudo-tree rooted at each variable, with the opposite variable next and the other two as leaves.
_ROOTED = {
    "A1": PTPlan(PseudoTree({"A1": None, "A3": "A1", "A2": "A3", "A4": "A3"})),
    "A2": PTPlan(PseudoTree({"A2": None, "A4": "A2", "A1": "A4", "A3": "A4"})),
    "A3": PTPlan(PseudoTree({"A3": None, "A1": "A3", "A2": "A1", "A4": "A1"})),
    "A4": PTPlan(PseudoTree({"A4": None, "A2": "A4", "A1": "A2", "A3": "A2"})),
}


def cycle_relations(q: Query, db: Database) -> dict[str, KRelation]:
    """Relations of a scalar 4-cycle query oriented as E1(A1,A2), E2(A2,A3), E3(A3,A4), E4(A1,A4)."""
    if q.head or len(q.atoms) != 4 or any(len(a.vars) != 2 for a in q.atoms) or len(q.variables) != 4:
        raise QueryError("expected a scalar query with four binary atoms on four variables")
    atoms = list(q.atoms)
    chain = [atoms.pop(0)]
    v0, cur = chain[0].vars
    path = [v0, cur]
    while atoms:
        nxt = next((a for a in atoms if cur in a.vars), None)
        if nxt is None:
            raise QueryError("atoms do not form a cycle")
        atoms.remove(nxt)
        chain.append(nxt)
        cur = nxt.vars[1] if nxt.vars[0] == cur else nxt.vars[0]
        path.append(cur)
    if path[-1] != path[0] or len(set(path[:4])) != 4:
        raise QueryError("atoms do not form a 4-cycle")
    names = ["A1", "A2", "A3", "A4"]
    rename = dict(zip(path[:4], names))
    out = {}
    for i, a in enumerate(chain):
        want = ("A1", "A4") if i == 3 else (names[i], names[i + 1])
        rel = db.relations[a.name]
        mine = tuple(rename[v] for v in a.vars)
        out[f"E{i + 1}"] = KRelation(mine, rel.entries).reorder(want)
    return out


def _split(rel: KRelation) -> tuple[dict, dict, dict]:
    """(first heavy, first light and second heavy, both light) parts of a binary relation."""
    thr = math.isqrt(len(rel) - 1) + 1 if rel.entries else 0
    deg0: dict = {}
    deg1: dict = {}
    for a, b in rel.entries:
        deg0[a] = deg0.get(a, 0) + 1
        deg1[b] = deg1.get(b, 0) + 1
    h, lh, ll = {}, {}, {}
    for t, v in rel.entries.items():
        if deg0[t[0]] >= thr:
            h[t] = v
        elif deg1[t[1]] >= thr:
            lh[t] = v
        else:
            ll[t] = v
    return h, lh, ll


def eval_four_cycle(q: Query, db: Database, k: Semiring, meter: ResourceMeter | None = None) -> EvalResult:
    meter = meter if meter is not None else ResourceMeter()
    rels = cycle_relations(q, db)
    parts = {name: _split(rel) for name, rel in rels.items()}
    for name, (h, lh, ll) in parts.items():
        meter.index_cells += 3 * (len(h) + len(lh) + len(ll))
    total = k.zero
    heavy_root = {"E1": ("A1", "A2"), "E2": ("A2", "A3"), "E3": ("A3", "A4"), "E4": ("A1", "A4")}
    current = dict(rels)
    for name in ("E1", "E2", "E3", "E4"):
        h, lh, ll = parts[name]
        for piece, var in ((h, heavy_root[name][0]), (lh, heavy_root[name][1])):
            if not piece:
                continue
            case = dict(current)
            case[name] = KRelation(rels[name].schema, piece)
            got = evaluate(CYCLE, Database(case), k, _ROOTED[var], meter, validate_plan=False)
            total = k.plus(total, got.output.entries.get((), k.zero))
            meter.steps += 1
            meter.free(len(got.output.entries))
        current[name] = KRelation(rels[name].schema, ll)
    total = k.plus(total, _all_light(current, k, meter))
    meter.steps += 1
    out = KRelation((), {} if k.is_zero(total) else {(): total})
    return EvalResult(out, meter.snapshot())


def _adjacency(entries: dict, swap: bool = False) -> dict[Any, list]:
    """Sorted neighbour lists keyed by the first column (second when ``swap``)."""
    adj: dict[Any, list] = {}
    for (a, b), v in entries.items():
        if swap:
            a, b = b, a
        adj.setdefault(a, []).append((b, v))
    for lst in adj.values():
        lst.sort()
    return adj


def _stream(meter: ResourceMeter, k: Semiring, lists: list[tuple[Any, list]]):
    """Merge sorted (a3, value) lists, each scaled by its weight, yielding (a3, summed value) in order."""
    heap = []
    for w, lst in lists:
        if lst:
            heap.append((lst[0][0], len(heap), 0, w, lst))
    heapq.heapify(heap)
    meter.alloc(2 * len(heap))
    current, acc = None, None
    try:
        while heap:
            a3, tie, i, w, lst = heap[0]
            val = k.times(w, lst[i][1])
            meter.steps += 2
            if a3 == current:
                acc = k.plus(acc, val)
                meter.steps += 1
            else:
                if current is not None:
                    yield current, acc
                current, acc = a3, val
            if i + 1 < len(lst):
                heapq.heapreplace(heap, (lst[i + 1][0], tie, i + 1, w, lst))
            else:
                heapq.heappop(heap)
                meter.free(2)
        if current is not None:
            yield current, acc
    finally:
        meter.free(2 * len(heap))


def _all_light(rels: dict[str, KRelation], k: Semiring, meter: ResourceMeter):
    e1 = _adjacency(rels["E1"].entries)
    e2 = _adjacency(rels["E2"].entries)
    e3 = _adjacency(rels["E3"].entries, swap=True)
    e4 = _adjacency(rels["E4"].entries)
    total = k.zero
    for a1 in sorted(e1.keys() & e4.keys()):
        meter.steps += 1
        left = _stream(meter, k, [(v, e2.get(a2, ())) for a2, v in e1[a1]])
        right = _stream(meter, k, [(v, e3.get(a4, ())) for a4, v in e4[a1]])
        lv = next(left, None)
        rv = next(right, None)
        while lv is not None and rv is not None:
            meter.steps += 1
            if lv[0] < rv[0]:
                lv = next(left, None)
            elif rv[0] < lv[0]:
                rv = next(right, None)
            else:
                total = k.plus(total, k.times(lv[1], rv[1]))
                meter.steps += 2
                lv = next(left, None)
                rv = next(right, None)
        for s in (left, right):
            s.close()
    return total
