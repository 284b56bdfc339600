"""Seeded synthetic databases for tests and scaling runs."""

from __future__ import annotations

import math
import random

from .query import Query
from .relation import Database, KRelation
from .semiring import NAT, Semiring

SHAPES = ("random", "worst_case_hint")


def random_value(rng: random.Random, k: Semiring):
    if k.id == "bool":
        return True
    if k.id == "nat":
        return rng.randint(1, 3)
    if k.id == "real":
        return rng.uniform(0.5, 2.0)
    return rng.randint(0, 9)


def generate_instance(q: Query, n: int, seed: int, shape: str = "random", k: Semiring = NAT) -> Database:
    """About ``n`` tuples per relation, deterministic in ``seed``.

    ``random``: uniform tuples over a domain of about n/4 values per column, so
    every value has a handful of partners. ``worst_case_hint``: star-shaped
    relations where value 0 joins with everything, which maximizes repeated
    sub-computations along chains.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if shape not in SHAPES:
        raise ValueError(f"unknown shape {shape!r}; choose from {', '.join(SHAPES)}")
    rng = random.Random(f"{seed}:{shape}:{n}")
    rels = {}
    for atom in q.atoms:
        r = len(atom.vars)
        if shape == "random":
            tuples = _uniform(rng, n, r)
        else:
            tuples = _star(n, r)
        rels[atom.name] = KRelation(atom.vars, {t: random_value(rng, k) for t in tuples})
    return Database(rels)


def _uniform(rng: random.Random, n: int, arity: int) -> list[tuple]:
    dom = max(2, -(-n // 4), math.ceil((2 * n) ** (1 / arity)))
    if arity == 1:
        dom = max(dom, 2 * n)
    seen: dict[tuple, None] = {}
    while len(seen) < n:
        seen.setdefault(tuple(rng.randrange(dom) for _ in range(arity)), None)
    return sorted(seen)


def _star(n: int, arity: int) -> list[tuple]:
    arm = max(1, n // arity)
    out: dict[tuple, None] = {}
    for col in range(arity):
        for i in range(arm):
            t = [0] * arity
            t[col] = i
            out.setdefault(tuple(t), None)
    return sorted(out)
