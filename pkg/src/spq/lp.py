"""Exact rational simplex for small packing LPs.

Solves ``max c.y  s.t.  A y <= b, y >= 0`` with ``b >= 0`` so the origin is
a feasible starting basis and no phase one is needed. Bland's rule keeps the
pivoting finite on degenerate problems.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence


class UnboundedLP(ValueError):
    """The objective can grow without bound."""


@dataclass(frozen=True)
class PackingSolution:
    value: Fraction
    primal: tuple[Fraction, ...]
    # Optimal multipliers of the <= rows, i.e. a solution of the dual covering LP.
    dual: tuple[Fraction, ...]


def maximize_packing(
    c: Sequence[Fraction], a: Sequence[Sequence[Fraction]], b: Sequence[Fraction]
) -> PackingSolution:
    m, n = len(a), len(c)
    if any(bi < 0 for bi in b):
        raise ValueError("right-hand side must be nonnegative")
    width = n + m
    # rows[i] = [coefficients of y (n), slacks (m), rhs]
    rows = []
    for i in range(m):
        row = [Fraction(v) for v in a[i]] + [Fraction(0)] * m + [Fraction(b[i])]
        row[n + i] = Fraction(1)
        rows.append(row)
    obj = [-Fraction(v) for v in c] + [Fraction(0)] * m + [Fraction(0)]
    basis = [n + i for i in range(m)]

    while True:
        entering = next((j for j in range(width) if obj[j] < 0), None)
        if entering is None:
            break
        leaving = None
        best = None
        for i, row in enumerate(rows):
            coef = row[entering]
            if coef > 0:
                ratio = row[-1] / coef
                if best is None or ratio < best or (ratio == best and basis[i] < basis[leaving]):
                    best, leaving = ratio, i
        if leaving is None:
            raise UnboundedLP("objective unbounded")
        _pivot(rows, obj, leaving, entering)
        basis[leaving] = entering

    primal = [Fraction(0)] * width
    for i, var in enumerate(basis):
        primal[var] = rows[i][-1]
    return PackingSolution(
        value=obj[-1],
        primal=tuple(primal[:n]),
        dual=tuple(obj[n : n + m]),
    )


def _pivot(rows: list[list[Fraction]], obj: list[Fraction], r: int, col: int) -> None:
    pivot_row = rows[r]
    p = pivot_row[col]
    if p != 1:
        rows[r] = pivot_row = [v / p for v in pivot_row]
    for i, row in enumerate(rows):
        if i != r and row[col] != 0:
            f = row[col]
            rows[i] = [u - f * v for u, v in zip(row, pivot_row)]
    f = obj[col]
    if f != 0:
        obj[:] = [u - f * v for u, v in zip(obj, pivot_row)]
