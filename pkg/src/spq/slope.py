"""Empirical scaling check: run an evaluator over growing instances and fit log-log slopes."""

from __future__ import annotations

import math
import statistics
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

from .engine import EvalResult, ResourceMeter, evaluate
from .four_cycle import eval_four_cycle
from .generate import generate_instance
from .query import Query
from .relation import Database
from .semiring import NAT, Semiring

DEFAULT_TOLERANCE = Fraction(1, 4)


@dataclass
class SlopeReport:
    sizes: list[int]
    db_sizes: list[int]
    steps: list[int]
    aux_cells_peak: list[int]
    index_cells: list[int]
    seconds: list[float]
    predicted: tuple[Fraction, Fraction]
    space_tolerance: Fraction = DEFAULT_TOLERANCE
    time_tolerance: Fraction = DEFAULT_TOLERANCE
    label: str = ""
    space_slope: float = field(init=False)
    time_slope: float = field(init=False)

    def __post_init__(self):
        if len(self.sizes) < 4:
            raise ValueError("need at least 4 sizes")
        if any(b <= a for a, b in zip(self.sizes, self.sizes[1:])):
            raise ValueError("sizes must be strictly increasing")
        self.space_slope = fit_slope(self.db_sizes, self.aux_cells_peak)
        self.time_slope = fit_slope(self.db_sizes, self.steps)

    @property
    def space_ok(self) -> bool:
        return self.space_slope <= float(self.predicted[0] + self.space_tolerance)

    @property
    def time_ok(self) -> bool:
        return self.time_slope <= float(self.predicted[1] + self.time_tolerance)

    @property
    def passed(self) -> bool:
        return self.space_ok and self.time_ok

    def to_tsv(self) -> str:
        lines = ["n\tdb_size\tsteps\taux_cells_peak\tindex_cells\tseconds"]
        for row in zip(self.sizes, self.db_sizes, self.steps, self.aux_cells_peak, self.index_cells, self.seconds):
            lines.append("\t".join(str(v) if not isinstance(v, float) else f"{v:.4f}" for v in row))
        s, t = self.predicted
        lines.append(f"# predicted s={s} t={t}")
        lines.append(
            f"# space slope={self.space_slope:.3f} bound={float(s + self.space_tolerance):.3f} "
            f"{'PASS' if self.space_ok else 'FAIL'}"
        )
        lines.append(
            f"# time slope={self.time_slope:.3f} bound={float(t + self.time_tolerance):.3f} "
            f"{'PASS' if self.time_ok else 'FAIL'}"
        )
        return "\n".join(lines) + "\n"

    def plot(self, path: str) -> None:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(6, 4.5))
        xs = self.db_sizes
        for ys, slope, bound, name in (
            (self.steps, self.time_slope, self.predicted[1] + self.time_tolerance, "steps"),
            (self.aux_cells_peak, self.space_slope, self.predicted[0] + self.space_tolerance, "aux cells (peak)"),
        ):
            ys = [max(1, y) for y in ys]
            line = ax.loglog(xs, ys, "o-", label=f"{name}: slope {slope:.2f}")[0]
            # Reference line with the allowed slope through the first point.
            ref = [ys[0] * (x / xs[0]) ** float(bound) for x in xs]
            ax.loglog(xs, ref, "--", color=line.get_color(), alpha=0.5, label=f"{name}: bound {float(bound):.2f}")
        ax.set_xlabel("|D| (tuples)")
        ax.set_ylabel("count")
        ax.set_title(self.label or "scaling")
        ax.legend(fontsize=8)
        fig.tight_layout()
        fig.savefig(path, dpi=110)
        plt.close(fig)


def fit_slope(xs: list[int], ys: list[int]) -> float:
    """Least-squares slope of log y against log x (values below 1 are clamped to 1)."""
    lx = [math.log(x) for x in xs]
    ly = [math.log(max(1, y)) for y in ys]
    return statistics.linear_regression(lx, ly).slope


def run_slope(
    q: Query,
    run: Callable[[Database, ResourceMeter], EvalResult],
    sizes: list[int],
    predicted: tuple[Fraction, Fraction],
    *,
    seed: int = 0,
    shape: str = "random",
    k: Semiring = NAT,
    space_tolerance: Fraction = DEFAULT_TOLERANCE,
    time_tolerance: Fraction = DEFAULT_TOLERANCE,
    label: str = "",
) -> SlopeReport:
    db_sizes, steps, aux, idx, secs = [], [], [], [], []
    for n in sizes:
        db = generate_instance(q, n, seed, shape, k)
        meter = ResourceMeter()
        start = time.perf_counter()
        run(db, meter)
        secs.append(time.perf_counter() - start)
        db_sizes.append(db.size)
        steps.append(meter.steps)
        aux.append(meter.aux_cells_peak)
        idx.append(meter.index_cells)
    return SlopeReport(
        list(sizes), db_sizes, steps, aux, idx, secs, predicted, Fraction(space_tolerance), Fraction(time_tolerance),
        label,
    )


def plan_runner(q: Query, plan, k: Semiring = NAT, assert_lex: bool = False):
    def run(db: Database, meter: ResourceMeter) -> EvalResult:
        return evaluate(q, db, k, plan, meter, assert_lex=assert_lex)

    return run


def four_cycle_runner(q: Query, k: Semiring = NAT):
    def run(db: Database, meter: ResourceMeter) -> EvalResult:
        return eval_four_cycle(q, db, k, meter)

    return run
