from fractions import Fraction

import pytest

from spq.fixtures import load_plan, load_query
from spq.slope import SlopeReport, fit_slope, plan_runner, run_slope


def test_fit_slope_exact_power_law():
    xs = [10, 100, 1000, 10000]
    assert fit_slope(xs, [x**2 for x in xs]) == pytest.approx(2)
    assert fit_slope(xs, [7 for _ in xs]) == pytest.approx(0)
    assert fit_slope(xs, [0 for _ in xs]) == pytest.approx(0)


def _report(sizes, steps, aux):
    return SlopeReport(sizes, sizes, steps, aux, [0] * len(sizes), [0.0] * len(sizes), (Fraction(1), Fraction(2)))


def test_report_pass_fail():
    sizes = [10, 20, 40, 80]
    ok = _report(sizes, [s**2 for s in sizes], sizes)
    assert ok.passed
    bad = _report(sizes, [s**3 for s in sizes], sizes)
    assert bad.space_ok and not bad.time_ok and not bad.passed
    text = bad.to_tsv()
    assert text.splitlines()[0] == "n\tdb_size\tsteps\taux_cells_peak\tindex_cells\tseconds"
    assert "# time slope=3.000 bound=2.250 FAIL" in text


@pytest.mark.parametrize("sizes", [[1, 2, 3], [1, 3, 2, 4], [1, 1, 2, 3]])
def test_report_rejects_bad_sizes(sizes):
    with pytest.raises(ValueError):
        _report(sizes, [1] * len(sizes), [1] * len(sizes))


def test_plot_writes_png(tmp_path):
    sizes = [10, 20, 40, 80]
    path = tmp_path / "r.png"
    _report(sizes, [s**2 for s in sizes], sizes).plot(str(path))
    assert path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_scalar_pt_small_run():
    q, p = load_query("fig2"), load_plan("fig3_pt")
    report = run_slope(q, plan_runner(q, p), [64, 128, 256, 512], (Fraction(0), Fraction(3, 2)), seed=1)
    assert report.space_slope <= 0.1
    assert report.passed


def test_run_is_deterministic():
    q, p = load_query("path4"), load_plan("path4_ptc")
    a = run_slope(q, plan_runner(q, p), [32, 64, 128, 256], (Fraction(1), Fraction(1)), seed=3)
    b = run_slope(q, plan_runner(q, p), [32, 64, 128, 256], (Fraction(1), Fraction(1)), seed=3)
    assert (a.steps, a.aux_cells_peak, a.db_sizes) == (b.steps, b.aux_cells_peak, b.db_sizes)
