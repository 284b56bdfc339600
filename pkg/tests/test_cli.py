import json
import os
import subprocess
import sys

import pytest

from spq.cli import main
from spq.fixtures import load_plan
from spq.plans import loads_plan


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


@pytest.fixture
def path3_data(tmp_path):
    d = tmp_path / "data"
    d.mkdir()
    write(d / "R1.tsv", "A\tB\t#value\na\tb\t2\na2\tb\t3\n")
    write(d / "R2.tsv", "B\tC\t#value\nb\tc\t5\nb\tc2\t7\n")
    return str(d)


@pytest.fixture
def chain_plan(tmp_path):
    plan = {"kind": "pt", "tree": {"var": "A", "children": [{"var": "B", "children": [{"var": "C", "children": []}]}]}}
    return write(tmp_path / "chain.json", json.dumps(plan))


def test_eval_path3(path3_data, chain_plan, capsys):
    assert main(["eval", "--query", "path3", "--data", path3_data, "--plan", chain_plan, "--meter"]) == 0
    out = capsys.readouterr()
    assert out.out == "#value\n60\n"
    assert "steps=" in out.err and "aux_cells_peak=" in out.err


def test_eval_by_class_and_out_file(path3_data, tmp_path, capsys):
    out = tmp_path / "r.tsv"
    assert main(["eval", "--query", "path3", "--data", path3_data, "--class", "ptcr", "--space-budget", "0",
                 "--out", str(out)]) == 0
    assert out.read_text() == "#value\n60\n"


def test_eval_head_output_decodes_strings(path3_data, tmp_path, capsys):
    q = write(tmp_path / "q.spq", "Q(A) <- R1(A,B), R2(B,C).")
    assert main(["eval", "--query", q, "--data", path3_data, "--class", "gj", "--semiring", "minplus"]) == 0
    assert capsys.readouterr().out == "A\t#value\na\t7\na2\t8\n"


def test_malformed_query_exit_2(tmp_path, path3_data, chain_plan, capsys):
    q = write(tmp_path / "bad.spq", "Q() <- R1(A,B) R2(B,C).")
    assert main(["eval", "--query", q, "--data", path3_data, "--plan", chain_plan]) == 2
    assert "bad.spq:1:16:" in capsys.readouterr().err


def test_missing_query_exit_2(path3_data, chain_plan):
    assert main(["eval", "--query", "no_such_query", "--data", path3_data, "--plan", chain_plan]) == 2


def test_plan_with_unknown_variable_exit_3(tmp_path, path3_data, capsys):
    plan = write(tmp_path / "p.json", json.dumps({"kind": "gj", "order": ["A", "B", "Z"]}))
    assert main(["eval", "--query", "path3", "--data", path3_data, "--plan", plan]) == 3
    assert "Z" in capsys.readouterr().err


def test_data_mismatch_exit_4(tmp_path, chain_plan):
    d = tmp_path / "bad"
    d.mkdir()
    write(d / "R1.tsv", "a\tb\tc\td\n")
    write(d / "R2.tsv", "b\tc\n")
    assert main(["eval", "--query", "path3", "--data", str(d), "--plan", chain_plan]) == 4


def test_lex_assertion_flag_passes(tmp_path, capsys):
    data = tmp_path / "d"
    assert main(["gen", "--query", "fig7", "--n", "40", "--out", str(data)]) == 0
    assert main(["eval", "--query", "fig7", "--data", str(data), "--plan", "fig8_ptcr", "--assert-lex"]) == 0


def test_validate(capsys):
    assert main(["validate", "--query", "fig6", "--plan", "fig6_ptcr"]) == 0
    assert capsys.readouterr().out.strip() == "valid ptcr plan: s=1 t=2"


def test_frontier_writes_round_trippable_witnesses(tmp_path, capsys):
    out = tmp_path / "w"
    assert main(["frontier", "--query", "path3", "--class", "td[gj]", "--out-dir", str(out)]) == 0
    lines = capsys.readouterr().out.splitlines()
    rows = [ln for ln in lines if ln.startswith("s=")]
    assert {tuple(r.split()[:2]) for r in rows} == {("s=0", "t=2"), ("s=1", "t=1")}
    for r in rows:
        path = r.split("plan=")[1]
        text = open(path).read()
        assert json.dumps(json.loads(text), indent=2, sort_keys=True) + "\n" == text
        loads_plan(text)


def test_frontier_includes_paper_points(tmp_path, capsys):
    assert main(["frontier", "--query", "fig6", "--class", "ptcr", "--out-dir", str(tmp_path / "a")]) == 0
    assert "s=1 t=2 " in capsys.readouterr().out
    assert main(["frontier", "--query", "fig2", "--class", "pt", "--out-dir", str(tmp_path / "b")]) == 0
    assert "s=0 t=3/2 " in capsys.readouterr().out


def test_frontier_budget_exhaustion_exit_5(tmp_path, capsys):
    code = main(["frontier", "--query", "fig9", "--class", "ptcr", "--budget-seconds", "0.3",
                 "--out-dir", str(tmp_path)])
    assert code == 5
    assert "NONEXHAUSTIVE" in capsys.readouterr().out


def test_best_time(tmp_path, capsys):
    assert main(["best-time", "--query", "fig6", "--class", "ptcr", "--space-budget", "1",
                 "--out-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("t=2 plan=")
    path = out.split("plan=")[1].strip()
    assert os.path.exists(path)


def test_best_time_requires_budget():
    assert main(["best-time", "--query", "fig6", "--class", "ptcr"]) == 2


def test_gen_then_four_cycle_matches_td(tmp_path, capsys):
    data = str(tmp_path / "c")
    assert main(["gen", "--query", "cycle4", "--n", "300", "--seed", "2", "--out", data]) == 0
    capsys.readouterr()
    assert main(["eval", "--query", "cycle4", "--data", data, "--four-cycle"]) == 0
    a = capsys.readouterr().out
    assert main(["eval", "--query", "cycle4", "--data", data, "--plan", "cycle4_td_gj"]) == 0
    assert capsys.readouterr().out == a


def test_gen_is_deterministic(tmp_path):
    for d in ("x", "y"):
        assert main(["gen", "--query", "path3", "--n", "50", "--seed", "9", "--out", str(tmp_path / d)]) == 0
    assert (tmp_path / "x" / "R1.tsv").read_text() == (tmp_path / "y" / "R1.tsv").read_text()


def test_result_tsv_reloads(tmp_path, capsys):
    data = str(tmp_path / "d")
    assert main(["gen", "--query", "fig2_df", "--n", "60", "--out", data]) == 0
    out = tmp_path / "r.tsv"
    assert main(["eval", "--query", "fig2_df", "--data", data, "--plan", "fig3_pt_df", "--out", str(out)]) == 0
    rows = out.read_text().splitlines()
    assert rows[0] == "D\tF\t#value"
    assert len(rows) > 1


def test_slope_writes_report_and_plot(tmp_path, capsys):
    out = tmp_path / "s.tsv"
    code = main(["slope", "--query", "fig2", "--plan", "fig3_pt", "--sizes", "64,128,256,512", "--out", str(out)])
    assert code == 0
    assert out.exists() and (tmp_path / "s.png").exists()
    assert capsys.readouterr().out.rstrip().endswith("PASS")


def test_slope_fail_exit_1(tmp_path, capsys):
    out = tmp_path / "s.tsv"
    code = main(["slope", "--query", "path4", "--plan", "path4_pt", "--shape", "worst_case_hint",
                 "--sizes", "64,128,256,512", "--predicted-t", "1", "--out", str(out)])
    assert code == 1
    assert "FAIL" in capsys.readouterr().out


def test_slope_four_cycle(tmp_path, capsys):
    out = tmp_path / "c.tsv"
    assert main(["slope", "--query", "cycle4", "--four-cycle", "--sizes", "128,256,512,1024", "--out", str(out)]) == 0
    assert "# predicted s=1/2 t=3/2" in out.read_text()


def test_slope_rejects_short_size_list(tmp_path):
    assert main(["slope", "--query", "fig2", "--plan", "fig3_pt", "--sizes", "64,128", "--out", str(tmp_path / "s.tsv")]) == 2


def test_console_script_installed():
    res = subprocess.run([sys.executable, "-m", "spq.cli", "validate", "--query", "fig11", "--plan", "fig12_rpt"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0
    assert "s=1 t=5/2" in res.stdout


def test_fixture_plan_reference_resolves():
    assert load_plan("fig6_ptcr").kind == "ptcr"
