import csv

from sbrbench import __version__
from sbrbench.evaluation import MetricReport, TimingReport
from sbrbench.report import read_results, render_report, render_sweeps, result_columns, result_row, upsert_result
from sbrbench.tuning import SweepResult


def make_row(model, mrr20, dataset="DIGI", seed=1, cov=0.5):
    report = MetricReport((10, 20), {10: mrr20 - 0.01, 20: mrr20}, {10: 0.5, 20: 0.6}, {10: cov, 20: cov}, {10: 0.1, 20: 0.1}, 9)
    return result_row(dataset, model, report, TimingReport(0.5, 2.0), seed, f"h{model}")


def test_row_columns():
    row = make_row("sr", 0.3)
    assert list(row) == result_columns((10, 20))
    assert row["mrr@20"] == "0.300000" and row["version"] == __version__


def test_upsert_is_idempotent(tmp_path):
    path = tmp_path / "results.csv"
    upsert_result(path, make_row("sr", 0.3))
    upsert_result(path, make_row("stan", 0.35))
    upsert_result(path, make_row("sr", 0.31))
    rows = read_results(path)
    assert [(r["model"], r["mrr@20"]) for r in rows] == [("sr", "0.310000"), ("stan", "0.350000")]
    with open(path, newline="") as fh:
        assert next(csv.reader(fh)) == result_columns((10, 20))


def test_report_sorted_and_marked():
    rows = [make_row("sr", 0.337, cov=0.4), make_row("sfsknn", 0.351, cov=0.2), make_row("vstan", 0.346, cov=0.6)]
    text = render_report(rows)
    acc, beyond = text.split("\n\n")
    lines = [l for l in acc.splitlines() if "|" in l][1:]
    assert [l.split("|")[0].strip() for l in lines] == ["sfsknn", "vstan", "sr"]
    assert "**0.351**" in lines[0] and "_0.346_" in lines[1]
    assert "sorted by MRR@20" in acc
    order = [l.split("|")[0].strip() for l in beyond.splitlines() if "|" in l][1:]
    assert order == ["vstan", "sr", "sfsknn"]


def test_report_only_present_models():
    text = render_report([make_row("stan", 0.3)])
    assert "stan" in text
    for absent in ("gru4rec", "narm", "sr-gnn", "gce-gnn"):
        assert absent not in text.lower()


def test_report_ties_share_mark():
    text = render_report([make_row("a", 0.3001), make_row("b", 0.3004), make_row("c", 0.2)])
    assert text.count("**0.300**") == 2 and "_0.200_" in text


def test_report_groups_datasets():
    text = render_report([make_row("sr", 0.3, dataset="RETAIL"), make_row("sr", 0.2, dataset="DIGI")])
    assert text.index("DIGI:") < text.index("RETAIL:")


def test_empty_report(tmp_path):
    assert read_results(tmp_path / "none.csv") == []
    assert "(no results)" in render_report([])


def test_sweep_table_sorted_by_diff():
    text = render_sweeps({"sr": SweepResult("k", [1, 2], [0.3, 0.3]), "stan": SweepResult("k", [1, 2], [0.2, 0.3])})
    names = [l.split("|")[0].strip() for l in text.splitlines() if "|" in l][1:]
    assert names == ["stan", "sr"]
    assert "0.250 ± 0.050 | 0.300 | 0.200 | 0.100" in text
