import csv
import json

import pytest

from sbrbench import __version__
from sbrbench.cli import main
from sbrbench.synthetic import click_log, write_raw

CONFIG = """\
[dataset]
name = SYN
format = digi
path = raw/train-item-views.csv
test_days = 2

[experiment]
seed = 5
n_trials = 3
out = runs

[model.stan]
k = 20, 50
m = 100, 200

[model.sfsknn]
k = 20, 50
m = 200
"""


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    write_raw(click_log(n_sessions=900, n_items=150, days=12, seed=21), root / "raw" / "train-item-views.csv", "digi")
    (root / "exp.cfg").write_text(CONFIG)
    return root


def run(workdir, *args):
    return main(["--config", str(workdir / "exp.cfg"), *args])


@pytest.fixture(scope="module")
def prepared(workdir):
    assert run(workdir, "prepare") == 0
    return workdir / "runs"


def test_prepare_outputs(prepared):
    data = prepared / "data"
    for name in ("events", "train", "test", "subtrain", "validation", "stats"):
        assert (data / f"{name}.csv").is_file()
    manifest = json.loads((data / "manifest.json").read_text())
    assert manifest["version"] == __version__ and len(manifest["config_hash"]) == 12
    with open(data / "stats.csv") as fh:
        row = next(csv.DictReader(fh))
    assert float(row["avg_session_length"]) == round(int(row["clicks"]) / int(row["sessions"]), 2)
    assert int(row["categories"]) > 0


def test_prepare_rerun_identical(workdir, prepared):
    before = {p.name: p.read_bytes() for p in (prepared / "data").iterdir()}
    assert run(workdir, "prepare") == 0
    after = {p.name: p.read_bytes() for p in (prepared / "data").iterdir()}
    assert before == after


def test_missing_raw_file(tmp_path, capsys):
    (tmp_path / "exp.cfg").write_text(CONFIG)
    assert main(["--config", str(tmp_path / "exp.cfg"), "prepare"]) == 2
    assert "train-item-views.csv" in capsys.readouterr().err


def test_malformed_raw_file(tmp_path, capsys):
    (tmp_path / "raw").mkdir()
    (tmp_path / "raw" / "train-item-views.csv").write_text("sessionId;userId;itemId;timeframe;eventdate\n1;NA;2;x;2016-01-01\n")
    (tmp_path / "exp.cfg").write_text(CONFIG)
    assert main(["--config", str(tmp_path / "exp.cfg"), "prepare"]) == 2
    assert "train-item-views.csv:2:" in capsys.readouterr().err


def test_tune_outputs(workdir, prepared):
    assert run(workdir, "tune", "--model", "stan") == 0
    best = (prepared / "tuning" / "stan_best.cfg").read_text()
    for key in ("k", "m", "lambda1", "lambda2", "lambda3"):
        assert f"\n{key} = " in best
    assert f"version = {__version__}" in best and "config_hash = " in best
    with open(prepared / "tuning" / "stan_trials.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["trial", "k", "m", "lambda1", "lambda2", "lambda3", "objective", "seconds"]
    assert len(rows) == 4
    summary = json.loads((prepared / "tuning" / "stan_summary.json").read_text())
    assert summary["best_objective"] == pytest.approx(max(float(r[-2]) for r in rows[1:]), abs=1e-6)
    assert summary["n_trials"] == 3

    assert run(workdir, "tune", "--model", "stan") == 0
    assert (prepared / "tuning" / "stan_best.cfg").read_text() == best


def test_tune_smoke_caps_trials(workdir, prepared):
    assert run(workdir, "tune", "--model", "sfsknn", "--n-trials", "10", "--smoke") == 0
    summary = json.loads((prepared / "tuning" / "sfsknn_summary.json").read_text())
    assert summary["n_trials"] == 3


def test_tune_on_test(workdir, prepared, capsys):
    assert run(workdir, "tune", "--model", "stan", "--tune-on-test") == 0
    text = (prepared / "tuning" / "stan_tune_on_test.txt").read_text()
    assert text.startswith("METHODOLOGICAL FLAW DEMO")
    record = json.loads((prepared / "tuning" / "stan_tune_on_test.json").read_text())
    assert record["label"] == "METHODOLOGICAL FLAW DEMO"
    assert record["test_tuned"]["test_mrr@20"] >= record["validation_tuned"]["test_mrr@20"]
    assert "METHODOLOGICAL FLAW DEMO" in capsys.readouterr().out


def test_tune_all_failed(tmp_path, prepared):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(CONFIG.replace("out = runs", f"out = {prepared}") + "\n[model.sr]\nmax_steps = -1, -2\n")
    assert main(["--config", str(cfg), "tune", "--model", "sr"]) == 3


def test_eval_requires_tuned_config(workdir, prepared, capsys):
    assert run(workdir, "eval", "--model", "vstan") == 4
    assert "vstan_best.cfg" in capsys.readouterr().err


def test_eval_and_report(workdir, prepared, capsys):
    assert run(workdir, "tune", "--model", "sr") == 0
    assert run(workdir, "eval", "--model", "sr") == 0
    assert run(workdir, "eval", "--model", "sr") == 0
    assert run(workdir, "eval", "--model", "stan") == 0
    with open(prepared / "results.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert sorted(r["model"] for r in rows) == ["sr", "stan"]
    assert all(r["version"] == __version__ and r["config_hash"] for r in rows)
    capsys.readouterr()
    assert run(workdir, "report") == 0
    out = capsys.readouterr().out
    assert "SYN: accuracy, sorted by MRR@20" in out and "**" in out
    assert (prepared / "report.txt").read_text().strip() == out.strip()


def test_eval_explicit_best_config(workdir, prepared, tmp_path):
    path = tmp_path / "mine.cfg"
    path.write_text("[best]\nmodel = sfsknn\nk = 10\nm = 50\n")
    assert run(workdir, "eval", "--model", "sfsknn", "--best-config", str(path)) == 0
    assert run(workdir, "eval", "--model", "stan", "--best-config", str(path)) == 5


def test_sweeps(workdir, prepared, capsys):
    run(workdir, "tune", "--model", "sr")
    assert run(workdir, "sweep", "--model", "stan", "--variable", "k", "--values", "10,20,40") == 0
    with open(prepared / "sweeps" / "stan_k.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["value", "mrr@20"] and [r[0] for r in rows[1:]] == ["10", "20", "40"]
    with open(prepared / "sweeps" / "stan_k_hist.csv") as fh:
        hist = list(csv.DictReader(fh))
    scores = [float(r[1]) for r in rows[1:]]
    assert len(hist) == 20 and sum(int(h["count"]) for h in hist) == 3
    assert float(hist[0]["bin_low"]) == pytest.approx(min(scores), abs=1e-6)
    assert float(hist[-1]["bin_high"]) == pytest.approx(max(scores), abs=1e-6)
    summary = json.loads((prepared / "sweeps" / "stan_k_summary.json").read_text())
    assert summary["diff"] == pytest.approx(summary["max"] - summary["min"])

    capsys.readouterr()
    assert run(workdir, "sweep", "--model", "sr,stan", "--variable", "seed", "--values", "random:4") == 0
    table = (prepared / "sweeps" / "summary_seed.txt").read_text()
    assert table.count("| 0.000\n") == 2


def test_sweep_bad_arguments(workdir, prepared):
    assert run(workdir, "sweep", "--model", "stan", "--variable", "depth", "--values", "1,2") == 5
    assert run(workdir, "sweep", "--model", "stan", "--variable", "k", "--values", "random:3") == 5
    assert run(workdir, "tune", "--model", "narm") == 5


def test_argparse_errors_exit_5(workdir):
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 5
    with pytest.raises(SystemExit) as info:
        run(workdir, "tune")
    assert info.value.code == 5
    assert main(["prepare"]) == 5


def test_missing_splits(tmp_path):
    (tmp_path / "exp.cfg").write_text(CONFIG)
    assert main(["--config", str(tmp_path / "exp.cfg"), "tune", "--model", "sr"]) == 4


def test_empty_report(tmp_path, capsys):
    assert main(["--out", str(tmp_path / "nothing"), "report"]) == 0
    assert "(no results)" in capsys.readouterr().out


def test_flag_overrides(workdir, prepared, tmp_path):
    out = tmp_path / "elsewhere"
    assert run(workdir, "--out", str(out), "--seed", "9", "prepare") == 0
    assert (out / "data" / "train.csv").read_bytes() == (prepared / "data" / "train.csv").read_bytes()
