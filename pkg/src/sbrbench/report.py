"""Results CSV bookkeeping and plain-text result tables."""

from __future__ import annotations

import csv
from pathlib import Path

from sbrbench import __version__

TIMING_COLUMNS = ("t_time_min", "p_time_ms")
KEY_COLUMNS = ("dataset", "model", "config_hash", "seed")
BEST, SECOND = "**", "_"


def result_columns(cutoffs) -> list[str]:
    kmax = max(cutoffs)
    return (
        ["dataset", "model"]
        + [f"mrr@{k}" for k in cutoffs]
        + [f"hr@{k}" for k in cutoffs]
        + [f"cov@{kmax}", f"pop@{kmax}", "t_time_min", "p_time_ms", "events", "seed", "config_hash", "version"]
    )


def result_row(dataset, model, report, timing, seed, config_hash) -> dict:
    kmax = max(report.cutoffs)
    row = {"dataset": dataset, "model": model}
    for k in report.cutoffs:
        row[f"mrr@{k}"] = f"{report.mrr[k]:.6f}"
    for k in report.cutoffs:
        row[f"hr@{k}"] = f"{report.hr[k]:.6f}"
    row[f"cov@{kmax}"] = f"{report.cov[kmax]:.6f}"
    row[f"pop@{kmax}"] = f"{report.pop[kmax]:.6f}"
    row["t_time_min"] = f"{timing.train_time:.6f}"
    row["p_time_ms"] = f"{timing.mean_predict_time:.6f}"
    row["events"] = str(report.event_count)
    row["seed"] = str(seed)
    row["config_hash"] = config_hash
    row["version"] = __version__
    return row


def read_results(path) -> list[dict]:
    path = Path(path)
    if not path.is_file() or path.stat().st_size == 0:
        return []
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def upsert_result(path, row: dict) -> None:
    """Add ``row``; an earlier row with the same (dataset, model, config, seed) is replaced in place."""
    rows = read_results(path)
    key = tuple(row[c] for c in KEY_COLUMNS)
    for i, old in enumerate(rows):
        if tuple(old.get(c) for c in KEY_COLUMNS) == key:
            rows[i] = row
            break
    else:
        rows.append(row)
    header = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=header, extrasaction="ignore")
        writer.writeheader()
        writer.writerows(rows)


def _mark(values: list[float]) -> list[str]:
    values = [round(v, 3) for v in values]  # ties as printed
    distinct = sorted(set(values), reverse=True)
    best = distinct[0] if distinct else None
    second = distinct[1] if len(distinct) > 1 else None
    out = []
    for v in values:
        text = f"{v:.3f}"
        if v == best:
            text = f"{BEST}{text}{BEST}"
        elif v == second:
            text = f"{SECOND}{text}{SECOND}"
        out.append(text)
    return out


def _table(title: str, header: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(header)]
    line = "-" * (sum(widths) + 3 * (len(widths) - 1))
    fmt = lambda cells: " | ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(cells, widths)))  # noqa: E731
    out = [title, line, fmt(header), line]
    out += [fmt(r) for r in rows]
    out.append(line)
    return "\n".join(out)


def render_report(rows: list[dict]) -> str:
    """Per-dataset accuracy tables sorted by MRR@20, plus a beyond-accuracy table.

    ``**x**`` marks the best value of a column and ``_x_`` the runner-up.
    Only models present in the results are shown.
    """
    if not rows:
        return _table("(no results)", ["model", "mrr@10", "mrr@20", "hr@10", "hr@20"], [])
    blocks = []
    for dataset in sorted({r["dataset"] for r in rows}):
        group = [r for r in rows if r["dataset"] == dataset]
        metric_cols = [c for c in group[0] if c.startswith(("mrr@", "hr@"))]
        target = max((c for c in metric_cols if c.startswith("mrr@")), key=lambda c: int(c.split("@")[1]))
        group.sort(key=lambda r: (-float(r[target]), r["model"]))
        columns = {c: _mark([float(r[c]) for r in group]) for c in metric_cols}
        body = [[r["model"]] + [columns[c][i] for c in metric_cols] for i, r in enumerate(group)]
        blocks.append(_table(f"{dataset}: accuracy, sorted by {target.upper()}", ["model"] + metric_cols, body))

        extra_cols = [c for c in group[0] if c.startswith(("cov@", "pop@"))]
        cov = next(c for c in extra_cols if c.startswith("cov@"))
        group.sort(key=lambda r: (-float(r[cov]), r["model"]))
        body = [
            [r["model"]] + [f"{float(r[c]):.3f}" for c in extra_cols] + [f"{float(r['t_time_min']):.3f}", f"{float(r['p_time_ms']):.3f}"]
            for r in group
        ]
        blocks.append(
            _table(f"{dataset}: beyond accuracy, sorted by {cov.upper()}", ["model"] + extra_cols + ["T-Time (m)", "P-Time (ms)"], body)
        )
    return "\n\n".join(blocks)


def render_sweeps(results: dict) -> str:
    """Sweep summaries (model -> SweepResult), sorted by max-min difference."""
    ordered = sorted(results.items(), key=lambda kv: (-kv[1].diff, kv[0]))
    rows = [[kind, f"{r.mean:.3f} ± {r.std:.3f}", f"{r.max:.3f}", f"{r.min:.3f}", f"{r.diff:.3f}"] for kind, r in ordered]
    variable = next(iter(results.values())).variable if results else "?"
    return _table(f"sweep over {variable}, sorted by difference", ["model", "MRR@20 mean ± std", "max", "min", "diff"], rows)
