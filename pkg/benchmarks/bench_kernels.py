#!/usr/bin/env python3
"""Time the numba kernels against their numpy twins, plus one end-to-end evaluation.

    python3 benchmarks/bench_kernels.py [--sessions 20000] [--repeat 5]

Each kernel pair is checked for agreement before timing. The end-to-end part
runs ``evaluate`` in two subprocesses, one with ``SBRBENCH_DISABLE_NUMBA=1``.
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from sbrbench import kernels
from sbrbench.dataio import preprocess
from sbrbench.models import SessionIndex, SessionKNN
from sbrbench.synthetic import click_log


def best_of(fn, repeat):
    fn()  # warm-up (and JIT compile)
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def report(name, t_numba, t_numpy):
    print(f"{name:<14} numba {t_numba * 1e3:9.3f} ms   numpy {t_numpy * 1e3:9.3f} ms   speedup {t_numpy / t_numba:6.1f}x")


def bench_kernels(n_sessions, repeat, n_queries=200):
    data = preprocess(click_log(n_sessions=n_sessions, n_items=max(300, n_sessions // 20), days=60, seed=0))
    idx = SessionIndex.build(data)
    print(f"corpus: {data}")

    pairs = lambda f: lambda: f(idx.seq_ptr, idx.seq_items, 20)  # noqa: E731
    a, b = kernels.rule_pairs_loop(idx.seq_ptr, idx.seq_items, 20), kernels.rule_pairs_numpy(idx.seq_ptr, idx.seq_items, 20)
    assert np.allclose(kernels.aggregate_rules(*a, len(idx.vocab))[2], kernels.aggregate_rules(*b, len(idx.vocab))[2])
    report("rule_pairs", best_of(pairs(kernels.rule_pairs_loop), repeat), best_of(pairs(kernels.rule_pairs_numpy), repeat))

    # one batch of realistic queries: prefixes of recent sessions
    model = SessionKNN(k=100, m=1000).fit(data)
    rng = np.random.default_rng(1)
    queries = []
    for s in rng.integers(0, idx.n_sessions, size=n_queries):
        seq = idx.session_items(s)
        prefix = seq[: rng.integers(1, len(seq) + 1)]
        items, lastpos, weights, n = model._prefix_profile(prefix)
        queries.append((prefix, items, lastpos, weights, n, int(idx.start_times[s])))

    def run_candidates(f):
        return [f(q[1], idx.post_ptr, idx.post_sessions, 1000) for q in queries]

    cands = run_candidates(kernels.candidates_loop)
    assert all(np.array_equal(x, y) for x, y in zip(cands, run_candidates(kernels.candidates_numpy)))
    report(
        "candidates",
        best_of(lambda: run_candidates(kernels.candidates_loop), repeat),
        best_of(lambda: run_candidates(kernels.candidates_numpy), repeat),
    )

    def run_similarity(f):
        return [
            f(c, idx.set_ptr, idx.set_items, idx.start_times, q[1], q[3], float(q[4]), q[5], 10.0)
            for c, q in zip(cands, queries)
        ]

    sims = run_similarity(kernels.similarity_loop)
    assert all(np.allclose(x, y) for x, y in zip(sims, run_similarity(kernels.similarity_numpy)))
    report(
        "similarity",
        best_of(lambda: run_similarity(kernels.similarity_loop), repeat),
        best_of(lambda: run_similarity(kernels.similarity_numpy), repeat),
    )

    top = [(c[np.argsort(-s, kind="stable")[:100]], np.sort(s)[::-1][:100]) for c, s in zip(cands, sims)]

    def run_scores(f):
        return [
            f(n, s, idx.seq_ptr, idx.seq_items, q[1], q[2], int(q[0][-1]), 1.0, True)
            for (n, s), q in zip(top, queries)
        ]

    got = run_scores(kernels.item_scores_loop)
    assert all(np.allclose(x[1], y[1]) for x, y in zip(got, run_scores(kernels.item_scores_numpy)))
    report(
        "item_scores",
        best_of(lambda: run_scores(kernels.item_scores_loop), repeat),
        best_of(lambda: run_scores(kernels.item_scores_numpy), repeat),
    )


END_TO_END = """
import time
from sbrbench import _accel
from sbrbench.dataio import preprocess, split_by_days
from sbrbench.evaluation import evaluate
from sbrbench.models import STAN
from sbrbench.synthetic import click_log
split = split_by_days(preprocess(click_log(n_sessions={n}, n_items={items}, days=60, seed=0)), 3)
model = STAN(k=100, m=1000).fit(split.train)
evaluate(model, split.test.select_sessions(split.test.start_times <= split.test.start_times[5]))  # warm-up
start = time.perf_counter()
report, timing = evaluate(model, split.test)
print(_accel.USE_NUMBA, report.mrr[20], time.perf_counter() - start, report.event_count)
"""


def bench_end_to_end(n_sessions):
    code = END_TO_END.format(n=n_sessions, items=max(300, n_sessions // 20))
    results = {}
    for flag in ("0", "1"):
        out = subprocess.run(
            [sys.executable, "-c", code], env={**os.environ, "SBRBENCH_DISABLE_NUMBA": flag}, capture_output=True, text=True, check=True
        )
        use_numba, mrr, seconds, events = out.stdout.split()
        results[use_numba == "True"] = (float(mrr), float(seconds), int(events))
    (mrr_nb, t_nb, events), (mrr_np, t_np, _) = results[True], results[False]
    assert abs(mrr_nb - mrr_np) < 1e-12, (mrr_nb, mrr_np)
    print(f"\nSTAN evaluate, {events} events: numba {t_nb:.2f} s, numpy {t_np:.2f} s, speedup {t_np / t_nb:.1f}x (MRR@20 {mrr_nb:.4f} on both)")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sessions", type=int, default=20000)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    bench_kernels(args.sessions, args.repeat)
    bench_end_to_end(args.sessions)


if __name__ == "__main__":
    main()
