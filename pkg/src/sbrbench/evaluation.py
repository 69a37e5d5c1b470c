"""Incremental-reveal evaluation: MRR@K, HR@K, Cov@K, Pop@K and timings."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from sbrbench.dataio import SessionDataset
from sbrbench.models import SessionModel, rank_topk_indices

DEFAULT_CUTOFFS = (10, 20)


class ModelOutputError(ValueError):
    """A model produced scores the evaluator cannot rank."""


@dataclass(frozen=True)
class PredictionEvent:
    session_id: str
    prefix: tuple
    target: str
    query_time: int


def iterate_events(test: SessionDataset) -> Iterator[PredictionEvent]:
    """Yield one event per position after the first, session by session."""
    frame = test.frame
    items = frame["item_id"].to_numpy()
    times = frame["time"].to_numpy()
    sids = frame["session_id"].to_numpy()
    b = test._bounds
    for s in range(test.n_sessions):
        lo, hi = b[s], b[s + 1]
        for t in range(lo + 1, hi):
            yield PredictionEvent(str(sids[lo]), tuple(items[lo:t]), items[t], int(times[t]))


def rank_of_target(recommendation: Sequence, target) -> int | None:
    """1-based position of ``target`` in the list, or None on a miss."""
    if len(set(recommendation)) != len(recommendation):
        raise ModelOutputError("recommendation list contains duplicates")
    for pos, item in enumerate(recommendation, start=1):
        if item == target:
            return pos
    return None


@dataclass(frozen=True)
class MetricReport:
    cutoffs: tuple[int, ...]
    mrr: dict[int, float]
    hr: dict[int, float]
    cov: dict[int, float]
    pop: dict[int, float]
    event_count: int

    def check(self) -> None:
        """Assert the ordering invariants that must hold for any model."""
        ks = sorted(self.cutoffs)
        for k in ks:
            assert 0.0 <= self.mrr[k] <= self.hr[k] <= 1.0, (k, self.mrr[k], self.hr[k])
        for a, b in zip(ks, ks[1:]):
            assert self.hr[a] <= self.hr[b] and self.mrr[a] <= self.mrr[b]

    def as_row(self) -> dict:
        row = {}
        for k in self.cutoffs:
            row[f"mrr@{k}"] = self.mrr[k]
        for k in self.cutoffs:
            row[f"hr@{k}"] = self.hr[k]
        return row


@dataclass(frozen=True)
class TimingReport:
    train_time: float  # minutes
    mean_predict_time: float  # milliseconds per list


@dataclass
class _Chunk:
    ranks: np.ndarray
    lists: list = field(default_factory=list)
    seconds: float = 0.0


def _run_sessions(model: SessionModel, enc, times, bounds, sessions, kmax, popularity) -> _Chunk:
    ranks, lists, spent = [], [], 0.0
    for s in sessions:
        lo, hi = bounds[s], bounds[s + 1]
        for t in range(lo + 1, hi):
            start = time.perf_counter()
            items, scores = model.score_indices(enc[lo:t], int(times[t]))
            if not np.all(np.isfinite(scores)):
                raise ModelOutputError(f"{type(model).__name__} returned non-finite scores")
            top = rank_topk_indices(items, scores, kmax, popularity)
            spent += time.perf_counter() - start
            hit = np.flatnonzero(top == enc[t])
            ranks.append(int(hit[0]) + 1 if hit.size else 0)
            lists.append(top)
    return _Chunk(np.asarray(ranks, np.int64), lists, spent)


def evaluate(
    model: SessionModel,
    test: SessionDataset,
    train_popularity=None,
    cutoffs: Sequence[int] = DEFAULT_CUTOFFS,
    workers: int = 1,
    train_seconds: float = 0.0,
) -> tuple[MetricReport, TimingReport]:
    """Score every prediction event of ``test`` and aggregate the metrics.

    Averages are per event. Coverage is the share of the training catalog that
    shows up in at least one top-K list; popularity averages
    ``count / max count`` over all recommended slots.

    ``train_popularity`` (item id -> training count) defaults to the counts
    the model was fitted on. With ``workers > 1`` sessions are scored in
    parallel threads; results are reduced in event order, so metrics do not
    depend on the worker count.
    """
    cutoffs = tuple(sorted(cutoffs))
    kmax = cutoffs[-1]
    index = model.index
    if train_popularity is None:
        popularity = index.popularity.astype(np.float64)
    else:
        popularity = np.array([train_popularity.get(i, 0) for i in index.vocab.ids], np.float64)
    enc = index.vocab.encode(test.frame["item_id"].to_numpy())
    times = test.frame["time"].to_numpy()
    bounds = test._bounds
    sessions = np.arange(test.n_sessions)

    if workers > 1 and len(sessions) > 1:
        parts = np.array_split(sessions, workers)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(lambda p: _run_sessions(model, enc, times, bounds, p, kmax, popularity), parts))
    else:
        chunks = [_run_sessions(model, enc, times, bounds, sessions, kmax, popularity)]

    ranks = np.concatenate([c.ranks for c in chunks]) if chunks else np.empty(0, np.int64)
    lists = [top for c in chunks for top in c.lists]
    n = len(ranks)
    catalog = max(len(index.vocab), 1)
    max_pop = popularity.max() if popularity.size else 0.0

    mrr, hr, cov, pop = {}, {}, {}, {}
    for k in cutoffs:
        hit = (ranks > 0) & (ranks <= k)
        hr[k] = float(hit.mean()) if n else 0.0
        mrr[k] = float(np.where(hit, 1.0 / np.maximum(ranks, 1), 0.0).mean()) if n else 0.0
        slots = np.concatenate([top[:k] for top in lists]) if lists else np.empty(0, np.int64)
        cov[k] = np.unique(slots).size / catalog
        pop[k] = float((popularity[slots] / max_pop).mean()) if slots.size and max_pop > 0 else 0.0

    report = MetricReport(cutoffs, mrr, hr, cov, pop, n)
    seconds = sum(c.seconds for c in chunks)
    timing = TimingReport(train_seconds / 60.0, 1000.0 * seconds / n if n else 0.0)
    return report, timing


def fit_and_evaluate(model: SessionModel, train: SessionDataset, test: SessionDataset, seed=None, **kwargs):
    """Fit on ``train`` (timed) and evaluate on ``test``."""
    start = time.perf_counter()
    fitted = model.fit(train, seed=seed)
    elapsed = time.perf_counter() - start
    report, timing = evaluate(fitted, test, train_seconds=elapsed, **kwargs)
    return fitted, report, timing
