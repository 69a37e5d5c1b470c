from dataclasses import dataclass

import numpy as np
import pytest

import oracles
from sbrbench.dataio import SessionDataset
from sbrbench.evaluation import (
    ModelOutputError,
    evaluate,
    fit_and_evaluate,
    iterate_events,
    rank_of_target,
)
from sbrbench.models import SequentialRules, SessionModel, make_model, rank_topk


@dataclass(frozen=True)
class Fixed(SessionModel):
    """Always recommends the same item ids with descending scores."""

    items: tuple = ()

    def score_indices(self, prefix, query_time):
        enc = self.index.vocab.encode(list(self.items))
        return enc, np.arange(len(enc), 0, -1, dtype=float)


@dataclass(frozen=True)
class Broken(SessionModel):
    def score_indices(self, prefix, query_time):
        return np.array([0]), np.array([np.nan])


def test_events_per_position():
    test = SessionDataset.from_records([("s", "A", 10), ("s", "B", 20), ("s", "C", 30)])
    events = list(iterate_events(test))
    assert [(e.prefix, e.target, e.query_time) for e in events] == [(("A",), "B", 20), (("A", "B"), "C", 30)]


def test_rank_of_target():
    assert rank_of_target(["C", "A", "B"], "A") == 2
    assert rank_of_target(["C"], "A") is None
    with pytest.raises(ModelOutputError):
        rank_of_target(["A", "A"], "A")


def test_hand_metrics():
    train = SessionDataset.from_sequences([["A", "B"], ["B", "C"], ["C", "D"], ["A", "A"]])
    test = SessionDataset.from_sequences([["X", "B", "C"]], start=1_700_000_000)
    model = Fixed(items=("C", "B")).fit(train)
    report, _ = evaluate(model, test, cutoffs=(1, 2))
    # events: target B (rank 2), target C (rank 1)
    assert report.event_count == 2
    assert report.mrr == {1: 0.5, 2: 0.75}
    assert report.hr == {1: 0.5, 2: 1.0}
    assert report.cov == {1: 1 / 4, 2: 2 / 4}
    # pop(C)=2, pop(B)=2, max pop(A)=3
    assert report.pop[2] == pytest.approx(2 / 3)


def test_matches_bruteforce_walk(synth_split):
    model = SequentialRules(max_steps=5).fit(synth_split.train)
    pop = model.popularity

    def recommend(prefix):
        return rank_topk(model.score(prefix), 20, pop)

    mrr, hr, n = oracles.metrics(recommend, synth_split.test.sequences(), (5, 10, 20))
    report, _ = evaluate(model, synth_split.test, cutoffs=(20, 5, 10))
    assert report.cutoffs == (5, 10, 20)
    assert report.event_count == n
    for k in (5, 10, 20):
        assert report.mrr[k] == pytest.approx(mrr[k], abs=1e-12)
        assert report.hr[k] == pytest.approx(hr[k], abs=1e-12)
    report.check()


def test_coverage_and_popularity_bruteforce(synth_split):
    model = make_model("sfsknn", {"k": 50, "m": 200}).fit(synth_split.train)
    pop = model.popularity
    top = max(pop.values())
    seen, pops = set(), []
    for e in iterate_events(synth_split.test):
        rec = rank_topk(model.score(e.prefix, e.query_time), 10, pop)
        seen.update(rec)
        pops.extend(pop[i] / top for i in rec)
    report, _ = evaluate(model, synth_split.test, cutoffs=(10,))
    assert report.cov[10] == pytest.approx(len(seen) / len(pop))
    assert report.pop[10] == pytest.approx(np.mean(pops))


def test_workers_do_not_change_metrics(synth_split):
    model = make_model("stan", {"k": 50, "m": 200}).fit(synth_split.train)
    one, _ = evaluate(model, synth_split.test, workers=1)
    three, _ = evaluate(model, synth_split.test, workers=3)
    assert one == three


def test_external_popularity(synth_split):
    model = SequentialRules().fit(synth_split.train)
    flat = {i: 1 for i in model.popularity}
    report, _ = evaluate(model, synth_split.test, train_popularity=flat)
    assert report.pop[20] == pytest.approx(1.0)


def test_non_finite_scores_rejected():
    train = SessionDataset.from_sequences([["A", "B"]])
    with pytest.raises(ModelOutputError):
        evaluate(Broken().fit(train), train)


def test_timing_fields(synth_split):
    fitted, report, timing = fit_and_evaluate(SequentialRules(), synth_split.train, synth_split.test)
    assert fitted.index.n_sessions == synth_split.train.n_sessions
    assert timing.train_time >= 0 and timing.mean_predict_time > 0


def test_check_catches_violation():
    from sbrbench.evaluation import MetricReport

    bad = MetricReport((10, 20), {10: 0.5, 20: 0.4}, {10: 0.6, 20: 0.7}, {}, {}, 3)
    with pytest.raises(AssertionError):
        bad.check()
