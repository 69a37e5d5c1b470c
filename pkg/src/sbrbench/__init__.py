"""Benchmarking toolkit for session-based recommendation baselines."""

__version__ = "0.1.0"

from sbrbench.dataio import (
    DatasetStats,
    InteractionEvent,
    Session,
    SessionDataset,
    TrainTestSplit,
    compute_stats,
    ingest,
    preprocess,
    split_by_days,
    temporal_fraction,
)
from sbrbench.evaluation import MetricReport, TimingReport, evaluate, iterate_events, rank_of_target
from sbrbench.models import (
    SFSKNN,
    STAN,
    VSTAN,
    SequentialRules,
    SessionKNN,
    make_model,
    rank_topk,
)

__all__ = [
    "__version__",
    "DatasetStats",
    "InteractionEvent",
    "MetricReport",
    "SFSKNN",
    "STAN",
    "SequentialRules",
    "Session",
    "SessionDataset",
    "SessionKNN",
    "TimingReport",
    "TrainTestSplit",
    "VSTAN",
    "compute_stats",
    "evaluate",
    "ingest",
    "iterate_events",
    "make_model",
    "preprocess",
    "rank_of_target",
    "rank_topk",
    "split_by_days",
    "temporal_fraction",
]
