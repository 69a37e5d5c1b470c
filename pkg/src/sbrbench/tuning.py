"""Random-search tuning on a validation split, robustness sweeps, and the tune-on-test demo."""

from __future__ import annotations

import logging
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from sbrbench.dataio import SessionDataset, split_by_days
from sbrbench.evaluation import evaluate
from sbrbench.models import MODELS, TUNABLE, make_model

logger = logging.getLogger(__name__)

TARGET_CUTOFF = 20
REDRAW_ATTEMPTS = 10
DEFAULT_TRIALS = {"sr": 60, "stan": 40, "vstan": 40, "sfsknn": 40}
FLAW_LABEL = "METHODOLOGICAL FLAW DEMO"


class TuningError(RuntimeError):
    pass


class UnknownVariableError(ValueError):
    pass


@dataclass(frozen=True)
class Choice:
    values: tuple

    def __post_init__(self):
        if not self.values:
            raise ValueError("a choice needs at least one value")

    def sample(self, rng: np.random.Generator):
        return self.values[int(rng.integers(len(self.values)))]

    def __contains__(self, value):
        return value in self.values


@dataclass(frozen=True)
class Range:
    """Continuous range; ``log`` samples log-uniformly, ``none_prob`` mixes in "disabled"."""

    low: float
    high: float
    log: bool = False
    none_prob: float = 0.0

    def __post_init__(self):
        if not self.low < self.high:
            raise ValueError(f"range needs low < high, got [{self.low}, {self.high}]")
        if self.log and self.low <= 0:
            raise ValueError("log range needs a positive lower bound")

    def sample(self, rng: np.random.Generator):
        if self.none_prob > 0 and rng.random() < self.none_prob:
            return None
        if self.log:
            value = math.exp(rng.uniform(math.log(self.low), math.log(self.high)))
        else:
            value = rng.uniform(self.low, self.high)
        return min(max(float(f"{value:.4g}"), self.low), self.high)

    def __contains__(self, value):
        if value is None:
            return self.none_prob > 0
        return self.low <= value <= self.high


class SearchSpace:
    """Named dimensions, each a :class:`Choice` or a :class:`Range`."""

    def __init__(self, dims: dict):
        if not dims:
            raise ValueError("search space is empty")
        self.dims = dict(dims)

    def __repr__(self):
        return f"SearchSpace({self.dims!r})"

    def sample(self, rng: np.random.Generator) -> dict:
        return {name: dim.sample(rng) for name, dim in self.dims.items()}

    def __contains__(self, config: dict) -> bool:
        return all(config.get(name) in dim for name, dim in self.dims.items())

    @classmethod
    def default(cls, kind: str) -> "SearchSpace":
        return cls({name: DEFAULT_DIMS[name] for name in TUNABLE[kind]})


DEFAULT_DIMS = {
    "k": Choice((50, 100, 200, 500, 1000, 1500)),
    "m": Choice((500, 1000, 2500, 5000, 10000)),
    "lambda1": Range(0.1, 100.0, log=True, none_prob=0.2),
    "lambda2": Range(0.1, 100.0, log=True, none_prob=0.2),
    "lambda3": Range(0.1, 100.0, log=True, none_prob=0.2),
    "idf_power": Choice((0, 1, 2, 3)),
    "max_steps": Choice((None, 5, 10, 20)),
}


@dataclass
class Trial:
    index: int
    config: dict
    objective: float = 0.0
    seconds: float = 0.0
    failed: bool = False
    error: str = ""


@dataclass
class SearchResult:
    kind: str
    best_config: dict
    best_objective: float
    trials: list[Trial] = field(default_factory=list)

    @property
    def failures(self) -> int:
        return sum(t.failed for t in self.trials)


def make_validation_split(train: SessionDataset, test_days: int):
    """Hold out the last ``test_days`` days of the training data, same rules as the outer split."""
    split = split_by_days(train, test_days)
    return split.train, split.test


def objective(kind, config, fit_on, evaluate_on, seed=None, cutoff=TARGET_CUTOFF) -> float:
    model = make_model(kind, config).fit(fit_on, seed=seed)
    report, _ = evaluate(model, evaluate_on, cutoffs=(cutoff,))
    return report.mrr[cutoff]


def _key(config: dict) -> tuple:
    return tuple(sorted(config.items()))


def sample_configs(space: SearchSpace, n_trials: int, seed) -> list[dict]:
    rng = np.random.default_rng(seed)
    seen, configs = set(), []
    for _ in range(n_trials):
        for _ in range(REDRAW_ATTEMPTS):
            config = space.sample(rng)
            if _key(config) not in seen:
                break
        seen.add(_key(config))
        configs.append(config)
    return configs


def random_search(
    kind: str,
    space: SearchSpace,
    n_trials: int,
    seed,
    subtrain: SessionDataset,
    validation: SessionDataset,
    fixed: dict | None = None,
    workers: int = 1,
) -> SearchResult:
    """Sample ``n_trials`` configurations, fit each on ``subtrain`` and score MRR@20 on ``validation``.

    The trial sequence depends only on ``seed`` and ``space``. A trial that
    raises is logged with objective 0 instead of aborting the search. The
    first trial reaching the maximum objective wins.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    fixed = dict(fixed or {})
    configs = sample_configs(space, n_trials, seed)
    cache: dict[tuple, Trial] = {}

    def run(i_config):
        i, config = i_config
        trial = Trial(i, config)
        start = time.perf_counter()
        try:
            trial.objective = objective(kind, {**fixed, **config}, subtrain, validation)
        except Exception as exc:  # noqa: BLE001 - a pathological config must not kill the run
            trial.failed, trial.error = True, f"{type(exc).__name__}: {exc}"
            logger.warning("%s trial %d failed: %s", kind, i, trial.error)
        trial.seconds = time.perf_counter() - start
        return trial

    unique = []
    for i, config in enumerate(configs):
        if _key(config) not in cache:
            cache[_key(config)] = None
            unique.append((i, config))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(run, unique))
    else:
        done = [run(item) for item in unique]
    for trial in done:
        cache[_key(trial.config)] = trial

    trials = []
    for i, config in enumerate(configs):
        first = cache[_key(config)]
        trials.append(Trial(i, config, first.objective, first.seconds if first.index == i else 0.0, first.failed, first.error))
        logger.info("%s trial %d: %s -> %.4f", kind, i, config, first.objective)
    if all(t.failed for t in trials):
        raise TuningError(f"all {len(trials)} {kind} trials failed")
    best = trials[0]
    for trial in trials[1:]:
        if trial.objective > best.objective:
            best = trial
    return SearchResult(kind, {**fixed, **best.config}, best.objective, trials)


@dataclass
class SweepResult:
    variable: str
    values: list
    scores: list[float]  # nan where the run failed

    @property
    def valid(self) -> np.ndarray:
        arr = np.asarray(self.scores, dtype=np.float64)
        return arr[~np.isnan(arr)]

    @property
    def mean(self) -> float:
        return float(self.valid.mean())

    @property
    def std(self) -> float:
        return float(self.valid.std())  # population std

    @property
    def max(self) -> float:
        return float(self.valid.max())

    @property
    def min(self) -> float:
        return float(self.valid.min())

    @property
    def diff(self) -> float:
        return self.max - self.min

    def summary(self) -> dict:
        return {"variable": self.variable, "mean": self.mean, "std": self.std, "max": self.max, "min": self.min, "diff": self.diff}

    def format_row(self) -> str:
        return f"{self.mean:.3f} ± {self.std:.3f} | {self.max:.3f} | {self.min:.3f} | {self.diff:.3f}"

    def histogram(self, bins: int = 20):
        """Counts over ``bins`` equal-width bins spanning [min, max]."""
        lo, hi = self.min, self.max
        if lo == hi:
            lo, hi = lo - 0.5e-3, hi + 0.5e-3
        return np.histogram(self.valid, bins=bins, range=(lo, hi))


def sweep(
    kind: str,
    fixed: dict,
    variable: str,
    values: Sequence[Any],
    fit_on: SessionDataset,
    evaluate_on: SessionDataset,
    seed=None,
) -> SweepResult:
    """MRR@20 for each value of one hyperparameter (or ``"seed"``), others held fixed."""
    if not values:
        raise ValueError("values must be non-empty")
    if variable != "seed" and variable not in MODELS[kind].param_names():
        raise UnknownVariableError(f"{kind} has no parameter {variable!r}")
    make_model(kind, fixed)  # fail fast on an invalid fixed config
    scores = []
    for value in values:
        config = dict(fixed) if variable == "seed" else {**fixed, variable: value}
        run_seed = value if variable == "seed" else seed
        try:
            scores.append(objective(kind, config, fit_on, evaluate_on, seed=run_seed))
        except Exception as exc:  # noqa: BLE001
            warnings.warn(f"{kind} {variable}={value!r} failed: {exc}", stacklevel=2)
            scores.append(float("nan"))
    result = SweepResult(variable, list(values), scores)
    if result.valid.size == 0:
        raise TuningError(f"every {kind} run of the {variable} sweep failed")
    return result


@dataclass
class TuneOnTestRecord:
    kind: str
    proper: SearchResult
    leaky: SearchResult
    proper_test_mrr: float
    leaky_test_mrr: float

    @property
    def delta_percent(self) -> float:
        if self.proper_test_mrr == 0:
            return float("nan")
        return 100.0 * (self.leaky_test_mrr - self.proper_test_mrr) / self.proper_test_mrr

    def render(self) -> str:
        lines = [
            f"{FLAW_LABEL}: {self.kind} tuned on the test set vs. on a validation split",
            "(the test-tuned numbers leak test data and must not be reported as results)",
            f"validation-tuned config: {self.proper.best_config}",
            f"test-tuned config:       {self.leaky.best_config}",
            f"MRR@20 on test, validation-tuned: {self.proper_test_mrr:.4f}",
            f"MRR@20 on test, test-tuned:       {self.leaky_test_mrr:.4f}",
            f"improvement from tuning on test: {format_delta(self.delta_percent)}",
        ]
        return "\n".join(lines) + "\n"


def format_delta(percent: float) -> str:
    return "n/a" if math.isnan(percent) else f"{percent:+.1f}%"


def tune_on_test(kind, space, n_trials, seed, train, test, test_days=None, validation_split=None, fixed=None) -> TuneOnTestRecord:
    """Run the same trial sequence twice, selecting once on validation data and once on test data."""
    if validation_split is None:
        validation_split = make_validation_split(train, test_days)
    subtrain, validation = validation_split
    proper = random_search(kind, space, n_trials, seed, subtrain, validation, fixed=fixed)
    leaky = random_search(kind, space, n_trials, seed, train, test, fixed=fixed)
    proper_test = objective(kind, proper.best_config, train, test)
    leaky_test = objective(kind, leaky.best_config, train, test)
    return TuneOnTestRecord(kind, proper, leaky, proper_test, leaky_test)
