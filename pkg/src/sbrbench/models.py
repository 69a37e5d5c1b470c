"""The four non-neural baselines behind one fit/score contract.

``fit(train, seed=None)`` returns the fitted model itself; a fitted model is
never mutated again, and ``score(prefix, query_time)`` maps item id -> score.
The evaluator uses the array-level ``score_indices`` to avoid building dicts
per prediction.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from typing import ClassVar

import numpy as np

from sbrbench import kernels
from sbrbench.dataio import SessionDataset, natural_key


class NotFittedError(RuntimeError):
    pass


class Vocabulary:
    """Dense item indices, assigned in ascending (natural) id order."""

    def __init__(self, item_ids):
        ids = np.asarray(list(item_ids), dtype=object)
        self.ids = ids[natural_key(ids)]
        self.index = {item: i for i, item in enumerate(self.ids)}

    def __len__(self):
        return len(self.ids)

    def encode(self, items) -> np.ndarray:
        get = self.index.get
        return np.fromiter((get(i, -1) for i in items), np.int64, count=len(items))


@dataclass(frozen=True)
class SessionIndex:
    """Training sessions in CSR form plus an item -> session inverted index.

    Session ``s`` is the ``s``-th session of the training set, so a larger
    index means a more recent session (sessions are ordered by start time).
    ``post_sessions[post_ptr[i]:post_ptr[i+1]]`` lists the sessions containing
    item ``i``, most recent first, each exactly once.
    """

    vocab: Vocabulary
    seq_ptr: np.ndarray
    seq_items: np.ndarray
    set_ptr: np.ndarray
    set_items: np.ndarray
    post_ptr: np.ndarray
    post_sessions: np.ndarray
    start_times: np.ndarray
    popularity: np.ndarray
    doc_freq: np.ndarray

    @property
    def n_sessions(self) -> int:
        return len(self.start_times)

    @classmethod
    def build(cls, train: SessionDataset) -> "SessionIndex":
        vocab = Vocabulary(train.item_catalog.index)
        seq_items = vocab.encode(train.frame["item_id"].to_numpy())
        seq_ptr = train._bounds.astype(np.int64)
        n_sessions, n_items = len(seq_ptr) - 1, len(vocab)
        owner = np.repeat(np.arange(n_sessions, dtype=np.int64), np.diff(seq_ptr))

        # distinct items per session, ascending
        pairs = np.unique(owner * n_items + seq_items)
        set_owner, set_items = pairs // n_items, pairs % n_items
        set_ptr = np.zeros(n_sessions + 1, np.int64)
        np.add.at(set_ptr, set_owner + 1, 1)
        set_ptr = np.cumsum(set_ptr)

        doc_freq = np.bincount(set_items, minlength=n_items).astype(np.int64)
        order = np.lexsort((-set_owner, set_items))
        post_ptr = np.r_[0, np.cumsum(doc_freq)].astype(np.int64)
        return cls(
            vocab=vocab,
            seq_ptr=seq_ptr,
            seq_items=seq_items,
            set_ptr=set_ptr,
            set_items=set_items.astype(np.int64),
            post_ptr=post_ptr,
            post_sessions=set_owner[order].astype(np.int64),
            start_times=train.start_times.astype(np.int64),
            popularity=np.bincount(seq_items, minlength=n_items).astype(np.int64),
            doc_freq=doc_freq,
        )

    def session_items(self, s: int) -> np.ndarray:
        return self.seq_items[self.seq_ptr[s] : self.seq_ptr[s + 1]]


def rank_topk(scores, K: int, popularity) -> list:
    """Order a score map: score desc, then popularity desc, then item id asc.

    ``scores`` is a dict ``item -> score`` and ``popularity`` a mapping
    ``item -> count`` (missing items count as 0). Returns at most K items.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    items = list(scores)
    if not items:
        return []
    ids = np.asarray(items, dtype=object)
    id_rank = np.empty(len(ids), np.int64)
    id_rank[natural_key(ids)] = np.arange(len(ids))
    pop = np.array([popularity.get(i, 0) for i in items], dtype=np.float64)
    vals = np.array([scores[i] for i in items], dtype=np.float64)
    order = np.lexsort((id_rank, -pop, -vals))[:K]
    return [items[i] for i in order]


def rank_topk_indices(items: np.ndarray, scores: np.ndarray, K: int, popularity: np.ndarray) -> np.ndarray:
    """Array twin of :func:`rank_topk` over vocabulary indices (index order == id order)."""
    if items.size == 0:
        return items
    if items.size > 4 * K:
        # only items scoring at least the K-th best can make the cut
        kth = np.partition(scores, items.size - K)[items.size - K]
        keep = scores >= kth
        items, scores = items[keep], scores[keep]
    order = np.lexsort((items, -popularity[items], -scores))[:K]
    return items[order]


class SessionModel:
    """Common fit/score plumbing. Subclasses are frozen dataclasses of hyperparameters."""

    kind: ClassVar[str] = ""

    def fit(self, train: SessionDataset, seed: int | None = None):
        # all baselines are deterministic; seed is accepted for a uniform contract
        index = SessionIndex.build(train)
        fitted = replace(self)
        object.__setattr__(fitted, "_index", index)
        fitted._fit(index)
        return fitted

    def _fit(self, index: SessionIndex) -> None:
        pass

    @property
    def index(self) -> SessionIndex:
        try:
            return self._index
        except AttributeError:
            raise NotFittedError(f"{type(self).__name__} is not fitted") from None

    @property
    def popularity(self) -> dict:
        idx = self.index
        return dict(zip(idx.vocab.ids, idx.popularity.tolist()))

    def params(self) -> dict:
        return asdict(self)

    @classmethod
    def param_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def score(self, prefix, query_time: int = 0) -> dict:
        if len(prefix) == 0:
            raise ValueError("prefix must be non-empty")
        items, scores = self.score_indices(self.index.vocab.encode(list(prefix)), query_time)
        ids = self.index.vocab.ids
        return {ids[i]: float(s) for i, s in zip(items, scores)}

    def score_indices(self, prefix: np.ndarray, query_time: int) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError


@dataclass(frozen=True)
class SequentialRules(SessionModel):
    """Order-two sequential rules: ``a -> b`` gains ``1/d`` whenever b follows a at distance d.

    ``max_steps=None`` means no distance limit.
    """

    kind: ClassVar[str] = "sr"
    max_steps: int | None = None

    def __post_init__(self):
        if self.max_steps is not None and self.max_steps < 0:
            raise ValueError("max_steps must be >= 0 or None")

    def _fit(self, index):
        longest = int(np.diff(index.seq_ptr).max()) if index.n_sessions else 0
        steps = longest if self.max_steps is None else min(self.max_steps, longest)
        src, dst, w = kernels.rule_pairs(index.seq_ptr, index.seq_items, steps)
        ptr, cons, weights = kernels.aggregate_rules(src, dst, w, len(index.vocab))
        object.__setattr__(self, "_rules", (ptr, cons, weights))

    @property
    def rules(self) -> dict:
        """Rule table as nested dicts ``antecedent -> {consequent: weight}``."""
        ptr, cons, weights = self._rules
        ids = self.index.vocab.ids
        table = {}
        for a in range(len(ids)):
            lo, hi = ptr[a], ptr[a + 1]
            if hi > lo:
                table[ids[a]] = {ids[c]: float(w) for c, w in zip(cons[lo:hi], weights[lo:hi])}
        return table

    def score_indices(self, prefix, query_time):
        ptr, cons, weights = self._rules
        last = prefix[-1]
        if last < 0:
            return cons[:0], weights[:0]
        return cons[ptr[last] : ptr[last + 1]], weights[ptr[last] : ptr[last + 1]]


@dataclass(frozen=True)
class SessionKNN(SessionModel):
    """Session-based kNN with optional STAN decays, IDF weighting and a sequential filter.

    Args:
        k: neighbours kept after ranking by similarity.
        m: most recent candidate sessions considered (sharing an item with the prefix).
        lambda1: decay of prefix items by position from the end; None disables.
        lambda2: decay of neighbours by age in days at query time; None disables.
        lambda3: decay of neighbour items by distance to the shared anchor item; None disables.
        idf_power: exponent on ``ln(N / df)``; 0 leaves scores untouched.
        sequential_filter: recommend only items seen after the prefix's last item in some neighbour.
    """

    kind: ClassVar[str] = "sknn"
    k: int = 100
    m: int = 1000
    lambda1: float | None = None
    lambda2: float | None = None
    lambda3: float | None = None
    idf_power: float = 0.0
    sequential_filter: bool = False

    def __post_init__(self):
        if self.k < 1 or self.m < self.k:
            raise ValueError(f"need 1 <= k <= m, got k={self.k}, m={self.m}")
        for name in ("lambda1", "lambda2", "lambda3"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ValueError(f"{name} must be positive or None, got {value}")
        if self.idf_power < 0:
            raise ValueError("idf_power must be >= 0")

    def _fit(self, index):
        if self.idf_power > 0:
            with np.errstate(divide="ignore"):
                idf = np.log(index.n_sessions / np.maximum(index.doc_freq, 1)) ** self.idf_power
            object.__setattr__(self, "_idf", idf)

    def _prefix_profile(self, prefix: np.ndarray):
        """Distinct known prefix items (ascending) with their 1-based last positions and weights.

        Items unknown to training cannot match any session, so they are left
        out of the cosine norm as well.
        """
        n = len(prefix)
        rev_items, rev_first = np.unique(prefix[::-1], return_index=True)
        lastpos = n - rev_first
        known = rev_items >= 0
        items, lastpos = rev_items[known], lastpos[known].astype(np.int64)
        if self.lambda1 is None:
            weights = np.ones(len(items))
        else:
            weights = np.exp((lastpos - n) / self.lambda1)
        return items, lastpos, weights, len(items)

    def neighbors(self, prefix: np.ndarray, query_time: int) -> tuple[np.ndarray, np.ndarray]:
        """Top-k training sessions for an encoded prefix: (session indices, similarities)."""
        idx = self.index
        items, _, weights, n_distinct = self._prefix_profile(prefix)
        cands = kernels.candidates(items, idx.post_ptr, idx.post_sessions, self.m)
        if cands.size == 0:
            return cands, np.empty(0)
        sims = kernels.similarity(
            cands, idx.set_ptr, idx.set_items, idx.start_times, items, weights,
            float(n_distinct), int(query_time), self.lambda2 or 0.0,
        )
        # cands are most-recent-first; a stable sort keeps that as the tie-break
        order = np.argsort(-sims, kind="stable")[: self.k]
        return cands[order], sims[order]

    def retrieve_neighbors(self, prefix, query_time: int = 0) -> list[tuple[str, float]]:
        """Same as :meth:`neighbors` but keyed by training session position, for inspection."""
        sess, sims = self.neighbors(self.index.vocab.encode(list(prefix)), query_time)
        return [(int(s), float(v)) for s, v in zip(sess, sims)]

    def score_indices(self, prefix, query_time):
        idx = self.index
        neigh, sims = self.neighbors(prefix, query_time)
        items, lastpos, _, _ = self._prefix_profile(prefix)
        out_items, out_scores = kernels.item_scores(
            neigh, sims, idx.seq_ptr, idx.seq_items, items, lastpos,
            int(prefix[-1]), self.lambda3 or 0.0, self.sequential_filter,
        )
        if self.idf_power > 0 and out_items.size:
            out_scores = out_scores * self._idf[out_items]
        return out_items, out_scores


@dataclass(frozen=True)
class STAN(SessionKNN):
    kind: ClassVar[str] = "stan"
    lambda1: float | None = 1.0
    lambda2: float | None = 10.0
    lambda3: float | None = 1.0


@dataclass(frozen=True)
class VSTAN(SessionKNN):
    kind: ClassVar[str] = "vstan"
    lambda1: float | None = 1.0
    lambda2: float | None = 10.0
    lambda3: float | None = 1.0
    idf_power: float = 1.0


@dataclass(frozen=True)
class SFSKNN(SessionKNN):
    kind: ClassVar[str] = "sfsknn"
    sequential_filter: bool = True


MODELS: dict[str, type[SessionModel]] = {cls.kind: cls for cls in (SequentialRules, STAN, VSTAN, SFSKNN)}

# hyperparameters random search may vary per model kind
TUNABLE: dict[str, tuple[str, ...]] = {
    "sr": ("max_steps",),
    "stan": ("k", "m", "lambda1", "lambda2", "lambda3"),
    "vstan": ("k", "m", "lambda1", "lambda2", "lambda3", "idf_power"),
    "sfsknn": ("k", "m"),
}


def make_model(kind: str, params: dict | None = None) -> SessionModel:
    try:
        cls = MODELS[kind]
    except KeyError:
        raise ValueError(f"unknown model {kind!r}; choose from {sorted(MODELS)}") from None
    params = dict(params or {})
    unknown = set(params) - set(cls.param_names())
    if unknown:
        raise ValueError(f"{kind}: unknown parameters {sorted(unknown)}")
    if "k" in params and "m" in params and params["m"] < params["k"]:
        # a sampled sample size below k just means "use k candidates"
        params["m"] = params["k"]
    return cls(**params)

