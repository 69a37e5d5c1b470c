"""Ingest raw click logs, filter them, and cut temporal train/test splits.

Everything downstream consumes a :class:`SessionDataset`, a thin immutable
wrapper around a pandas frame with the normalized columns
``session_id, item_id, time, category`` (ids are strings, ``time`` is int64
seconds since epoch, ``category`` may be missing).
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

FORMATS = ("rsc15", "digi", "retail")
COLUMNS = ["session_id", "item_id", "time", "category"]
SECONDS_PER_DAY = 86400


class DataError(Exception):
    """Raised for unusable input data."""


class IngestError(DataError):
    def __init__(self, path, message, line=None):
        self.path = Path(path)
        self.line = line
        where = f"{self.path}:{line}" if line is not None else str(self.path)
        super().__init__(f"{where}: {message}")


class EmptyDatasetError(DataError):
    pass


@dataclass(frozen=True)
class InteractionEvent:
    session_id: str
    item_id: str
    timestamp: int
    category_id: str | None = None

    def __post_init__(self):
        if self.timestamp <= 0:
            raise ValueError(f"timestamp must be positive, got {self.timestamp}")
        if not self.session_id or not self.item_id:
            raise ValueError("session_id and item_id must be non-empty")


@dataclass(frozen=True)
class Session:
    session_id: str
    events: tuple[InteractionEvent, ...]

    @property
    def start_time(self) -> int:
        return self.events[0].timestamp

    @property
    def end_time(self) -> int:
        return self.events[-1].timestamp

    @property
    def items(self) -> list[str]:
        return [e.item_id for e in self.events]

    def __len__(self):
        return len(self.events)


@dataclass(frozen=True)
class DatasetStats:
    clicks: int
    items: int
    categories: int
    sessions: int
    avg_session_length: float

    def as_row(self) -> dict:
        return {
            "clicks": self.clicks,
            "items": self.items,
            "categories": self.categories,
            "sessions": self.sessions,
            "avg_session_length": round(self.avg_session_length, 2),
        }


def natural_key(values) -> np.ndarray:
    """Order ids numerically when they all look like integers, else as strings."""
    values = pd.Index(values).astype(str)
    if len(values) and values.str.fullmatch(r"\d{1,18}").all():
        return np.argsort(values.astype(np.int64).to_numpy(), kind="stable")
    return np.argsort(values.to_numpy(), kind="stable")


class SessionDataset:
    """Sessions ordered by start time (ties by session id), events by time.

    Construction sorts the frame once; instances are never mutated afterwards,
    so they can be shared between threads.
    """

    def __init__(self, frame: pd.DataFrame, *, _sorted: bool = False):
        if not _sorted:
            frame = _normalize(frame)
        self.frame = frame

    @classmethod
    def from_records(cls, records: Iterable[tuple]) -> "SessionDataset":
        """Build from ``(session_id, item_id, time[, category])`` tuples (file order kept)."""
        rows = [tuple(r) + (None,) * (4 - len(r)) for r in records]
        return cls(pd.DataFrame(rows, columns=COLUMNS))

    @classmethod
    def from_events(cls, events: Iterable[InteractionEvent]) -> "SessionDataset":
        return cls.from_records((e.session_id, e.item_id, e.timestamp, e.category_id) for e in events)

    @classmethod
    def from_sequences(cls, sequences, start: int = 1_600_000_000, step: int = 60, gap: int = 3600):
        """Toy helper: one session per item list, sessions ``gap`` seconds apart."""
        records = []
        for s, seq in enumerate(sequences):
            t0 = start + s * gap
            records.extend((str(s), str(item), t0 + i * step) for i, item in enumerate(seq))
        return cls.from_records(records)

    def __len__(self):
        return self.n_sessions

    def __repr__(self):
        return f"SessionDataset(sessions={self.n_sessions}, clicks={len(self.frame)}, items={self.n_items})"

    @cached_property
    def _bounds(self) -> np.ndarray:
        sid = self.frame["session_id"].to_numpy()
        if len(sid) == 0:
            return np.zeros(1, np.int64)
        change = np.flatnonzero(sid[1:] != sid[:-1]) + 1
        return np.r_[0, change, len(sid)].astype(np.int64)

    @property
    def n_sessions(self) -> int:
        return len(self._bounds) - 1

    @cached_property
    def session_ids(self) -> np.ndarray:
        return self.frame["session_id"].to_numpy()[self._bounds[:-1]]

    @cached_property
    def start_times(self) -> np.ndarray:
        return self.frame["time"].to_numpy()[self._bounds[:-1]]

    @cached_property
    def session_lengths(self) -> np.ndarray:
        return np.diff(self._bounds)

    @cached_property
    def item_catalog(self) -> pd.Series:
        """Item id -> click count."""
        return self.frame["item_id"].value_counts(sort=False)

    @property
    def n_items(self) -> int:
        return len(self.item_catalog)

    @cached_property
    def category_map(self) -> dict:
        cats = self.frame.dropna(subset=["category"])
        return dict(zip(cats["item_id"], cats["category"]))

    def iter_sessions(self) -> Iterator[Session]:
        cols = [self.frame[c].to_numpy() for c in COLUMNS]
        b = self._bounds
        for s in range(self.n_sessions):
            lo, hi = b[s], b[s + 1]
            events = tuple(
                InteractionEvent(str(cols[0][i]), str(cols[1][i]), int(cols[2][i]), None if _missing(cols[3][i]) else str(cols[3][i]))
                for i in range(lo, hi)
            )
            yield Session(str(cols[0][lo]), events)

    @property
    def sessions(self) -> list[Session]:
        return list(self.iter_sessions())

    def sequences(self) -> list[list[str]]:
        items = self.frame["item_id"].to_numpy()
        b = self._bounds
        return [list(items[b[s] : b[s + 1]]) for s in range(self.n_sessions)]

    def select_sessions(self, mask: np.ndarray) -> "SessionDataset":
        """Keep sessions where ``mask`` (one flag per session) is true."""
        rows = np.repeat(np.asarray(mask, bool), self.session_lengths)
        return SessionDataset(self.frame[rows].reset_index(drop=True), _sorted=True)

    def to_csv(self, path) -> None:
        self.frame.to_csv(path, index=False)

    @classmethod
    def read_csv(cls, path) -> "SessionDataset":
        frame = pd.read_csv(path, dtype={"session_id": str, "item_id": str, "category": str})
        if list(frame.columns) != COLUMNS:
            raise DataError(f"{path}: expected columns {COLUMNS}, got {list(frame.columns)}")
        frame["time"] = frame["time"].astype(np.int64)
        return cls(frame, _sorted=True)


def _missing(value) -> bool:
    return value is None or (isinstance(value, float) and math.isnan(value)) or value is pd.NA


def _normalize(frame: pd.DataFrame) -> pd.DataFrame:
    frame = frame.reindex(columns=COLUMNS).reset_index(drop=True)
    frame["session_id"] = frame["session_id"].astype(str)
    frame["item_id"] = frame["item_id"].astype(str)
    frame["time"] = frame["time"].astype(np.int64)
    frame["category"] = frame["category"].astype(object).where(frame["category"].notna(), None)
    if len(frame) == 0:
        return frame
    # within a session: by time, ties by file order; sessions by start time, ties by id
    order = np.lexsort((np.arange(len(frame)), frame["time"].to_numpy(), frame["session_id"].to_numpy()))
    frame = frame.iloc[order].reset_index(drop=True)
    start = frame.groupby("session_id", sort=False)["time"].transform("first").to_numpy()
    order = np.lexsort((np.arange(len(frame)), frame["session_id"].to_numpy(), start))
    return frame.iloc[order].reset_index(drop=True)


# --------------------------------------------------------------------------
# ingestion
# --------------------------------------------------------------------------


def ingest(path, format: str, retail_gap: int = 30 * 60, categories_path=None) -> pd.DataFrame:
    """Read a raw dump into a normalized event frame (columns :data:`COLUMNS`).

    Args:
        path: raw file (``yoochoose-clicks.dat``, ``train-item-views.csv`` or ``events.csv``).
        format: one of ``rsc15``, ``digi``, ``retail``.
        retail_gap: idle gap in seconds that splits a Retailrocket visitor's views into sessions.
        categories_path: optional item->category side file. For ``digi`` defaults to a sibling
            ``product-categories.csv``; for ``retail`` to sibling ``item_properties_part*.csv``.

    Raises:
        IngestError: missing/empty file or a malformed row (the message carries the line number).
        ValueError: unknown format tag.
    """
    if format not in FORMATS:
        raise ValueError(f"unknown format {format!r}, expected one of {FORMATS}")
    path = Path(path)
    if not path.is_file():
        raise IngestError(path, "file not found")
    if path.stat().st_size == 0:
        raise IngestError(path, "file is empty")
    reader = {"rsc15": _read_rsc15, "digi": _read_digi, "retail": _read_retail}[format]
    if format == "retail":
        frame = reader(path, retail_gap)
    else:
        frame = reader(path)
    if len(frame) == 0:
        raise IngestError(path, "no events")
    if format in ("digi", "retail"):
        frame = _attach_categories(frame, path, format, categories_path)
    logger.info("ingested %s: %d events, %d sessions", path.name, len(frame), frame["session_id"].nunique())
    return frame


def iter_events(frame: pd.DataFrame) -> Iterator[InteractionEvent]:
    for sid, item, t, cat in frame[COLUMNS].itertuples(index=False):
        yield InteractionEvent(str(sid), str(item), int(t), None if _missing(cat) else str(cat))


def _read_table(path, header_lines, **kwargs) -> pd.DataFrame:
    try:
        return pd.read_csv(path, dtype=str, keep_default_na=False, **kwargs)
    except pd.errors.ParserError as exc:
        raise IngestError(path, f"malformed row ({exc})") from exc


def _check_rows(path, bad: np.ndarray, header_lines: int, what: str):
    if bad.any():
        first = int(np.flatnonzero(bad)[0])
        raise IngestError(path, f"malformed row: {what}", line=first + 1 + header_lines)


def _require_columns(path, frame, expected):
    if list(frame.columns) != expected:
        raise IngestError(path, f"expected columns {expected}, got {list(frame.columns)}", line=1)


def _epoch_seconds(ts: pd.Series) -> np.ndarray:
    # sub-second precision is dropped
    return ts.dt.tz_convert(None).to_numpy().astype("datetime64[s]").astype(np.int64)


def _read_rsc15(path) -> pd.DataFrame:
    raw = _read_table(path, 0, header=None, names=["session_id", "ts", "item_id", "category"])
    _check_rows(path, (raw["session_id"] == "") | (raw["item_id"] == ""), 0, "empty session or item id")
    ts = pd.to_datetime(raw["ts"], format="ISO8601", utc=True, errors="coerce")
    _check_rows(path, ts.isna().to_numpy(), 0, "unparseable timestamp")
    seconds = _epoch_seconds(ts)
    category = raw["category"].where(raw["category"] != "", None)
    return pd.DataFrame({"session_id": raw["session_id"], "item_id": raw["item_id"], "time": seconds, "category": category})


def _read_digi(path) -> pd.DataFrame:
    raw = _read_table(path, 1, sep=";")
    _require_columns(path, raw, ["sessionId", "userId", "itemId", "timeframe", "eventdate"])
    _check_rows(path, (raw["sessionId"] == "") | (raw["itemId"] == ""), 1, "empty session or item id")
    date = pd.to_datetime(raw["eventdate"], format="%Y-%m-%d", utc=True, errors="coerce")
    frame_ms = pd.to_numeric(raw["timeframe"], errors="coerce")
    _check_rows(path, (date.isna() | frame_ms.isna()).to_numpy(), 1, "bad eventdate or timeframe")
    seconds = _epoch_seconds(date) + (frame_ms.to_numpy() // 1000).astype(np.int64)
    return pd.DataFrame({"session_id": raw["sessionId"], "item_id": raw["itemId"], "time": seconds, "category": None})


def _read_retail(path, gap) -> pd.DataFrame:
    raw = _read_table(path, 1)
    _require_columns(path, raw, ["timestamp", "visitorid", "event", "itemid", "transactionid"])
    ms = pd.to_numeric(raw["timestamp"], errors="coerce")
    _check_rows(path, (ms.isna() | (raw["visitorid"] == "") | (raw["itemid"] == "")).to_numpy(), 1, "bad timestamp, visitor or item")
    views = pd.DataFrame({"visitor": raw["visitorid"], "item_id": raw["itemid"], "time": ms.to_numpy().astype(np.int64) // 1000})
    views = views[raw["event"].to_numpy() == "view"]
    visitor_key = views["visitor"].to_numpy()
    order = np.lexsort((np.arange(len(views)), views["time"].to_numpy(), visitor_key))
    views = views.iloc[order].reset_index(drop=True)
    t = views["time"].to_numpy()
    v = views["visitor"].to_numpy()
    new_session = np.r_[True, (v[1:] != v[:-1]) | ((t[1:] - t[:-1]) > gap)]
    session_no = np.cumsum(new_session)
    return pd.DataFrame({"session_id": session_no.astype(str), "item_id": views["item_id"], "time": t, "category": None})


def _attach_categories(frame, path, format, categories_path):
    if categories_path is None:
        if format == "digi":
            candidates = [path.with_name("product-categories.csv")]
        else:
            candidates = sorted(path.parent.glob("item_properties_part*.csv"))
        candidates = [c for c in candidates if c.is_file()]
    else:
        candidates = [Path(categories_path)]
    if not candidates:
        return frame
    if format == "digi":
        cats = _read_table(candidates[0], 1, sep=";")
        _require_columns(candidates[0], cats, ["itemId", "categoryId"])
        mapping = dict(zip(cats["itemId"], cats["categoryId"]))
    else:
        parts = [_read_table(c, 1) for c in candidates]
        props = pd.concat(parts, ignore_index=True)
        props = props[props["property"] == "categoryid"]
        props = props.assign(ts=pd.to_numeric(props["timestamp"])).sort_values("ts", kind="stable")
        mapping = dict(zip(props["itemid"], props["value"]))  # latest assignment wins
    frame = frame.copy()
    frame["category"] = frame["item_id"].map(mapping)
    frame["category"] = frame["category"].astype(object).where(frame["category"].notna(), None)
    return frame


# --------------------------------------------------------------------------
# filtering, slicing, splitting
# --------------------------------------------------------------------------


def preprocess(events, min_item_support: int = 5, min_session_length: int = 2) -> SessionDataset:
    """Drop rare items, then drop sessions that became too short (one pass)."""
    if isinstance(events, SessionDataset):
        frame = events.frame
    elif isinstance(events, pd.DataFrame):
        frame = events
    else:
        frame = pd.DataFrame(
            [(e.session_id, e.item_id, e.timestamp, e.category_id) for e in events], columns=COLUMNS
        )
    if len(frame) == 0:
        raise EmptyDatasetError("no events to preprocess")
    support = frame.groupby("item_id", sort=False)["item_id"].transform("size")
    frame = frame[support.to_numpy() >= min_item_support]
    length = frame.groupby("session_id", sort=False)["session_id"].transform("size")
    frame = frame[length.to_numpy() >= min_session_length]
    if len(frame) == 0:
        raise EmptyDatasetError("all events were filtered out")
    return SessionDataset(frame)


def temporal_fraction(dataset: SessionDataset, denominator: int) -> SessionDataset:
    """Keep the most recent ``ceil(n_sessions / denominator)`` sessions."""
    if denominator < 1:
        raise ValueError("denominator must be >= 1")
    n = dataset.n_sessions
    if denominator > n:
        warnings.warn(f"denominator {denominator} exceeds {n} sessions; keeping only the most recent one", stacklevel=2)
    keep = math.ceil(n / denominator)
    mask = np.zeros(n, bool)
    mask[n - keep :] = True
    return dataset.select_sessions(mask)


@dataclass(frozen=True)
class TrainTestSplit:
    train: SessionDataset
    test: SessionDataset
    split_boundary: int


def split_by_days(dataset: SessionDataset, test_days: int) -> TrainTestSplit:
    """Sessions starting in the last ``test_days`` UTC calendar days become the test set.

    Test events whose item never occurs in training are removed, and test
    sessions left with fewer than two events are dropped.
    """
    if test_days < 1:
        raise ValueError("test_days must be >= 1")
    if dataset.n_sessions == 0:
        raise EmptyDatasetError("cannot split an empty dataset")
    last_day = int(dataset.frame["time"].max()) // SECONDS_PER_DAY * SECONDS_PER_DAY
    boundary = last_day - (test_days - 1) * SECONDS_PER_DAY
    is_test = dataset.start_times >= boundary
    train = dataset.select_sessions(~is_test)
    if train.n_sessions == 0:
        raise EmptyDatasetError(f"no training sessions before {pd.Timestamp(boundary, unit='s')}")
    test_frame = dataset.select_sessions(is_test).frame
    test_frame = test_frame[test_frame["item_id"].isin(train.item_catalog.index).to_numpy()]
    length = test_frame.groupby("session_id", sort=False)["session_id"].transform("size")
    test_frame = test_frame[length.to_numpy() >= 2]
    if len(test_frame) == 0:
        raise EmptyDatasetError("no test sessions left after pruning")
    test = SessionDataset(test_frame.reset_index(drop=True))
    return TrainTestSplit(train, test, boundary)


def compute_stats(dataset: SessionDataset) -> DatasetStats:
    clicks = len(dataset.frame)
    sessions = dataset.n_sessions
    items = dataset.frame["item_id"].unique()
    categories = {dataset.category_map[i] for i in items if i in dataset.category_map}
    return DatasetStats(clicks, len(items), len(categories), sessions, clicks / sessions if sessions else 0.0)


def write_stats(stats: DatasetStats, path, name: str) -> None:
    pd.DataFrame([{"dataset": name, **stats.as_row()}]).to_csv(path, index=False)
