"""Synthetic click logs with sequential structure, plus writers for the raw formats.

Run ``python -m sbrbench.synthetic OUT_DIR`` to drop a small fake dump of each
format into ``OUT_DIR`` for trying the CLI without the real datasets.
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np
import pandas as pd

from sbrbench.dataio import COLUMNS, SECONDS_PER_DAY

EPOCH = 1_420_070_400  # 2015-01-01T00:00:00Z


def click_log(
    n_sessions: int = 2000,
    n_items: int = 300,
    days: int = 30,
    mean_length: float = 4.0,
    follow_prob: float = 0.7,
    n_categories: int = 12,
    seed: int = 0,
) -> pd.DataFrame:
    """Sessions that mostly walk a sparse item-to-item transition graph.

    Item popularity is Zipf-like; with probability ``follow_prob`` the next
    click is one of three preferred successors of the current item.
    """
    rng = np.random.default_rng(seed)
    weights = 1.0 / np.arange(1, n_items + 1) ** 0.8
    weights /= weights.sum()
    successors = rng.choice(n_items, size=(n_items, 3), p=weights)
    starts = np.sort(rng.integers(0, days * SECONDS_PER_DAY, size=n_sessions)) + EPOCH
    rows = []
    for s in range(n_sessions):
        length = 2 + rng.geometric(1.0 / max(mean_length - 1.0, 1.0)) - 1
        item = int(rng.choice(n_items, p=weights))
        t = int(starts[s])
        for _ in range(length):
            rows.append((f"{s + 1}", f"{item + 1}", t, f"{item % n_categories + 1}"))
            t += int(rng.integers(10, 300))
            if rng.random() < follow_prob:
                item = int(successors[item, rng.integers(3)])
            else:
                item = int(rng.choice(n_items, p=weights))
    return pd.DataFrame(rows, columns=COLUMNS)


def write_raw(frame: pd.DataFrame, path, format: str) -> Path:
    """Serialize a normalized frame in one of the raw dataset layouts."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    t = frame["time"].to_numpy()
    if format == "rsc15":
        ts = pd.to_datetime(t, unit="s", utc=True).strftime("%Y-%m-%dT%H:%M:%S.000Z")
        out = pd.DataFrame({"s": frame["session_id"], "ts": ts, "i": frame["item_id"], "c": frame["category"].fillna("0")})
        out.to_csv(path, header=False, index=False)
    elif format == "digi":
        first = frame.groupby("session_id", sort=False)["time"].transform("min").to_numpy()
        day = first // SECONDS_PER_DAY * SECONDS_PER_DAY
        out = pd.DataFrame(
            {
                "sessionId": frame["session_id"],
                "userId": "NA",
                "itemId": frame["item_id"],
                "timeframe": (t - day) * 1000,
                "eventdate": pd.to_datetime(day, unit="s").strftime("%Y-%m-%d"),
            }
        )
        out.to_csv(path, sep=";", index=False)
        cats = frame.dropna(subset=["category"]).drop_duplicates("item_id")
        cats[["item_id", "category"]].rename(columns={"item_id": "itemId", "category": "categoryId"}).to_csv(
            path.with_name("product-categories.csv"), sep=";", index=False
        )
    elif format == "retail":
        out = pd.DataFrame(
            {
                "timestamp": t * 1000,
                "visitorid": frame["session_id"],
                "event": "view",
                "itemid": frame["item_id"],
                "transactionid": "",
            }
        )
        out.to_csv(path, index=False)
    else:
        raise ValueError(f"unknown format {format!r}")
    return path


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("out", type=Path)
    parser.add_argument("--sessions", type=int, default=3000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    frame = click_log(n_sessions=args.sessions, seed=args.seed)
    for fmt, name in (("rsc15", "yoochoose-clicks.dat"), ("digi", "train-item-views.csv"), ("retail", "events.csv")):
        print(write_raw(frame, args.out / fmt / name, fmt))


if __name__ == "__main__":
    main()
