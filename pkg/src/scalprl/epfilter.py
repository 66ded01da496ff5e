"""Episode filter: keep volatile ticker-days and split them into train/test sets."""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import marketdata as md
from .errors import DataError, TooFewEpisodes

# rises within this distance of the threshold count as reaching it (float rounding)
_BOUNDARY_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Episode:
    ticker: str
    date: str
    records: Sequence[md.TickRecord] = field(repr=False)
    meta: md.TickerMeta

    @property
    def key(self) -> tuple[str, str]:
        return (self.ticker, self.date)

    @property
    def start_ts(self) -> int:
        return self.records[0].timestamp

    @property
    def end_ts(self) -> int:
        return self.records[-1].timestamp

    @cached_property
    def prices(self) -> np.ndarray:
        """Last-price path indexed by ``timestamp - start_ts``."""
        return np.array([r.last_price for r in self.records], dtype=np.float64)

    @cached_property
    def scaled(self) -> np.ndarray:
        """Scaled ``(n, 51)`` feature matrix; observation windows are row slices of it."""
        m = md.scale_matrix(md.raw_matrix(self.records), self.meta)
        m.flags.writeable = False
        return m

    @cached_property
    def rise_pct(self) -> float:
        return float(np.max(md.scale_price(self.prices, self.meta.prev_close)))

    def price_at(self, ts: int) -> float:
        return float(self.prices[ts - self.start_ts])

    def observation(self, ts: int) -> np.ndarray:
        idx = ts - self.start_ts
        if idx < md.WINDOW - 1 or idx >= len(self.records):
            raise md.InsufficientHistory(f"no full window ending at {ts}")
        return self.scaled[idx - md.WINDOW + 1: idx + 1]

    def __hash__(self):
        return hash(self.key)

    def __eq__(self, other):
        return isinstance(other, Episode) and self.key == other.key


def filter_universe(episodes: Iterable[Episode], threshold: float = 15.0) -> list[Episode]:
    """Episodes whose intraday peak last price is at least ``threshold`` percent over prev close."""
    return [ep for ep in episodes if ep.rise_pct >= threshold - _BOUNDARY_TOL]


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[Episode, ...]
    test: tuple[Episode, ...]
    seed: int
    ratio: float


def split_train_test(episodes: Iterable[Episode], ratio: float = 0.7, seed: int = 0) -> DatasetSplit:
    eps = sorted(set(episodes), key=lambda e: e.key)
    if len(eps) < 2:
        raise TooFewEpisodes(f"need at least 2 episodes, got {len(eps)}")
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must be in (0, 1)")
    random.Random(seed).shuffle(eps)
    n_train = int(np.floor(ratio * len(eps)))
    return DatasetSplit(tuple(eps[:n_train]), tuple(eps[n_train:]), seed, ratio)


def load_universe(data_dir) -> list[Episode]:
    """Load every ``<ticker>_<date>.csv`` (with sibling ``.json`` metadata) in ``data_dir``."""
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        raise DataError(f"{data_dir} is not a directory")
    out = []
    for path in sorted(data_dir.glob("*.csv")):
        out.append(load_episode(path))
    return out


def load_episode(path) -> Episode:
    path = Path(path)
    ticker, _, date = path.stem.rpartition("_")
    if not ticker:
        raise DataError(f"{path.name}: expected <ticker>_<date>.csv")
    records, meta = md.load_day(path)
    return Episode(ticker=ticker, date=date, records=tuple(records), meta=meta)


def write_manifest(path, episodes: Iterable[Episode]) -> None:
    lines = [f"{e.ticker},{e.date}\n" for e in sorted(episodes, key=lambda e: e.key)]
    Path(path).write_text("".join(lines), encoding="utf-8")


def read_manifest(path) -> list[tuple[str, str]]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            ticker, date = line.strip().split(",")
            out.append((ticker, date))
    return out


def episodes_from_manifest(path, data_dir) -> list[Episode]:
    return [load_episode(Path(data_dir) / f"{t}_{d}.csv") for t, d in read_manifest(path)]
