"""Tick parsing, price/share scaling and fixed-window observations."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DataError,
    EmptyStream,
    InsufficientHistory,
    InvalidFloat,
    IoFailure,
    MalformedRow,
    NonMonotoneTime,
    NonPositiveBase,
)

LEVELS = 10
WINDOW = 120
N_FEATURES = 51
SUB_WINDOWS = 12
SUB_LEN = WINDOW // SUB_WINDOWS

TRADE_FIELDS = (
    "last", "vol", "svol", "swap", "bvol", "bwap", "tvol", "twap", "open", "high", "low",
)
CSV_HEADER = (
    ["ts"]
    + [f"bp{i}" for i in range(1, LEVELS + 1)]
    + [f"bv{i}" for i in range(1, LEVELS + 1)]
    + [f"ap{i}" for i in range(1, LEVELS + 1)]
    + [f"av{i}" for i in range(1, LEVELS + 1)]
    + list(TRADE_FIELDS)
)
N_COLUMNS = len(CSV_HEADER)  # 52

# observation column layout
BID_PRICE = slice(0, 10)
ASK_PRICE = slice(10, 20)
BID_AMOUNT = slice(20, 30)
ASK_AMOUNT = slice(30, 40)
TRADE = slice(40, 51)
LAST_COL = 40
PRICE_COLS = np.r_[0:20, 40, 43, 45, 47, 48, 49, 50]
SHARE_COLS = np.r_[20:40, 41, 42, 44, 46]

_FLOW_FIELDS = ("trade_volume", "sell_dir_volume", "buy_dir_volume", "total_dir_volume")


@dataclass(frozen=True)
class TickerMeta:
    ticker: str
    prev_close: float
    shares_outstanding: float
    shares_majority: float

    @property
    def free_float(self) -> float:
        return self.shares_outstanding - self.shares_majority

    @classmethod
    def from_json(cls, text: str) -> "TickerMeta":
        d = json.loads(text)
        return cls(
            ticker=str(d["ticker"]),
            prev_close=float(d["prev_close"]),
            shares_outstanding=float(d["shares_outstanding"]),
            shares_majority=float(d["shares_majority"]),
        )

    def to_json(self) -> str:
        return json.dumps({
            "ticker": self.ticker,
            "prev_close": self.prev_close,
            "shares_outstanding": self.shares_outstanding,
            "shares_majority": self.shares_majority,
        })


@dataclass(frozen=True)
class TickRecord:
    timestamp: int
    bid_price: tuple
    ask_price: tuple
    bid_amount: tuple
    ask_amount: tuple
    last_price: float
    trade_volume: float
    sell_dir_volume: float
    wavg_sell_price: float
    buy_dir_volume: float
    wavg_buy_price: float
    total_dir_volume: float
    wavg_total_price: float
    open_price: float
    high_price: float
    low_price: float

    def raw_row(self) -> list[float]:
        """Raw values in observation column order (before scaling)."""
        return [
            *self.bid_price, *self.ask_price, *self.bid_amount, *self.ask_amount,
            self.last_price, self.trade_volume, self.sell_dir_volume, self.wavg_sell_price,
            self.buy_dir_volume, self.wavg_buy_price, self.total_dir_volume,
            self.wavg_total_price, self.open_price, self.high_price, self.low_price,
        ]

    def csv_row(self) -> list:
        return [
            self.timestamp, *self.bid_price, *self.bid_amount, *self.ask_price, *self.ask_amount,
            self.last_price, self.trade_volume, self.sell_dir_volume, self.wavg_sell_price,
            self.buy_dir_volume, self.wavg_buy_price, self.total_dir_volume,
            self.wavg_total_price, self.open_price, self.high_price, self.low_price,
        ]


def _record_from_values(ts: int, v: Sequence[float]) -> TickRecord:
    L = LEVELS
    return TickRecord(
        timestamp=ts,
        bid_price=tuple(v[0:L]),
        bid_amount=tuple(v[L:2 * L]),
        ask_price=tuple(v[2 * L:3 * L]),
        ask_amount=tuple(v[3 * L:4 * L]),
        last_price=v[40], trade_volume=v[41], sell_dir_volume=v[42], wavg_sell_price=v[43],
        buy_dir_volume=v[44], wavg_buy_price=v[45], total_dir_volume=v[46],
        wavg_total_price=v[47], open_price=v[48], high_price=v[49], low_price=v[50],
    )


def parse_ticks(stream, meta: TickerMeta | None = None) -> list[TickRecord]:
    """Parse a tick CSV (bytes, text, or file object) into gap-free per-second records.

    Missing seconds are cloned from the previous record with the four volume
    fields zeroed.  ``meta`` is accepted for interface symmetry; scaling
    happens later.
    """
    if isinstance(stream, (bytes, bytearray)):
        stream = io.StringIO(stream.decode("utf-8"))
    elif isinstance(stream, str):
        stream = io.StringIO(stream)
    elif hasattr(stream, "mode") and "b" in getattr(stream, "mode", ""):
        stream = io.TextIOWrapper(stream, encoding="utf-8")
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None:
        raise EmptyStream("no header")
    if [h.strip() for h in header] != CSV_HEADER:
        raise MalformedRow(1, f"header mismatch: expected {N_COLUMNS} named columns")
    records: list[TickRecord] = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != N_COLUMNS:
            raise MalformedRow(lineno, f"expected {N_COLUMNS} columns, got {len(row)}")
        try:
            ts = int(row[0])
            values = [float(x) for x in row[1:]]
        except ValueError as exc:
            raise MalformedRow(lineno, str(exc)) from None
        if not all(math.isfinite(x) for x in values):
            raise MalformedRow(lineno, "non-finite value")
        rec = _record_from_values(ts, values)
        if records:
            prev = records[-1]
            if ts <= prev.timestamp:
                raise NonMonotoneTime(f"line {lineno}: ts {ts} after {prev.timestamp}")
            for missing in range(prev.timestamp + 1, ts):
                records.append(forward_fill(prev, missing))
        records.append(rec)
    if not records:
        raise EmptyStream("header only")
    return records


def forward_fill(prev: TickRecord, ts: int) -> TickRecord:
    return replace(prev, timestamp=ts, **{f: 0.0 for f in _FLOW_FIELDS})


def write_ticks(path, records: Iterable[TickRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in records:
            w.writerow([_fmt(x) for x in r.csv_row()])


def _fmt(x) -> str:
    if isinstance(x, int):
        return str(x)
    return repr(float(x)) if x != int(x) else str(int(x))


def load_day(csv_path, meta_path=None) -> tuple[list[TickRecord], TickerMeta]:
    csv_path = Path(csv_path)
    meta_path = Path(meta_path) if meta_path else csv_path.with_suffix(".json")
    try:
        meta = TickerMeta.from_json(meta_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoFailure(f"cannot read metadata {meta_path}: {exc}") from exc
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"{meta_path}: bad metadata ({exc})") from exc
    try:
        with open(csv_path, encoding="utf-8", newline="") as fh:
            return parse_ticks(fh, meta), meta
    except OSError as exc:
        raise IoFailure(f"cannot read {csv_path}: {exc}") from exc


def scale_price(p_t, p_y):
    """Percent change of ``p_t`` over the base price ``p_y``."""
    if np.any(np.asarray(p_y) <= 0):
        raise NonPositiveBase(f"base price must be positive, got {p_y}")
    return (p_t - p_y) / p_y * 100.0


def scale_shares(v_t, meta: TickerMeta):
    """Log of volume relative to the free float; zero volume counts as one share."""
    free = meta.free_float
    if free <= 0:
        raise InvalidFloat(f"free float must be positive, got {free}")
    v = np.asarray(v_t, dtype=np.float64)
    if np.any(v < 0):
        raise InvalidFloat("negative volume")
    v = np.where(v == 0, 1.0, v)
    out = np.log(v / free)
    return float(out) if out.ndim == 0 else out


def raw_matrix(records: Sequence[TickRecord]) -> np.ndarray:
    return np.array([r.raw_row() for r in records], dtype=np.float64)


def scale_matrix(raw: np.ndarray, meta: TickerMeta) -> np.ndarray:
    """Scale an ``(n, 51)`` raw matrix column-wise into observation units."""
    out = np.empty_like(raw, dtype=np.float64)
    out[:, PRICE_COLS] = scale_price(raw[:, PRICE_COLS], meta.prev_close)
    out[:, SHARE_COLS] = scale_shares(raw[:, SHARE_COLS], meta)
    return out


def build_observation(records: Sequence[TickRecord], t: int, meta: TickerMeta) -> np.ndarray:
    """The 120x51 scaled window ending at (and including) second ``t``."""
    if not records:
        raise InsufficientHistory("no records")
    idx = t - records[0].timestamp
    if idx >= len(records) or idx < 0 or records[idx].timestamp != t:
        raise InsufficientHistory(f"timestamp {t} not in records")
    if idx + 1 < WINDOW:
        raise InsufficientHistory(f"{idx + 1} records at or before {t}, need {WINDOW}")
    return scale_matrix(raw_matrix(records[idx - WINDOW + 1: idx + 1]), meta)


def split_views(obs: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split a ``(..., 120, 51)`` observation into ask/bid volumes and the trade matrix.

    Book views are ``(..., 12, 10, 10, 2)``: sub-window, second within it,
    level, (price, amount).
    """
    lead = obs.shape[:-2]
    ask = np.stack([obs[..., ASK_PRICE], obs[..., ASK_AMOUNT]], axis=-1)
    bid = np.stack([obs[..., BID_PRICE], obs[..., BID_AMOUNT]], axis=-1)
    ask = ask.reshape(*lead, SUB_WINDOWS, SUB_LEN, LEVELS, 2)
    bid = bid.reshape(*lead, SUB_WINDOWS, SUB_LEN, LEVELS, 2)
    return ask, bid, obs[..., TRADE]
