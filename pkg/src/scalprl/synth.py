"""Synthetic tick-day generators that follow the tick CSV contract.

* ``random-walk``: driftless log random walk.
* ``pattern``: a level-1 book volume spike is followed exactly ``delay``
  seconds later by a +1% price step; between steps the price drifts down.
  The spike is the only way to anticipate the step.
* ``ramp``: a linear price ramp, for hand-checkable rewards.
"""
from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .epfilter import Episode
from .errors import ConfigError, IoFailure
from .marketdata import LEVELS, TickerMeta, TickRecord, write_ticks

KINDS = ("random-walk", "pattern", "ramp")
FIRST_DATE = dt.date(2018, 4, 2)


@dataclass(frozen=True)
class SynthParams:
    seconds: int = 900
    prev_close: float = 10_000.0
    tick: float = 1.0
    sigma: float = 2e-4           # per-second log-return sd (random-walk)
    pattern_sigma: float = 5e-5
    gap_low: float = 0.10         # opening level over prev close, fraction
    gap_high: float = 0.20
    spike_delay: int = 30         # seconds from volume spike to price step
    spike_gap_min: int = 40       # spike spacing = min + exponential(mean extra)
    spike_gap_extra: float = 40.0
    spike_factor: float = 40.0
    step_pct: float = 2.0
    drift_pct: float = -0.01      # per-second drift between steps (pattern)
    ramp_slope: float = 1e-4      # fraction of opening price per second
    shares_outstanding: float = 10_000_000
    shares_majority: float = 3_000_000
    filtered_out_frac: float = 0.2  # pattern days opened below the 15% filter


def _book_and_flow(prices, rng, tick, amount_boost=None):
    n = len(prices)
    bid1 = np.round(prices - tick / 2, 2)
    ask1 = np.round(bid1 + tick, 2)
    lv = np.arange(LEVELS)
    bids = bid1[:, None] - lv * tick
    asks = ask1[:, None] + lv * tick
    bamt = np.round(rng.lognormal(np.log(1000), 0.3, size=(n, LEVELS)))
    aamt = np.round(rng.lognormal(np.log(1000), 0.3, size=(n, LEVELS)))
    if amount_boost is not None:
        bamt[:, 0] *= amount_boost
        aamt[:, 0] *= amount_boost
    svol = np.round(rng.lognormal(np.log(300), 0.5, size=n))
    bvol = np.round(rng.lognormal(np.log(300), 0.5, size=n))
    return bids, asks, bamt, aamt, svol, bvol


def day_from_prices(prices, meta: TickerMeta, rng: np.random.Generator, tick: float = 1.0,
                    amount_boost=None, start_ts: int = 0) -> list[TickRecord]:
    """Wrap a last-price path in a consistent 10-level book and trade flow."""
    prices = np.round(np.asarray(prices, dtype=np.float64), 2)
    bids, asks, bamt, aamt, svol, bvol = _book_and_flow(prices, rng, tick, amount_boost)
    opening = float(prices[0])
    high = np.maximum.accumulate(prices)
    low = np.minimum.accumulate(prices)
    out = []
    for i, p in enumerate(prices):
        p = float(p)
        sv, bv = float(svol[i]), float(bvol[i])
        out.append(TickRecord(
            timestamp=start_ts + i,
            bid_price=tuple(bids[i].tolist()), ask_price=tuple(asks[i].tolist()),
            bid_amount=tuple(bamt[i].tolist()), ask_amount=tuple(aamt[i].tolist()),
            last_price=p, trade_volume=sv + bv,
            sell_dir_volume=sv, wavg_sell_price=float(bids[i, 0]),
            buy_dir_volume=bv, wavg_buy_price=float(asks[i, 0]),
            total_dir_volume=sv + bv,
            wavg_total_price=round((sv * bids[i, 0] + bv * asks[i, 0]) / (sv + bv), 2),
            open_price=opening, high_price=float(high[i]), low_price=float(low[i]),
        ))
    return out


def _random_walk(n, open_price, sigma, rng):
    steps = rng.normal(0.0, sigma, size=n - 1)
    return open_price * np.exp(np.concatenate([[0.0], np.cumsum(steps)]))


def pattern_path(n: int, open_price: float, p: SynthParams, rng: np.random.Generator):
    """Prices plus spike seconds for the ``pattern`` kind."""
    spikes = []
    s = 120 + int(rng.exponential(p.spike_gap_extra))
    while s + p.spike_delay < n:
        spikes.append(s)
        s += p.spike_gap_min + int(rng.exponential(p.spike_gap_extra))
    drift = np.log1p(p.drift_pct / 100.0)
    noise = rng.normal(drift, p.pattern_sigma, size=n)
    steps = set(x + p.spike_delay for x in spikes)
    prices = np.empty(n)
    prices[0] = round(open_price, 2)
    for i in range(1, n):
        if i in steps:
            prices[i] = round(prices[i - 1] * (1 + p.step_pct / 100.0), 2)
        else:
            prices[i] = round(prices[i - 1] * np.exp(noise[i]), 2)
    return prices, spikes


def generate_day(kind: str, rng: np.random.Generator, p: SynthParams, ticker: str, date: str):
    if kind not in KINDS:
        raise ConfigError(f"unknown synthetic kind {kind!r}; choose from {KINDS}")
    meta = TickerMeta(ticker, p.prev_close, p.shares_outstanding, p.shares_majority)
    gap = rng.uniform(p.gap_low, p.gap_high)
    boost = None
    spikes: list[int] = []
    if kind == "random-walk":
        prices = _random_walk(p.seconds, p.prev_close * (1 + gap), p.sigma, rng)
    elif kind == "pattern":
        if rng.random() < p.filtered_out_frac:
            gap = rng.uniform(0.0, 0.10)
        else:
            gap = rng.uniform(0.155, 0.18)
        prices, spikes = pattern_path(p.seconds, p.prev_close * (1 + gap), p, rng)
        boost = np.ones(p.seconds)
        boost[spikes] = p.spike_factor
    else:
        prices = p.prev_close * (1 + gap) * (1 + p.ramp_slope * np.arange(p.seconds))
    records = day_from_prices(prices, meta, rng, p.tick, boost)
    ep = Episode(ticker=ticker, date=date, records=tuple(records), meta=meta)
    return ep, spikes


def generate(kind: str, seed: int, days: int, params: SynthParams | None = None):
    """Yield ``(episode, spike_seconds)`` for ``days`` synthetic ticker-days."""
    params = params or SynthParams()
    root = np.random.SeedSequence(seed)
    for j, child in enumerate(root.spawn(days)):
        rng = np.random.default_rng(child)
        date = (FIRST_DATE + dt.timedelta(days=j)).isoformat()
        yield generate_day(kind, rng, params, f"SYN{j % 100:03d}", date)


def synth_generate(kind: str, seed: int, days: int, out_dir, params: SynthParams | None = None):
    """Write ``<ticker>_<date>.csv`` + ``.json`` per day; returns the written CSV paths."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        spikes_index = {}
        for ep, spikes in generate(kind, seed, days, params):
            path = out / f"{ep.ticker}_{ep.date}.csv"
            write_ticks(path, ep.records)
            path.with_suffix(".json").write_text(ep.meta.to_json() + "\n", encoding="utf-8")
            spikes_index[path.stem] = spikes
            paths.append(path)
        if kind == "pattern":
            (out / "spikes.json").write_text(json.dumps(spikes_index, sort_keys=True) + "\n",
                                             encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write synthetic data to {out}: {exc}") from exc
    return paths
