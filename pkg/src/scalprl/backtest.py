"""Per-episode backtest metrics and the train/test report."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import EmptyResults, SigmaZero, ZeroDrawdown


@dataclass(frozen=True)
class EpisodeResult:
    episode_id: str
    net_return: float
    trade: bool
    t1: int | None = None
    t2: int | None = None
    t3: int | None = None
    t4: int | None = None

    def __post_init__(self):
        if not math.isfinite(self.net_return):
            raise ValueError("net_return must be finite")
        if not self.trade and self.net_return != 0.0:
            raise ValueError("an episode without a trade has zero return")


def _returns(results) -> np.ndarray:
    r = np.array([x.net_return if isinstance(x, EpisodeResult) else float(x) for x in results],
                 dtype=np.float64)
    if r.size == 0:
        raise EmptyResults("no episode results")
    return r


def profit_per_episode(results) -> float:
    return float(np.mean(_returns(results)))


def sharpe(results) -> float:
    """Per-episode mean over sample standard deviation; no annualization, zero risk-free rate."""
    r = _returns(results)
    if r.size < 2:
        raise SigmaZero("need at least two results")
    sd = float(np.std(r, ddof=1))
    if sd == 0.0:
        raise SigmaZero("returns have zero dispersion")
    return float(np.mean(r)) / sd


def equity_curve(results) -> np.ndarray:
    return np.cumprod(1.0 + _returns(results) / 100.0)


def max_drawdown(results) -> float:
    """Largest peak-to-trough fall of the compounded episode equity, in percent (<= 0)."""
    eq = np.concatenate([[1.0], equity_curve(results)])
    peak = np.maximum.accumulate(eq)
    return float(min(0.0, np.min(eq / peak - 1.0) * 100.0))


def total_return(results) -> float:
    return float((equity_curve(results)[-1] - 1.0) * 100.0)


def calmar(results) -> float:
    mdd = max_drawdown(results)
    if mdd == 0.0:
        raise ZeroDrawdown("equity never fell")
    return total_return(results) / abs(mdd)


@dataclass(frozen=True)
class MetricsReport:
    profit_per_episode: float
    sharpe: float | None
    mdd: float
    calmar: float | None
    episodes: int
    trades: int

    def rows(self) -> dict:
        return {
            "Profit per episode(%)": self.profit_per_episode,
            "Sharpe ratio": self.sharpe,
            "MDD (%)": self.mdd,
            "Calmar ratio": self.calmar,
        }


def report(results: Sequence[EpisodeResult]) -> MetricsReport:
    def guarded(fn):
        try:
            return fn(results)
        except (SigmaZero, ZeroDrawdown):
            return None

    return MetricsReport(
        profit_per_episode=profit_per_episode(results),
        sharpe=guarded(sharpe),
        mdd=max_drawdown(results),
        calmar=guarded(calmar),
        episodes=len(results),
        trades=sum(1 for r in results if getattr(r, "trade", True)),
    )


def read_trace_dir(trace_dir) -> list[EpisodeResult]:
    """Terminal records of every ``*.jsonl`` trace in ``trace_dir``, in file-name order."""
    out = []
    for path in sorted(Path(trace_dir).glob("*.jsonl")):
        last = None
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    last = json.loads(line)
        if last is None or "net" not in last:
            continue
        out.append(EpisodeResult(
            episode_id=path.stem, net_return=float(last["net"]), trade=bool(last.get("trade", True)),
            t1=last.get("t1"), t2=last.get("t2"), t3=last.get("t3"), t4=last.get("t4"),
        ))
    return out


def build_report(sets: dict[str, Sequence[EpisodeResult]], extra: dict | None = None) -> dict:
    """``{"train": {...}, "test": {...}}`` with the four metric rows per set."""
    out: dict = {}
    for name, results in sets.items():
        if not results:
            out[name] = None
            continue
        rep = report(results)
        out[name] = {**rep.rows(), "episodes": rep.episodes, "trades": rep.trades}
    if extra:
        out.update(extra)
    return out


def write_report(path, rep: dict) -> None:
    Path(path).write_text(json.dumps(rep, indent=2, sort_keys=True) + "\n", encoding="utf-8")
