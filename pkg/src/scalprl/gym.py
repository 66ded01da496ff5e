"""Replay environment driving one episode through the four-agent phase machine.

Exactly one agent is active per second.  ``a=0`` lets a second pass,
``a=1`` hands control to the next agent at the same second.  Once the clock
reaches ``t1 + deadline`` every outstanding action executes at that second's
price.  The full :class:`RewardVector` is produced once, at termination.
"""
from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .epfilter import Episode
from .errors import (
    ConfigError,
    EpisodeTooShort,
    InsufficientFuture,
    InsufficientHistory,
    SteppedAfterDone,
    WrongAgent,
)
from .marketdata import WINDOW


class Role(str, enum.Enum):
    BSA = "BSA"
    BOA = "BOA"
    SSA = "SSA"
    SOA = "SOA"

    @property
    def index(self) -> int:
        return ROLES.index(self)


ROLES = (Role.BSA, Role.BOA, Role.SSA, Role.SOA)


class Phase(str, enum.Enum):
    WAIT_BUY_SIGNAL = "WaitBuySignal"
    WAIT_BUY_ORDER = "WaitBuyOrder"
    WAIT_SELL_SIGNAL = "WaitSellSignal"
    WAIT_SELL_ORDER = "WaitSellOrder"
    DONE = "Done"


ACTIVE = {
    Phase.WAIT_BUY_SIGNAL: Role.BSA,
    Phase.WAIT_BUY_ORDER: Role.BOA,
    Phase.WAIT_SELL_SIGNAL: Role.SSA,
    Phase.WAIT_SELL_ORDER: Role.SOA,
}


@dataclass(frozen=True)
class GymConfig:
    deadline_s: int = 120
    tax_pct: float = 0.30
    fee_pct: float = 0.03
    fill: str = "last"  # or "quote": buy at best ask, sell at best bid
    boa_reward_sign: int = 1
    cost_model: str = "flat"  # or "per_leg"

    def __post_init__(self):
        if self.fill not in ("last", "quote"):
            raise ConfigError(f"fill must be last|quote, got {self.fill!r}")
        if self.boa_reward_sign not in (1, -1):
            raise ConfigError("boa_reward_sign must be +1 or -1")
        if self.cost_model not in ("flat", "per_leg"):
            raise ConfigError(f"cost_model must be flat|per_leg, got {self.cost_model!r}")
        if self.deadline_s < 1:
            raise ConfigError("deadline_s must be positive")

    @property
    def cost_pct(self) -> float:
        # rounded so the flat default is exactly 0.33, not 0.30 + 0.03 in binary
        return round(self.tax_pct + self.fee_pct, 12)

    @classmethod
    def from_mapping(cls, kv) -> "GymConfig":
        conv = {"deadline_s": int, "tax_pct": float, "fee_pct": float, "fill": str,
                "boa_reward_sign": lambda v: int(float(v)), "cost_model": str}
        unknown = set(kv) - set(conv)
        if unknown:
            raise ConfigError(f"unknown gym keys: {sorted(unknown)}")
        try:
            return cls(**{k: conv[k](v) for k, v in kv.items()})
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


# --- rewards -----------------------------------------------------------------
# ``prices`` is a last-price path indexed by position; t-arguments are positions.

def reward_bsa(prices, t1: int, horizon: int = 120) -> float:
    """Mean percent rise over the ``horizon`` seconds after the buy signal."""
    prices = np.asarray(prices, dtype=np.float64)
    if t1 < 0 or t1 + horizon >= len(prices):
        raise InsufficientFuture(f"need prices up to {t1 + horizon}, have {len(prices) - 1}")
    p1 = prices[t1]
    return float(np.mean((prices[t1 + 1: t1 + horizon + 1] - p1) / p1 * 100.0))


def reward_boa(prices, t1: int, t2: int, sign: int = 1) -> float:
    """Percent by which the fill price sits above the lowest price since the signal."""
    if t2 < t1:
        raise ValueError("t2 precedes t1")
    prices = np.asarray(prices, dtype=np.float64)
    low = prices[t1: t2 + 1].min()
    return sign * float((prices[t2] - low) / low * 100.0)


def reward_ssa(prices, t3: int, lt3: int) -> float:
    """Mean percent decline over the remaining ``lt3`` seconds; zero when no time is left."""
    if lt3 <= 0:
        return 0.0
    prices = np.asarray(prices, dtype=np.float64)
    if t3 + lt3 >= len(prices):
        raise InsufficientFuture(f"need prices up to {t3 + lt3}, have {len(prices) - 1}")
    p3 = prices[t3]
    return float(np.mean(-(prices[t3 + 1: t3 + lt3 + 1] - p3) / p3 * 100.0))


def reward_soa(p_t2: float, p_t4: float) -> float:
    if p_t2 <= 0:
        raise ValueError("purchase price must be positive")
    return (p_t4 - p_t2) / p_t2 * 100.0


def shared_rewards(primary) -> np.ndarray:
    """Each agent gets half of the other agents' summed primary rewards."""
    primary = np.asarray(primary, dtype=np.float64)
    return 0.5 * (primary.sum() - primary)


def apply_costs(gross: float, cfg: GymConfig = GymConfig(), p_t2=None, p_t4=None) -> float:
    if cfg.cost_model == "flat":
        return gross - cfg.cost_pct
    # per leg: fee on the purchase, tax + fee on the sale
    if p_t2 is None or p_t4 is None:
        p_t2, p_t4 = 100.0, 100.0 + gross
    buy = p_t2 * (1 + cfg.fee_pct / 100.0)
    sell = p_t4 * (1 - (cfg.tax_pct + cfg.fee_pct) / 100.0)
    return (sell / buy - 1.0) * 100.0


# --- state types -------------------------------------------------------------

@dataclass
class PhaseState:
    phase: Phase
    t: int
    t1: int | None = None
    t2: int | None = None
    t3: int | None = None
    t4: int | None = None
    p_t1: float | None = None
    p_t2: float | None = None
    p_t3: float | None = None
    p_t4: float | None = None
    min_since_t1: float | None = None

    @property
    def active(self) -> Role | None:
        return ACTIVE.get(self.phase)


@dataclass(frozen=True)
class AgentAction:
    agent: Role
    a: int

    def __post_init__(self):
        if self.a not in (0, 1):
            raise ValueError(f"action must be 0 or 1, got {self.a}")


@dataclass(frozen=True)
class ObsBundle:
    obs: np.ndarray = field(repr=False)
    lt: int | None
    agent: Role | None
    t: int


@dataclass(frozen=True)
class RewardVector:
    primary: tuple
    shared: tuple
    gross_return: float
    net_return: float
    trade: bool = True

    @property
    def total(self) -> tuple:
        return tuple(p + s for p, s in zip(self.primary, self.shared))

    @classmethod
    def no_trade(cls) -> "RewardVector":
        z = (0.0,) * 4
        return cls(z, z, 0.0, 0.0, trade=False)


# --- environment -------------------------------------------------------------

class ScalpingEnv:
    """Single-threaded replay of one :class:`Episode` at a time."""

    def __init__(self, config: GymConfig | None = None, record_trace: bool = False):
        self.config = config or GymConfig()
        self.record_trace = record_trace
        self.episode: Episode | None = None
        self.state: PhaseState | None = None
        self.trace: list[dict] = []
        self.result: RewardVector | None = None

    # positions into the episode arrays
    def _i(self, ts: int) -> int:
        return ts - self.episode.start_ts

    def _price(self, ts: int) -> float:
        return float(self.episode.prices[self._i(ts)])

    def _fill(self, ts: int, side: str) -> float:
        if self.config.fill == "last":
            return self._price(ts)
        rec = self.episode.records[self._i(ts)]
        return float(rec.ask_price[0] if side == "buy" else rec.bid_price[0])

    @property
    def last_signal_ts(self) -> int:
        """Latest second at which the buy signal still has a full deadline of future data."""
        return self.episode.end_ts - self.config.deadline_s

    def reset(self, episode: Episode, start: int | None = None) -> ObsBundle:
        if start is None:
            start = episode.start_ts + WINDOW
        if start - episode.start_ts < WINDOW:
            raise InsufficientHistory(
                f"start {start} is {start - episode.start_ts}s into the day, need {WINDOW}")
        if episode.end_ts - start < self.config.deadline_s + 1:
            raise EpisodeTooShort(f"only {episode.end_ts - start}s of data after start")
        self.episode = episode
        self.state = PhaseState(phase=Phase.WAIT_BUY_SIGNAL, t=start)
        self.trace = []
        self.result = None
        return self._bundle()

    @property
    def done(self) -> bool:
        return self.state is not None and self.state.phase is Phase.DONE

    def lt(self) -> int | None:
        s = self.state
        if s.t1 is None:
            return None
        return s.t1 + self.config.deadline_s - s.t

    def _bundle(self) -> ObsBundle:
        s = self.state
        return ObsBundle(obs=self.episode.observation(s.t), lt=self.lt(), agent=s.active, t=s.t)

    def step(self, action: AgentAction):
        s = self.state
        if s is None:
            raise RuntimeError("reset() before step()")
        if s.phase is Phase.DONE:
            raise SteppedAfterDone("episode already finished")
        if action.agent is not s.active:
            raise WrongAgent(f"{action.agent.value} acted while {s.active.value} is active")
        if self.record_trace:
            self.trace.append({"t": s.t, "phase": s.phase.value, "agent": action.agent.value,
                               "action": action.a, "last_price": self._price(s.t)})
        info: dict = {"forced": [], "no_trade": False}
        if action.a == 1:
            self._execute(s.active, s.t)
        else:
            s.t += 1
            if s.t1 is not None:
                s.min_since_t1 = min(s.min_since_t1, self._price(s.t))
                if s.t >= s.t1 + self.config.deadline_s:
                    info["forced"] = self._force()
            elif s.t > self.last_signal_ts:
                s.phase = Phase.DONE
                info["no_trade"] = True
                self.result = RewardVector.no_trade()
        if s.phase is Phase.DONE and self.result is None:
            self.result = self._rewards()
        if self.done and self.record_trace:
            self.trace.append(self.terminal_record())
        info["state"] = s
        return self._bundle_done() if self.done else self._bundle(), self.result, self.done, info

    def _bundle_done(self) -> ObsBundle:
        s = self.state
        t = min(s.t, self.episode.end_ts)
        return ObsBundle(obs=self.episode.observation(t), lt=self.lt(), agent=None, t=t)

    def _execute(self, role: Role, ts: int) -> None:
        s = self.state
        if role is Role.BSA:
            s.t1, s.p_t1 = ts, self._price(ts)
            s.min_since_t1 = s.p_t1
            s.phase = Phase.WAIT_BUY_ORDER
        elif role is Role.BOA:
            s.t2, s.p_t2 = ts, self._fill(ts, "buy")
            s.phase = Phase.WAIT_SELL_SIGNAL
        elif role is Role.SSA:
            s.t3, s.p_t3 = ts, self._price(ts)
            s.phase = Phase.WAIT_SELL_ORDER
        else:
            s.t4, s.p_t4 = ts, self._fill(ts, "sell")
            s.phase = Phase.DONE

    def _force(self) -> list[Role]:
        forced = []
        while self.state.phase is not Phase.DONE:
            role = self.state.active
            forced.append(role)
            self._execute(role, self.state.t)
        return forced

    def _rewards(self) -> RewardVector:
        s = self.state
        cfg = self.config
        prices = self.episode.prices
        i = self._i
        primary = np.array([
            reward_bsa(prices, i(s.t1), cfg.deadline_s),
            reward_boa(prices, i(s.t1), i(s.t2), cfg.boa_reward_sign),
            reward_ssa(prices, i(s.t3), s.t1 + cfg.deadline_s - s.t3),
            reward_soa(s.p_t2, s.p_t4),
        ])
        gross = reward_soa(s.p_t2, s.p_t4)
        net = apply_costs(gross, cfg, s.p_t2, s.p_t4)
        return RewardVector(tuple(primary.tolist()), tuple(shared_rewards(primary).tolist()),
                            gross, net)

    def terminal_record(self) -> dict:
        s = self.state
        r = self.result
        return {
            "ticker": self.episode.ticker, "date": self.episode.date,
            "t1": s.t1, "t2": s.t2, "t3": s.t3, "t4": s.t4,
            "p_t2": s.p_t2, "p_t4": s.p_t4,
            "gross": r.gross_return, "net": r.net_return, "trade": r.trade,
            "primary": list(r.primary), "shared": list(r.shared),
        }

    def write_trace(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.trace:
                fh.write(json.dumps(rec) + "\n")


def read_config_file(path) -> dict[str, str]:
    """Parse a flat ``key=value`` file; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def state_dict(state: PhaseState) -> dict:
    d = asdict(state)
    d["phase"] = state.phase.value
    return d
