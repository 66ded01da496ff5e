"""Supervised targets for the pretraining stage, and network-input assembly."""
from __future__ import annotations

import numpy as np

from ..epfilter import Episode
from ..errors import InsufficientFuture, OutOfWindow
from ..gym import Role, reward_boa, reward_bsa, reward_soa, reward_ssa
from ..marketdata import WINDOW, split_views

SIGNAL_CLIP = 2.0


def label_signal(episode: Episode, t: int, role: Role, lt: int | None = None,
                 clip: float | None = SIGNAL_CLIP, horizon: int = 120) -> float:
    """Signal-strength target: future mean rise (BSA) or decline (SSA), clipped to +/-clip."""
    i = t - episode.start_ts
    if role is Role.BSA:
        value = reward_bsa(episode.prices, i, horizon)
    elif role is Role.SSA:
        if lt is None:
            raise ValueError("SSA label needs the remaining time")
        if i + lt >= len(episode.prices):
            raise InsufficientFuture(f"no data {lt}s after {t}")
        value = reward_ssa(episode.prices, i, lt)
    else:
        raise ValueError(f"{role} is not a signal agent")
    if clip is not None:
        value = float(np.clip(value, -clip, clip))
    return value


def label_order(episode: Episode, signal_t: int, t: int, role: Role,
                horizon: int = 120, boa_sign: int = 1) -> float:
    if not signal_t <= t <= signal_t + horizon:
        raise OutOfWindow(f"t={t} outside [{signal_t}, {signal_t + horizon}]")
    s, i = signal_t - episode.start_ts, t - episode.start_ts
    if role is Role.BOA:
        return reward_boa(episode.prices, s, i, boa_sign)
    if role is Role.SOA:
        return reward_soa(episode.prices[s], episode.prices[i])
    raise ValueError(f"{role} is not an order agent")


def make_inputs(windows: np.ndarray, lt=None, deadline: int = 120) -> dict[str, np.ndarray]:
    """Network inputs from stacked ``(B, 120, 51)`` windows and optional remaining times.

    Remaining time enters as a fraction of the deadline.
    """
    ask, bid, trade = split_views(windows)
    inputs = {"ask": ask, "bid": bid, "trade": trade}
    if lt is not None:
        inputs["lt"] = np.asarray(lt, dtype=np.float64).reshape(-1, 1) / deadline
    return inputs


def episode_inputs(episode: Episode, ts, lts=None, deadline: int = 120):
    idx = np.asarray(ts) - episode.start_ts
    if np.any(idx < WINDOW - 1):
        raise OutOfWindow("window starts before the day")
    view = np.lib.stride_tricks.sliding_window_view(episode.scaled, WINDOW, axis=0)
    # view: (n - 119, 51, 120)
    windows = np.swapaxes(view[idx - WINDOW + 1], 1, 2)
    return make_inputs(windows, lts, deadline)
