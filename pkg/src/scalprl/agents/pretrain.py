"""Stage one: supervised regression of the action-1 head onto the role's label."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .. import nn
from ..epfilter import Episode
from ..errors import EmptyDataset
from ..gym import Role
from .labels import episode_inputs, label_order, label_signal

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class NetConfig:
    conv3d_kernel: tuple = (2, 3, 3)
    conv3d_channels: int = 8
    conv1d_kernel: int = 5
    conv1d_channels: int = 16
    neurons: int = 100

    def spec(self, role: Role, zero_head: bool = False) -> nn.NetworkSpec:
        return nn.orderbook_network(
            conv3d_kernel=self.conv3d_kernel, conv3d_channels=self.conv3d_channels,
            conv1d_kernel=self.conv1d_kernel, conv1d_channels=self.conv1d_channels,
            neurons=self.neurons, with_lt=role is not Role.BSA, zero_head=zero_head,
        )


class ArrayDataset:
    """Fully materialized inputs; fine for small problems."""

    def __init__(self, inputs: dict[str, np.ndarray], labels):
        self._inputs = {k: np.asarray(v, dtype=np.float64) for k, v in inputs.items()}
        self.labels = np.asarray(labels, dtype=np.float64)

    def __len__(self):
        return len(self.labels)

    def inputs(self, idx) -> dict[str, np.ndarray]:
        return {k: v[idx] for k, v in self._inputs.items()}


class EpisodeDataset:
    """Samples referenced as ``(episode index, second, remaining time)``; windows built on demand."""

    def __init__(self, episodes: Sequence[Episode], refs, labels, deadline: int = 120):
        self.episodes = list(episodes)
        self.refs = np.asarray(refs, dtype=np.int64).reshape(-1, 3)
        self.labels = np.asarray(labels, dtype=np.float64)
        self.deadline = deadline

    def __len__(self):
        return len(self.labels)

    def inputs(self, idx) -> dict[str, np.ndarray]:
        refs = self.refs[np.atleast_1d(idx)]
        with_lt = bool(np.all(refs[:, 2] >= 0))
        parts = []
        for e in np.unique(refs[:, 0]):
            sel = np.flatnonzero(refs[:, 0] == e)
            lts = refs[sel, 2] if with_lt else None
            parts.append((sel, episode_inputs(self.episodes[e], refs[sel, 1], lts, self.deadline)))
        out = {k: np.empty((len(refs), *v.shape[1:])) for k, v in parts[0][1].items()}
        for sel, inp in parts:
            for k, v in inp.items():
                out[k][sel] = v
        return out


def build_dataset(role: Role, episodes: Sequence[Episode], n_samples: int, seed: int,
                  deadline: int = 120, clip: float | None = 2.0, boa_sign: int = 1) -> EpisodeDataset:
    """Draw labelled samples uniformly over episodes and valid seconds.

    Order agents (and the sell-signal agent) get a random buy/sell signal time;
    the sample second lies in the following ``deadline`` window.
    """
    if not episodes:
        raise EmptyDataset("no episodes to label")
    rng = np.random.default_rng(seed)
    refs, labels = [], []
    for _ in range(n_samples):
        e = int(rng.integers(len(episodes)))
        ep = episodes[e]
        lo = ep.start_ts + 119
        hi = ep.end_ts - deadline  # inclusive
        if hi < lo:
            continue
        if role is Role.BSA:
            t = int(rng.integers(lo, hi + 1))
            refs.append((e, t, -1))
            labels.append(label_signal(ep, t, role, clip=clip, horizon=deadline))
            continue
        sig = int(rng.integers(lo, hi + 1))
        t = sig + int(rng.integers(0, deadline))
        lt = sig + deadline - t
        refs.append((e, t, lt))
        if role is Role.SSA:
            labels.append(label_signal(ep, t, role, lt=lt, clip=clip))
        else:
            labels.append(label_order(ep, sig, t, role, deadline, boa_sign))
    if not labels:
        raise EmptyDataset("episodes too short to label")
    return EpisodeDataset(episodes, refs, labels, deadline)


def regression_metrics(pred, y) -> dict[str, float]:
    pred = np.asarray(pred, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    err = pred - y
    nz = y != 0
    denom = np.sqrt(np.sum(y * y))
    corr = float(np.corrcoef(pred, y)[0, 1]) if len(y) > 1 and pred.std() > 0 and y.std() > 0 else float("nan")
    return {
        "mae": float(np.mean(np.abs(err))),
        "mape": float(np.mean(np.abs(err[nz] / y[nz])) * 100) if nz.any() else float("nan"),
        # against the no-change (zero) forecast
        "theil_u": float(np.sqrt(np.sum(err * err)) / denom) if denom > 0 else float("nan"),
        "corr": corr,
    }


@dataclass
class PretrainResult:
    params: nn.Params
    metrics: dict
    history: list = field(default_factory=list)


def pretrain(
    role: Role | None,
    dataset,
    epochs: int = 10,
    batch: int = 32,
    lr: float = 1e-3,
    spec: nn.NetworkSpec | None = None,
    seed: int = 0,
    val_frac: float = 0.1,
    params: nn.Params | None = None,
) -> PretrainResult:
    """Fit head 1 to the labels and hold head 0 at zero; report held-out metrics."""
    n = len(dataset)
    if n == 0:
        raise EmptyDataset("empty dataset")
    if spec is None:
        spec = NetConfig().spec(role)
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    if params is None:
        params = nn.init_params(spec, seed)
        params = nn.fit_standardization(spec, params, dataset.inputs(np.sort(order[:2048])))
    n_val = int(n * val_frac) if n >= 10 else 0
    val, train = order[:n_val], order[n_val:]
    state = nn.AdamState()
    history = []
    for epoch in range(epochs):
        perm = rng.permutation(train)
        total = 0.0
        for s in range(0, len(perm), batch):
            idx = perm[s:s + batch]
            y = dataset.labels[idx]
            target = np.stack([np.zeros_like(y), y], axis=1)
            loss, grads = nn.gradients(spec, params, dataset.inputs(idx), target)
            params = nn.optimizer_step(params, grads, state, lr)
            total += loss * len(idx)
        history.append(total / len(perm))
        log.debug("pretrain %s epoch %d loss %.5f", getattr(role, "value", role), epoch, history[-1])
    eval_idx = val if n_val else train
    pred = predict(spec, params, dataset, eval_idx)
    return PretrainResult(params, regression_metrics(pred, dataset.labels[eval_idx]), history)


def predict(spec, params, dataset, idx, chunk: int = 256) -> np.ndarray:
    out = []
    for s in range(0, len(idx), chunk):
        out.append(nn.forward(spec, params, dataset.inputs(idx[s:s + chunk]))[:, 1])
    return np.concatenate(out) if out else np.empty(0)
