"""Frozen-plus-trainable Q estimates, epsilon-greedy selection and (double) DQN updates."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .. import nn
from ..errors import EmptyBatch
from .replay import Transition


@dataclass
class MixedQ:
    """``Q_total = Q_frozen + Q_learn``; only ``learn`` is ever optimized."""

    spec: nn.NetworkSpec
    frozen: nn.Params
    learn: nn.Params
    target: nn.Params = None
    learn_spec: nn.NetworkSpec = None
    opt_state: nn.AdamState = field(default_factory=nn.AdamState)
    updates: int = 0

    def __post_init__(self):
        if self.learn_spec is None:
            self.learn_spec = self.spec
        if self.target is None:
            self.target = {k: v.copy() for k, v in self.learn.items()}
        for v in self.frozen.values():
            v.flags.writeable = False

    @classmethod
    def from_pretrained(cls, spec: nn.NetworkSpec, frozen: nn.Params, seed: int,
                        learn_spec: nn.NetworkSpec | None = None) -> "MixedQ":
        learn_spec = learn_spec or spec
        learn = nn.copy_fixed(frozen, nn.init_params(learn_spec, seed))
        # start the trainable part at zero output so Q_total begins at the pretrained estimate
        last = f"trunk.{len(learn_spec.trunk) - 1}"
        learn[f"{last}.w"][:] = 0.0
        learn[f"{last}.b"][:] = 0.0
        frozen = {k: np.array(v, copy=True) for k, v in frozen.items()}
        return cls(spec=spec, frozen=frozen, learn=learn, learn_spec=learn_spec)

    def q_frozen(self, inputs) -> np.ndarray:
        return nn.forward(self.spec, self.frozen, inputs)

    def q_learn(self, inputs, params=None) -> np.ndarray:
        return nn.forward(self.learn_spec, self.learn if params is None else params, inputs)

    def q_total(self, inputs) -> np.ndarray:
        return self.q_frozen(inputs) + self.q_learn(inputs)

    def sync_target(self) -> None:
        self.target = {k: v.copy() for k, v in self.learn.items()}

    def frozen_checksum(self) -> str:
        return nn.params_checksum(self.frozen)


def greedy(q: np.ndarray) -> np.ndarray:
    """Argmax over the two heads, ties resolved to action 0."""
    q = np.atleast_2d(q)
    return (q[:, 1] > q[:, 0]).astype(int)


def select_action(q_total: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy choice for a single ``(2,)`` Q vector."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    if epsilon > 0 and rng.random() < epsilon:
        return int(rng.integers(0, 2))
    return int(greedy(q_total)[0])


def default_featurize(obs: Sequence, lts: Sequence | None, spec: nn.NetworkSpec) -> dict:
    """Stack raw array states into the spec's single non-``lt`` input."""
    names = [n for n in spec.inputs if n != "lt"]
    if len(names) != 1:
        raise ValueError("default featurizer supports one array input (plus optional lt)")
    inputs = {names[0]: np.stack([np.asarray(o, dtype=np.float64) for o in obs])}
    if "lt" in spec.inputs:
        inputs["lt"] = np.asarray(lts, dtype=np.float64).reshape(-1, 1)
    return inputs


def ddqn_update(
    mq: MixedQ,
    batch: Sequence[Transition],
    gamma: float,
    lr: float = 1e-4,
    featurize: Callable | None = None,
    double: bool = True,
    target_sync: int | None = None,
) -> float:
    """One gradient step of ``Q_learn`` toward the (double) DQN target; returns the loss.

    The bootstrap value uses the target-side total ``Q_frozen + Q_target``; the
    action at the next state is chosen by the online total when ``double``.
    """
    if not batch:
        raise EmptyBatch("no transitions")
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must lie in [0, 1)")
    feat = featurize or (lambda o, l: default_featurize(o, l, mq.spec))
    n = len(batch)
    rewards = np.array([tr.reward for tr in batch], dtype=np.float64)
    actions = np.array([tr.action for tr in batch], dtype=int)
    done = np.array([tr.done for tr in batch], dtype=bool)

    inputs = feat([tr.obs for tr in batch], [tr.lt for tr in batch])
    if all(tr.q_frozen is not None for tr in batch):
        qf = np.stack([tr.q_frozen for tr in batch])
    else:
        qf = mq.q_frozen(inputs)

    y = rewards.copy()
    live = np.flatnonzero(~done)
    if gamma > 0 and live.size:
        sub = [batch[i] for i in live]
        nxt = feat([tr.next_obs for tr in sub], [tr.next_lt for tr in sub])
        if all(tr.next_q_frozen is not None for tr in sub):
            qf_next = np.stack([tr.next_q_frozen for tr in sub])
        else:
            qf_next = mq.q_frozen(nxt)
        q_tgt = qf_next + nn.forward(mq.learn_spec, mq.target, nxt)
        if double:
            a_star = greedy(qf_next + mq.q_learn(nxt))
            boot = q_tgt[np.arange(live.size), a_star]
        else:
            boot = q_tgt.max(axis=1)
        y[live] += gamma * boot

    target = np.zeros((n, 2))
    mask = np.zeros((n, 2))
    target[np.arange(n), actions] = y
    mask[np.arange(n), actions] = 1.0
    loss, grads = nn.gradients(mq.learn_spec, mq.learn, inputs, target, mask, offset=qf)
    mq.learn = nn.optimizer_step(mq.learn, grads, mq.opt_state, lr)
    mq.updates += 1
    if target_sync and mq.updates % target_sync == 0:
        mq.sync_target()
    return loss
