"""Stage two: the four agents trade jointly and fine-tune with (double) DQN."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .. import nn
from ..epfilter import DatasetSplit, Episode
from ..errors import EmptyTrainSet, MissingPretrain
from ..gym import ROLES, AgentAction, GymConfig, Role, RewardVector, ScalpingEnv
from ..marketdata import WINDOW
from .labels import make_inputs
from .pretrain import NetConfig
from .qmix import MixedQ, ddqn_update, select_action
from .replay import ReplayBuffer, Transition

log = logging.getLogger(__name__)

CURVE_HEADER = ["episode", "reward_bsa", "reward_boa", "reward_ssa", "reward_soa", "profit"]


@dataclass(frozen=True)
class TrainConfig:
    episodes: int = 2000
    gamma: float = 0.99
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_frac: float = 0.5
    buffer_size: int = 100_000
    batch: int = 32
    target_sync: int = 1000
    lr: float = 1e-4
    updates_per_episode: int = 1
    learn_start: int = 32
    double: bool = True
    learn: bool = True
    seed: int = 0
    converge_window: int = 50
    converge_tol: float = 0.05
    stop_on_bsa_convergence: bool = False
    net: NetConfig = field(default_factory=NetConfig)
    gym: GymConfig = field(default_factory=GymConfig)

    def epsilon(self, episode: int) -> float:
        span = max(1, int(self.episodes * self.eps_decay_frac))
        frac = min(1.0, episode / span)
        return self.eps_start + (self.eps_end - self.eps_start) * frac


@dataclass
class Agent:
    role: Role
    q: MixedQ
    buffer: ReplayBuffer


def build_agents(pretrained: dict, cfg: TrainConfig) -> dict[Role, Agent]:
    missing = [r.value for r in ROLES if r not in pretrained]
    if missing:
        raise MissingPretrain(f"no pretrained weights for {', '.join(missing)}")
    agents = {}
    for k, role in enumerate(ROLES):
        spec = cfg.net.spec(role)
        q = MixedQ.from_pretrained(spec, pretrained[role], seed=cfg.seed * 31 + k)
        agents[role] = Agent(role, q, ReplayBuffer(cfg.buffer_size))
    return agents


class _StateRefs:
    """Featurizer for ``(episode index, second, remaining time)`` state references."""

    def __init__(self, episodes: Sequence[Episode], deadline: int):
        self.episodes = episodes
        self.deadline = deadline

    def window(self, ref) -> np.ndarray:
        e, t, _ = ref
        ep = self.episodes[e]
        i = t - ep.start_ts
        return ep.scaled[i - WINDOW + 1: i + 1]

    def __call__(self, refs, lts):
        windows = np.stack([self.window(r) for r in refs])
        with_lt = refs[0][2] is not None
        return make_inputs(windows, [r[2] for r in refs] if with_lt else None, self.deadline)


class _EpisodeQ:
    """Lazily evaluated Q values for the states an episode actually visits.

    Parameters are fixed for the duration of one episode, so the values are
    computed in forward-looking chunks.  Frozen BSA values never change and are
    kept across episodes in ``frozen_bsa``.
    """

    def __init__(self, agents, refs: _StateRefs, e: int, frozen_bsa: dict, chunk: int = 32):
        self.agents = agents
        self.refs = refs
        self.e = e
        self.ep = refs.episodes[e]
        self.frozen_bsa = frozen_bsa
        self.chunk = chunk
        self.learn: dict = {}
        self.frozen: dict = {}

    def _eval(self, role: Role, t: int, lt: int | None):
        if lt is None:
            ts = list(range(t, min(t + self.chunk, self.ep.end_ts + 1)))
            keys = [(self.e, s, None) for s in ts]
        else:
            n = min(self.chunk, lt)
            keys = [(self.e, t + k, lt - k) for k in range(n)]
        inputs = self.refs(keys, None)
        mq = self.agents[role].q
        ql = mq.q_learn(inputs)
        need_f = [i for i, k in enumerate(keys) if self._frozen_get(role, k) is None]
        if need_f:
            qf = mq.q_frozen({n: v[need_f] for n, v in inputs.items()})
            for i, q in zip(need_f, qf):
                self._frozen_put(role, keys[i], q)
        for k, q in zip(keys, ql):
            self.learn[(role, k)] = q

    def _frozen_get(self, role, key):
        if role is Role.BSA:
            return self.frozen_bsa.get(key[:2])
        return self.frozen.get((role, key))

    def _frozen_put(self, role, key, q):
        if role is Role.BSA:
            self.frozen_bsa[key[:2]] = q
        else:
            self.frozen[(role, key)] = q

    def get(self, role: Role, t: int, lt: int | None):
        key = (self.e, t, lt)
        if (role, key) not in self.learn:
            self._eval(role, t, lt)
        return self._frozen_get(role, key), self.learn[(role, key)]


@dataclass
class EpisodeOutcome:
    rewards: RewardVector
    transitions: dict
    trace: list
    t1: int | None = None
    t2: int | None = None
    t3: int | None = None
    t4: int | None = None


def run_episode(agents, refs: _StateRefs, e: int, start: int, epsilon: float,
                rng: np.random.Generator, gym_cfg: GymConfig, frozen_bsa: dict,
                collect: bool = True, record_trace: bool = False) -> EpisodeOutcome:
    env = ScalpingEnv(gym_cfg, record_trace=record_trace)
    env.reset(refs.episodes[e], start)
    qc = _EpisodeQ(agents, refs, e, frozen_bsa)
    pending: dict[Role, list] = {r: [] for r in ROLES}
    while not env.done:
        role = env.state.active
        t, lt = env.state.t, env.lt()
        qf, ql = qc.get(role, t, lt)
        a = select_action(qf + ql, epsilon, rng)
        _, _, done, _ = env.step(AgentAction(role, a))
        if not collect:
            continue
        if done or a == 1:
            pending[role].append(((e, t, lt), a, None, None, True, qf, None))
        else:
            nlt = None if lt is None else lt - 1
            nqf, _ = qc.get(role, t + 1, nlt)
            pending[role].append(((e, t, lt), a, (e, t + 1, nlt), nlt, False, qf, nqf))
    rv = env.result
    transitions = {}
    if collect:
        totals = rv.total
        for role in ROLES:
            r_total = totals[role.index]
            transitions[role] = [
                Transition(obs=s, lt=s[2], action=a, reward=r_total if d else 0.0,
                           next_obs=ns, next_lt=nlt, done=d, q_frozen=qf, next_q_frozen=nqf)
                for (s, a, ns, nlt, d, qf, nqf) in pending[role]
            ]
    st = env.state
    return EpisodeOutcome(rv, transitions, env.trace, st.t1, st.t2, st.t3, st.t4)


def sample_start(ep: Episode, deadline: int, rng: np.random.Generator) -> int:
    lo = ep.start_ts + WINDOW
    hi = ep.end_ts - deadline - 1
    return int(rng.integers(lo, hi + 1))


@dataclass
class TrainResult:
    agents: dict
    curves: list
    frozen_checksums_before: dict
    frozen_checksums_after: dict
    bsa_converged_at: int | None = None
    stopped_early: bool = False


def train_loop(split: DatasetSplit | Sequence[Episode], pretrained: dict, cfg: TrainConfig,
               progress=None) -> TrainResult:
    train = list(split.train if isinstance(split, DatasetSplit) else split)
    if not train:
        raise EmptyTrainSet("train set is empty")
    agents = build_agents(pretrained, cfg)
    before = {r: a.q.frozen_checksum() for r, a in agents.items()}
    rng = np.random.default_rng(cfg.seed)
    refs = _StateRefs(train, cfg.gym.deadline_s)
    feat = refs
    frozen_bsa: dict = {}
    curves = []
    bsa_hist = []
    converged_at = None
    stopped = False
    for k in range(cfg.episodes):
        e = int(rng.integers(len(train)))
        start = sample_start(train[e], cfg.gym.deadline_s, rng)
        out = run_episode(agents, refs, e, start, cfg.epsilon(k), rng, cfg.gym, frozen_bsa,
                          collect=cfg.learn)
        totals = out.rewards.total
        curves.append([k, *totals, out.rewards.net_return])
        bsa_hist.append(totals[0])
        if cfg.learn:
            for role, agent in agents.items():
                agent.buffer.extend(out.transitions[role])
                if len(agent.buffer) < cfg.learn_start:
                    continue
                for _ in range(cfg.updates_per_episode):
                    batch = agent.buffer.sample(cfg.batch, rng)
                    ddqn_update(agent.q, batch, cfg.gamma, cfg.lr, featurize=feat,
                                double=cfg.double, target_sync=cfg.target_sync)
        if converged_at is None and _converged(bsa_hist, cfg.converge_window, cfg.converge_tol):
            converged_at = k
            log.info("BSA reward converged at episode %d", k)
            if cfg.stop_on_bsa_convergence:
                stopped = True
                break
        if progress is not None:
            progress(k, curves[-1])
    after = {r: a.q.frozen_checksum() for r, a in agents.items()}
    return TrainResult(agents, curves, before, after, converged_at, stopped)


def _converged(hist, window: int, tol: float) -> bool:
    if len(hist) < 2 * window:
        return False
    recent = np.mean(hist[-window:])
    prior = np.mean(hist[-2 * window:-window])
    return abs(recent - prior) < tol


def evaluate(agents, episodes: Sequence[Episode], gym_cfg: GymConfig, seed: int = 0,
             epsilon: float = 0.0, record_trace: bool = True) -> list[EpisodeOutcome]:
    """Greedy (or epsilon) replay of each episode from its first eligible second."""
    refs = _StateRefs(list(episodes), gym_cfg.deadline_s)
    rng = np.random.default_rng(seed)
    frozen_bsa: dict = {}
    out = []
    for e, ep in enumerate(refs.episodes):
        out.append(run_episode(agents, refs, e, ep.start_ts + WINDOW, epsilon, rng, gym_cfg,
                               frozen_bsa, collect=False, record_trace=record_trace))
    return out


def write_curves(path, curves) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_HEADER)
        for row in curves:
            w.writerow([row[0], *(f"{x:.6f}" for x in row[1:])])


def save_agents(out_dir, agents) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for role, agent in agents.items():
        params = {}
        for part, p in (("frozen", agent.q.frozen), ("learn", agent.q.learn), ("target", agent.q.target)):
            params.update({f"{part}/{k}": v for k, v in p.items()})
        nn.save_checkpoint(out_dir / f"{role.value.lower()}.sgnn", params)


def load_agents(ckpt_dir, cfg: TrainConfig) -> dict[Role, Agent]:
    ckpt_dir = Path(ckpt_dir)
    agents = {}
    for role in ROLES:
        path = ckpt_dir / f"{role.value.lower()}.sgnn"
        if not path.exists():
            raise MissingPretrain(f"missing agent checkpoint {path}")
        raw = nn.load_checkpoint(path)
        parts = {"frozen": {}, "learn": {}, "target": {}}
        for k, v in raw.items():
            part, name = k.split("/", 1)
            parts[part][name] = v
        spec = cfg.net.spec(role)
        q = MixedQ(spec=spec, frozen=parts["frozen"], learn=parts["learn"], target=parts["target"])
        agents[role] = Agent(role, q, ReplayBuffer(cfg.buffer_size))
    return agents
