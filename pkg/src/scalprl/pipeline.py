"""filter -> pretrain x4 -> joint RL -> backtest, each stage resumable from its artifacts."""
from __future__ import annotations

import json
import logging
import time
from pathlib import Path

import numpy as np

from . import backtest, epfilter, nn
from .agents import (
    build_dataset,
    evaluate,
    load_agents,
    pretrain,
    save_agents,
    train_loop,
    write_curves,
)
from .config import RunConfig
from .errors import MissingPretrain
from .gym import ROLES, Role
from .synth import synth_generate

log = logging.getLogger(__name__)

STAGES = ("data", "filter", "pretrain", "train", "backtest")

# config sections each stage's output depends on (upstream sections included)
_DATA = ("data_dir", "synthesize", "synth_kind", "synth_days", "synth_seed")
_FILTER = _DATA + ("threshold", "ratio", "split_seed")
_PRETRAIN = _FILTER + ("seed", "pretrain_samples", "pretrain_epochs", "pretrain_batch",
                       "pretrain_lr", "signal_clip", "net", "gym")
_TRAIN = _PRETRAIN + ("train",)


class _Stage:
    """Attach the stage name to any exception escaping the block."""

    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        log.info("stage %s", self.name)
        return self

    def __exit__(self, kind, exc, tb):
        if exc is not None and not hasattr(exc, "stage"):
            exc.stage = self.name
        return False


def _sidecar(path: Path, cfg: RunConfig, sections, **extra) -> None:
    body = {"config_hash": cfg.hash(), "stage_hash": cfg.stage_hash(*sections),
            "seeds": cfg.seeds(), **extra}
    path.write_text(json.dumps(body, indent=2, sort_keys=True, default=float) + "\n", encoding="utf-8")


def _fresh(path: Path, cfg: RunConfig, sections) -> bool:
    if not path.exists():
        return False
    try:
        return json.loads(path.read_text(encoding="utf-8")).get("stage_hash") == cfg.stage_hash(*sections)
    except (OSError, json.JSONDecodeError):
        return False


class Run:
    """Artifact layout of one output directory."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = Path(cfg.out_dir)
        self.data = Path(cfg.data_dir)

    # paths
    @property
    def train_list(self):
        return self.out / "train.list"

    @property
    def test_list(self):
        return self.out / "test.list"

    def pretrain_ckpt(self, role: Role) -> Path:
        return self.out / "pretrain" / f"{role.value.lower()}.sgnn"

    @property
    def agents_dir(self):
        return self.out / "agents"

    @property
    def report_path(self):
        return self.out / "report.json"

    # stages
    def data_stage(self, force: bool = False) -> list[Path]:
        with _Stage("data"):
            cfg = self.cfg
            if not cfg.synthesize:
                return sorted(self.data.glob("*.csv"))
            side = self.data / "synth.json"
            if not force and _fresh(side, cfg, _DATA):
                return sorted(self.data.glob("*.csv"))
            paths = synth_generate(cfg.synth_kind, cfg.synth_seed, cfg.synth_days, self.data)
            _sidecar(side, cfg, _DATA, kind=cfg.synth_kind, days=cfg.synth_days)
            return paths

    def filter_stage(self, force: bool = False) -> epfilter.DatasetSplit:
        with _Stage("filter"):
            cfg = self.cfg
            side = self.out / "filter.json"
            universe = {e.key: e for e in epfilter.load_universe(self.data)}
            if not force and _fresh(side, cfg, _FILTER) and self.train_list.exists():
                train = [universe[k] for k in epfilter.read_manifest(self.train_list)]
                test = [universe[k] for k in epfilter.read_manifest(self.test_list)]
                return epfilter.DatasetSplit(tuple(train), tuple(test), cfg.split_seed, cfg.ratio)
            kept = epfilter.filter_universe(universe.values(), cfg.threshold)
            split = epfilter.split_train_test(kept, cfg.ratio, cfg.split_seed)
            self.out.mkdir(parents=True, exist_ok=True)
            epfilter.write_manifest(self.train_list, split.train)
            epfilter.write_manifest(self.test_list, split.test)
            _sidecar(side, cfg, _FILTER, universe=len(universe), kept=len(kept),
                     train=len(split.train), test=len(split.test))
            log.info("filter kept %d of %d days (%d train / %d test)", len(kept), len(universe),
                     len(split.train), len(split.test))
            return split

    def pretrain_stage(self, split, roles=ROLES, force: bool = False) -> dict:
        with _Stage("pretrain"):
            cfg = self.cfg
            out = {}
            (self.out / "pretrain").mkdir(parents=True, exist_ok=True)
            for role in roles:
                ckpt = self.pretrain_ckpt(role)
                side = ckpt.with_suffix(".json")
                if not force and ckpt.exists() and _fresh(side, cfg, _PRETRAIN):
                    out[role] = nn.load_checkpoint(ckpt)
                    continue
                seed = cfg.seed * 1000 + role.index
                t0 = time.perf_counter()
                ds = build_dataset(role, list(split.train), cfg.pretrain_samples, seed,
                                   cfg.gym.deadline_s, cfg.signal_clip, cfg.gym.boa_reward_sign)
                res = pretrain(role, ds, cfg.pretrain_epochs, cfg.pretrain_batch, cfg.pretrain_lr,
                               spec=cfg.net.spec(role), seed=seed)
                nn.save_checkpoint(ckpt, res.params)
                _sidecar(side, cfg, _PRETRAIN, role=role.value, metrics=res.metrics,
                         history=res.history, seconds=time.perf_counter() - t0)
                log.info("pretrained %s: %s", role.value, res.metrics)
                out[role] = res.params
            return out

    def load_pretrained(self) -> dict:
        missing = [r.value for r in ROLES if not self.pretrain_ckpt(r).exists()]
        if missing:
            raise MissingPretrain(f"no pretrain checkpoint for {', '.join(missing)} in {self.out / 'pretrain'}")
        return {r: nn.load_checkpoint(self.pretrain_ckpt(r)) for r in ROLES}

    def train_stage(self, split, pretrained=None, force: bool = False, progress=None):
        with _Stage("train"):
            cfg = self.cfg
            side = self.out / "train.json"
            if not force and _fresh(side, cfg, _TRAIN) and self.agents_dir.exists():
                return load_agents(self.agents_dir, cfg.train), None
            if pretrained is None:
                pretrained = self.load_pretrained()
            t0 = time.perf_counter()
            res = train_loop(split, pretrained, cfg.train, progress=progress)
            save_agents(self.agents_dir, res.agents)
            write_curves(self.out / "curves.csv", res.curves)
            profits = [row[-1] for row in res.curves]
            _sidecar(side, cfg, _TRAIN,
                     episodes=len(res.curves), seconds=time.perf_counter() - t0,
                     last50_profit=float(np.mean(profits[-50:])),
                     frozen_checksums_before={r.value: v for r, v in res.frozen_checksums_before.items()},
                     frozen_checksums_after={r.value: v for r, v in res.frozen_checksums_after.items()},
                     bsa_converged_at=res.bsa_converged_at, stopped_early=res.stopped_early)
            return res.agents, res

    def backtest_stage(self, split, agents=None) -> dict:
        with _Stage("backtest"):
            cfg = self.cfg
            if agents is None:
                agents = load_agents(self.agents_dir, cfg.train)
            sets = {}
            for name, eps in (("train", split.train), ("test", split.test)):
                tdir = self.out / "traces" / name
                tdir.mkdir(parents=True, exist_ok=True)
                for old in tdir.glob("*.jsonl"):
                    old.unlink()
                outcomes = evaluate(agents, eps, cfg.gym, seed=cfg.seed, record_trace=True)
                for ep, o in zip(eps, outcomes):
                    with open(tdir / f"{ep.ticker}_{ep.date}.jsonl", "w", encoding="utf-8") as fh:
                        for rec in o.trace:
                            fh.write(json.dumps(rec) + "\n")
                sets[name] = backtest.read_trace_dir(tdir)
            return self.write_report(sets)

    def write_report(self, sets) -> dict:
        cfg = self.cfg
        rep = backtest.build_report(sets, {"config_hash": cfg.hash(), "seeds": cfg.seeds()})
        self.out.mkdir(parents=True, exist_ok=True)
        backtest.write_report(self.report_path, rep)
        return rep


def run_pipeline(cfg: RunConfig, force: bool = False, progress=None) -> dict:
    """Run every stage in order; returns the report dictionary."""
    cfg.validate(need_data=not cfg.synthesize)
    run = Run(cfg)
    run.out.mkdir(parents=True, exist_ok=True)
    (run.out / "run.json").write_text(
        json.dumps({"config": cfg.to_dict(), "config_hash": cfg.hash(), "seeds": cfg.seeds()},
                   indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    run.data_stage(force)
    split = run.filter_stage(force)
    pretrained = run.pretrain_stage(split, force=force)
    agents, _ = run.train_stage(split, pretrained, force=force, progress=progress)
    return run.backtest_stage(split, agents)
