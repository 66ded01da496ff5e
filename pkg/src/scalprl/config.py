"""Flat ``key=value`` run configuration."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .agents.pretrain import NetConfig
from .agents.train import TrainConfig
from .errors import ConfigError
from .gym import GymConfig, read_config_file

_GYM_KEYS = {f.name for f in dataclasses.fields(GymConfig)}
_NET_KEYS = {f.name for f in dataclasses.fields(NetConfig)}
_TRAIN_KEYS = {f.name for f in dataclasses.fields(TrainConfig)} - {"net", "gym", "seed"}


@dataclass(frozen=True)
class RunConfig:
    data_dir: str = "data"
    out_dir: str = "runs/default"
    seed: int = 0
    threshold: float = 15.0
    ratio: float = 0.7
    split_seed: int = 0
    synthesize: bool = False      # generate synthetic days into data_dir first
    synth_kind: str = "pattern"
    synth_days: int = 40
    synth_seed: int = 0
    pretrain_samples: int = 5000
    pretrain_epochs: int = 4
    pretrain_batch: int = 32
    pretrain_lr: float = 1e-3
    signal_clip: float = 2.0
    gym: GymConfig = field(default_factory=GymConfig)
    net: NetConfig = field(default_factory=NetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def stage_hash(self, *sections: str) -> str:
        """Hash of only the config sections a stage depends on."""
        d = self.to_dict()
        blob = json.dumps({k: d[k] for k in sections}, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def seeds(self) -> dict:
        return {"seed": self.seed, "split_seed": self.split_seed, "synth_seed": self.synth_seed,
                "train_seed": self.train.seed}

    def validate(self, need_data: bool = True) -> "RunConfig":
        if need_data and not Path(self.data_dir).is_dir():
            raise ConfigError(f"data_dir {self.data_dir!r} does not exist")
        if not 0 < self.ratio < 1:
            raise ConfigError("ratio must lie in (0, 1)")
        return self


def _convert(kind, value: str):
    if kind is bool:
        v = value.strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if kind is tuple:
        return tuple(int(x) for x in value.replace("x", ",").split(",") if x.strip())
    return kind(value)


def _typed(cls, name):
    f = {f.name: f for f in dataclasses.fields(cls)}[name]
    t = f.type if not isinstance(f.type, str) else f.type
    table = {"int": int, "float": float, "str": str, "bool": bool, "tuple": tuple}
    return table.get(t, type(f.default))


def from_mapping(kv: dict[str, str], base: RunConfig | None = None) -> RunConfig:
    """Build a :class:`RunConfig`; gym, network and training keys live in the same flat namespace."""
    base = base or RunConfig()
    top, gym, net, train = {}, {}, {}, {}
    top_keys = {f.name for f in dataclasses.fields(RunConfig)} - {"gym", "net", "train"}
    for key, raw in kv.items():
        try:
            if key in top_keys:
                top[key] = _convert(_typed(RunConfig, key), raw)
            elif key in _GYM_KEYS:
                gym[key] = raw
            elif key in _NET_KEYS:
                net[key] = _convert(_typed(NetConfig, key), raw)
            elif key == "dqn":
                train["double"] = not _convert(bool, raw)
            elif key in _TRAIN_KEYS:
                train[key] = _convert(_typed(TrainConfig, key), raw)
            else:
                raise ConfigError(f"unknown config key {key!r}")
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None
    gym_cfg = GymConfig.from_mapping({**{k: str(v) for k, v in dataclasses.asdict(base.gym).items()}, **gym})
    net_cfg = dataclasses.replace(base.net, **net)
    cfg = dataclasses.replace(base, **top, gym=gym_cfg, net=net_cfg)
    seed = cfg.seed
    train_cfg = dataclasses.replace(base.train, **train, net=net_cfg, gym=gym_cfg, seed=seed)
    return dataclasses.replace(cfg, train=train_cfg)


def load(path=None, overrides: dict | None = None) -> RunConfig:
    kv = read_config_file(path) if path else {}
    if overrides:
        kv.update({k: str(v) for k, v in overrides.items() if v is not None})
    return from_mapping(kv)
