"""The four trading agents: labels, pretraining, Q-mixing and joint training."""
from .labels import episode_inputs, label_order, label_signal, make_inputs
from .pretrain import (
    ArrayDataset,
    EpisodeDataset,
    NetConfig,
    PretrainResult,
    build_dataset,
    pretrain,
    regression_metrics,
)
from .qmix import MixedQ, ddqn_update, greedy, select_action
from .replay import ReplayBuffer, Transition
from .train import (
    TrainConfig,
    TrainResult,
    build_agents,
    evaluate,
    load_agents,
    save_agents,
    train_loop,
    write_curves,
)

__all__ = [
    "ArrayDataset", "EpisodeDataset", "MixedQ", "NetConfig", "PretrainResult", "ReplayBuffer",
    "TrainConfig", "TrainResult", "Transition", "build_agents", "build_dataset", "ddqn_update",
    "episode_inputs", "evaluate", "greedy", "label_order", "label_signal", "load_agents",
    "make_inputs", "pretrain", "regression_metrics", "save_agents", "select_action",
    "train_loop", "write_curves",
]
