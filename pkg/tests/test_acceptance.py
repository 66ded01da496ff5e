"""One test per primary acceptance criterion; each prints a PASS/FAIL line in the summary."""
import dataclasses
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from scalprl import backtest, config, epfilter, gym, nn, pipeline, synth
from scalprl.agents import NetConfig, TrainConfig, train_loop
from scalprl.gym import AgentAction, ROLES, Role, ScalpingEnv

import oracles
from conftest import make_episode, planted_universe
from gradcheck import check_layer, check_network

REPO = Path(__file__).resolve().parents[1]
LEARN_CFG = REPO / "configs" / "learnability.cfg"


def _rel(a, b):
    return abs(a - b) / max(1e-12, abs(b)) if b != 0 else abs(a)


def test_reward_oracle_suite(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    n_paths = 1000
    for _ in range(n_paths):
        n = int(rng.integers(130, 400))
        prices = 100 * np.exp(np.cumsum(rng.normal(0, rng.uniform(1e-4, 5e-3), n)))
        plist = prices.tolist()
        t1 = int(rng.integers(0, n - 120))
        t2 = t1 + int(rng.integers(0, 121))
        t3 = int(rng.integers(t2, t1 + 121))
        lt3 = t1 + 120 - t3
        primary = [gym.reward_bsa(prices, t1), gym.reward_boa(prices, t1, t2),
                   gym.reward_ssa(prices, t3, lt3), gym.reward_soa(plist[t2], plist[t3])]
        want = [oracles.bsa(plist, t1), oracles.boa(plist, t1, t2),
                oracles.ssa(plist, t3, lt3), oracles.soa(plist[t2], plist[t3])]
        worst = max(worst, *(_rel(a, b) for a, b in zip(primary, want)))
        sh = gym.shared_rewards(primary)
        worst = max(worst, *(_rel(a, b) for a, b in zip(sh, oracles.shared(primary))))
    worked = [
        (gym.reward_bsa(100 + 0.01 * np.arange(121), 0), 0.605),
        (gym.reward_ssa([100, 99, 98], 0, 2), 1.5),
        *zip(gym.shared_rewards([1, 2, 3, 4]), [4.5, 4.0, 3.5, 3.0]),
    ]
    worked_ok = all(_rel(a, b) <= 1e-9 for a, b in worked)
    secs = time.perf_counter() - t0
    criterion("reward oracle suite", worst <= 1e-9 and worked_ok and secs < 10,
              f"{n_paths} paths, max rel err {worst:.1e}, worked values ok={worked_ok}, {secs:.2f}s")


def test_fsm_totality(criterion):
    rng = np.random.default_rng(99)
    episodes = [make_episode(10_000 * np.exp(np.cumsum(rng.normal(0, 1e-3, 420))), seed=i, ticker=f"F{i}")
                for i in range(8)]
    env = ScalpingEnv()
    bad, trades, no_trades = 0, 0, 0
    n_seq = 10_000
    for _ in range(n_seq):
        ep = episodes[int(rng.integers(len(episodes)))]
        env.reset(ep, int(rng.integers(ep.start_ts + 120, ep.end_ts - 120)))  # last start keeps 121 s
        p = rng.uniform(0.005, 0.9)
        done = False
        steps = 0
        while not done:
            _, r, done, _ = env.step(AgentAction(env.state.active, int(rng.random() < p)))
            steps += 1
            if steps > 2000:
                break
        s = env.state
        if not done:
            bad += 1
        elif r.trade:
            trades += 1
            ok = (s.t1 is not None and s.t4 is not None and s.t1 <= s.t2 <= s.t3 <= s.t4 <= s.t1 + 120
                  and r.net_return == r.gross_return - 0.33)
            bad += not ok
        else:
            no_trades += 1
            bad += s.t1 is not None or r.net_return != 0.0
    criterion("FSM totality", bad == 0,
              f"{n_seq} random sequences, {trades} trades, {no_trades} no-trade, {bad} violations")


def test_gradient_checks(criterion):
    t0 = time.perf_counter()
    layers = {
        "Conv3D": (nn.Conv3D((2, 2, 3), 3), (3, 4, 5, 2)),
        "Conv1D": (nn.Conv1D(3, 4), (12, 11)),
        "Dense": (nn.Dense(5), (7,)),
        "ReLU": (nn.ReLU(), (6,)),
        "Flatten": (nn.Flatten(), (2, 3, 2)),
        "Standardize": (nn.Standardize(), (4, 3)),
    }
    errs = {name: check_layer(layer, shape, seed=i) for i, (name, (layer, shape)) in enumerate(layers.items())}
    rng = np.random.default_rng(3)
    for with_lt in (True, False):
        spec = nn.orderbook_network(window_shape=(3, 4, 4, 2), trade_shape=(12, 11), conv3d_kernel=(2, 2, 2),
                                conv3d_channels=2, conv1d_kernel=3, conv1d_channels=3, neurons=6, with_lt=with_lt)
        inputs = {"ask": rng.normal(size=(3, 3, 4, 4, 2)), "bid": rng.normal(size=(3, 3, 4, 4, 2)),
                  "trade": rng.normal(size=(3, 12, 11))}
        if with_lt:
            inputs["lt"] = rng.uniform(size=(3, 1))
        params = nn.fit_standardization(spec, nn.init_params(spec, 1), inputs)
        errs[f"network(lt={with_lt})"] = check_network(spec, inputs, rng.normal(size=(3, 2)), params=params)
    secs = time.perf_counter() - t0
    worst = max(errs.values())
    criterion("gradient checks", worst < 1e-4 and secs < 60,
              f"max rel err {worst:.1e} over {', '.join(errs)}; {secs:.1f}s")


def test_episode_filter(criterion):
    eps, peaks = planted_universe(100, seed=11)
    got = {e.key for e in epfilter.filter_universe(eps, 15.0)}
    want = {e.key for e, pk in zip(eps, peaks) if pk >= 15.0}
    kept = [e for e in eps if e.key in got]
    split = epfilter.split_train_test(kept, 0.7, seed=4)
    again = epfilter.split_train_test(kept, 0.7, seed=4)
    train, test = {e.key for e in split.train}, {e.key for e in split.test}
    partition = train | test == got and not train & test and len(train) == math.floor(0.7 * len(got))
    seeded = split.train == again.train and split.test == again.test
    criterion("episode filter", got == want and partition and seeded,
              f"kept {len(got)}/100 (planted {len(want)}), split {len(train)}/{len(test)}, "
              f"partition={partition}, deterministic={seeded}")


@pytest.fixture(scope="module")
def learn_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("learn")
    cfg = config.load(LEARN_CFG, {"out_dir": tmp / "out", "data_dir": tmp / "data"})
    t0 = time.perf_counter()
    rep = pipeline.run_pipeline(cfg)
    secs = time.perf_counter() - t0
    return cfg, rep, secs


def test_learnability(criterion, learn_run):
    cfg, _, secs = learn_run
    run = pipeline.Run(cfg)
    profits = [float(line.split(",")[-1]) for line in (run.out / "curves.csv").read_text().splitlines()[1:]]
    last50 = float(np.mean(profits[-50:]))
    split = run.filter_stage()
    base_cfg = dataclasses.replace(cfg.train, learn=False, eps_start=1.0, eps_end=1.0, episodes=200)
    base = train_loop(split, run.load_pretrained(), base_cfg)
    baseline = float(np.mean([row[-1] for row in base.curves]))
    ok = last50 > 0 and last50 - baseline >= 0.5 and len(profits) <= 5000 and secs <= 900
    criterion("learnability", ok,
              f"last-50 mean net {last50:+.3f}% vs eps=1.0 baseline {baseline:+.3f}% "
              f"(margin {last50 - baseline:+.3f} pp), {len(profits)} episodes, pipeline {secs:.0f}s")


def test_random_market_null(criterion):
    p = synth.SynthParams(seconds=600)
    eps = [ep for ep, _ in synth.generate("random-walk", 17, 12, p)]
    net_cfg = NetConfig(conv3d_channels=1, conv1d_channels=2, neurons=4)
    pretrained = {r: nn.init_params(net_cfg.spec(r), r.index) for r in ROLES}
    cfg = TrainConfig(episodes=1500, eps_start=1.0, eps_end=1.0, learn=False, net=net_cfg, seed=3)
    res = train_loop(eps, pretrained, cfg)
    net = np.array([row[-1] for row in res.curves])
    # a no-trade episode is the only one with every reward component exactly zero
    trades = np.array([any(row[1:]) for row in res.curves])
    rate = trades.mean()
    se = net.std(ddof=1) / math.sqrt(len(net))
    gap = net.mean() - (-0.33 * rate)
    criterion("random-market null", abs(gap) <= 3 * se,
              f"mean net {net.mean():+.4f}% vs -0.33 x {rate:.3f} = {-0.33 * rate:+.4f}% "
              f"(|gap| {abs(gap):.4f} <= 3 SE {3 * se:.4f}), n={len(net)}")


def test_metrics(criterion, tmp_path):
    mdd_up = backtest.max_drawdown([1.0, 2.0, 0.0, 5.0])
    path = [100, 120, 90, 110]
    rets = [(b / a - 1) * 100 for a, b in zip(path, path[1:])]
    mdd_case = backtest.max_drawdown(rets)
    sr = backtest.sharpe([2.0, 0.0])
    from test_pipeline import tiny_config
    cfg = tiny_config(tmp_path)
    pipeline.run_pipeline(cfg)
    rep = json.loads(pipeline.Run(cfg).report_path.read_text())
    rows = ["Profit per episode(%)", "Sharpe ratio", "MDD (%)", "Calmar ratio"]
    fmt = all(isinstance(rep.get(s), dict) and all(r in rep[s] for r in rows) for s in ("train", "test"))
    ok = mdd_up == 0.0 and abs(mdd_case + 25.0) <= 1e-9 and abs(sr - 1 / math.sqrt(2)) <= 1e-9 and fmt
    criterion("metrics", ok,
              f"mdd(up)={mdd_up}, mdd(100-120-90-110)={mdd_case:.9f}, sharpe([2,0])={sr:.10f}, "
              f"report rows for train+test={fmt}")


def test_qmix_freeze(criterion, learn_run):
    cfg, _, _ = learn_run
    run = pipeline.Run(cfg)
    side = json.loads((run.out / "train.json").read_text())
    on_disk = {r.value: nn.params_checksum(nn.load_checkpoint(run.pretrain_ckpt(r))) for r in ROLES}
    saved = {}
    for r in ROLES:
        raw = nn.load_checkpoint(run.agents_dir / f"{r.value.lower()}.sgnn")
        saved[r.value] = nn.params_checksum({k[len("frozen/"):]: v for k, v in raw.items() if k.startswith("frozen/")})
    ok = side["frozen_checksums_before"] == side["frozen_checksums_after"] == on_disk == saved
    criterion("Q-mixing freeze", ok,
              f"{side['episodes']} RL episodes; frozen checksums before == after == pretrain files == "
              f"saved agents: {ok}")
