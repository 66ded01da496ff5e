"""Command-line entry point: ``scalprl <subcommand> [options]``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 training failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import backtest, config, epfilter, pipeline
from .errors import ConfigError, DataError, ScalpError
from .gym import ROLES, Role
from .synth import KINDS, synth_generate

log = logging.getLogger("scalprl")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_TRAIN = 0, 2, 3, 4


def _global_flags(with_seed: bool = True) -> argparse.ArgumentParser:
    # defaults are suppressed so a flag given before the subcommand is not
    # clobbered by the subparser's copy
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=argparse.SUPPRESS, help="flat key=value config file")
    p.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    if with_seed:
        p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    parser = argparse.ArgumentParser(prog="scalprl", parents=[common],
                                     description="Tick-replay scalping gym and four-agent RL pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("filter", parents=[_global_flags(with_seed=False)],
                       help="select volatile days and write train/test manifests")
    p.add_argument("--data-dir")
    p.add_argument("--threshold", type=float)
    p.add_argument("--ratio", type=float)
    p.add_argument("--seed", dest="split_seed", type=int, help="split seed")

    p = sub.add_parser("synth-gen", parents=[common], help="write synthetic tick days")
    p.add_argument("--kind", choices=KINDS)
    p.add_argument("--days", type=int)
    p.add_argument("--data-dir", help="destination directory (default: config data_dir)")

    p = sub.add_parser("pretrain", parents=[common], help="supervised pretraining of one or all agents")
    p.add_argument("--role", default="all", type=str.upper, choices=[r.value for r in ROLES] + ["ALL"])
    p.add_argument("--data-dir")

    p = sub.add_parser("train", parents=[common], help="joint RL fine-tuning from pretrained weights")
    p.add_argument("--data-dir")
    p.add_argument("--episodes", type=int)

    p = sub.add_parser("backtest", parents=[common], help="evaluate agents and write report.json")
    p.add_argument("--traces", help="existing trace directory (with train/ and test/ subdirectories)")
    p.add_argument("--data-dir")

    p = sub.add_parser("run", parents=[common], help="data -> filter -> pretrain -> train -> backtest")
    p.add_argument("--data-dir")
    p.add_argument("--force", action="store_true", help="recompute every stage")
    return parser


def _load_config(args) -> config.RunConfig:
    over = {
        "out_dir": getattr(args, "out", None),
        "seed": getattr(args, "seed", None),
        "data_dir": getattr(args, "data_dir", None),
        "threshold": getattr(args, "threshold", None),
        "ratio": getattr(args, "ratio", None),
        "split_seed": getattr(args, "split_seed", None),
        "synth_kind": getattr(args, "kind", None),
        "synth_days": getattr(args, "days", None),
        "episodes": getattr(args, "episodes", None),
    }
    path = getattr(args, "config", None)
    if path and not Path(path).is_file():
        raise ConfigError(f"config file {path} not found")
    return config.load(path, over)


def _progress(k, row):
    if (k + 1) % 100 == 0:
        log.info("episode %d profit %.3f", k + 1, row[-1])


def cmd_filter(cfg, args) -> int:
    cfg.validate()
    split = pipeline.Run(cfg).filter_stage(force=True)
    print(f"train={len(split.train)} test={len(split.test)} -> {cfg.out_dir}")
    return EXIT_OK


def cmd_synth(cfg, args) -> int:
    paths = synth_generate(cfg.synth_kind, cfg.synth_seed if args.seed is None else cfg.seed,
                           cfg.synth_days, cfg.data_dir)
    print(f"wrote {len(paths)} days to {cfg.data_dir}")
    return EXIT_OK


def _split(run: pipeline.Run) -> epfilter.DatasetSplit:
    return run.filter_stage()


def cmd_pretrain(cfg, args) -> int:
    cfg.validate()
    run = pipeline.Run(cfg)
    roles = ROLES if args.role == "ALL" else (Role(args.role),)
    run.pretrain_stage(_split(run), roles=roles, force=True)
    print(f"pretrained {', '.join(r.value for r in roles)} -> {run.out / 'pretrain'}")
    return EXIT_OK


def cmd_train(cfg, args) -> int:
    cfg.validate()
    run = pipeline.Run(cfg)
    run.train_stage(_split(run), force=True, progress=_progress)
    print(f"agents -> {run.agents_dir}; curves -> {run.out / 'curves.csv'}")
    return EXIT_OK


def cmd_backtest(cfg, args) -> int:
    run = pipeline.Run(cfg)
    if args.traces:
        tdir = Path(args.traces)
        if not tdir.is_dir():
            raise DataError(f"trace directory {tdir} not found")
        subdirs = [d for d in ("train", "test") if (tdir / d).is_dir()]
        sets = {d: backtest.read_trace_dir(tdir / d) for d in subdirs} or {"test": backtest.read_trace_dir(tdir)}
        rep = run.write_report(sets)
    else:
        cfg.validate()
        rep = run.backtest_stage(_split(run))
    _print_report(rep)
    print(f"report -> {run.report_path}")
    return EXIT_OK


def cmd_run(cfg, args) -> int:
    rep = pipeline.run_pipeline(cfg, force=args.force, progress=_progress)
    _print_report(rep)
    print(f"report -> {pipeline.Run(cfg).report_path}")
    return EXIT_OK


def _print_report(rep: dict) -> None:
    for name in ("train", "test"):
        rows = rep.get(name)
        if not rows:
            continue
        print(f"[{name}] episodes={rows['episodes']} trades={rows['trades']}")
        for key in ("Profit per episode(%)", "Sharpe ratio", "MDD (%)", "Calmar ratio"):
            val = rows[key]
            print(f"  {key:<22} {'n/a' if val is None else f'{val:.4f}'}")


COMMANDS = {"filter": cmd_filter, "synth-gen": cmd_synth, "pretrain": cmd_pretrain,
            "train": cmd_train, "backtest": cmd_backtest, "run": cmd_run}


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, DataError):
        return EXIT_DATA
    return EXIT_TRAIN


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    for name in ("config", "out", "seed", "verbose"):
        if not hasattr(args, name):
            setattr(args, name, None)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load_config(args)
        return COMMANDS[args.command](cfg, args)
    except ScalpError as exc:
        stage = getattr(exc, "stage", None)
        where = f"{stage} stage failed: " if stage else ""
        print(f"error: {where}{type(exc).__name__}: {exc}", file=sys.stderr)
        return exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
