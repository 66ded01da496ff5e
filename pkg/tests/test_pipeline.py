import json

import pytest

from scalprl import config, pipeline
from scalprl.errors import MissingPretrain

TINY = {
    "synthesize": "true", "synth_kind": "pattern", "synth_days": "4", "synth_seed": "2",
    "pretrain_samples": "40", "pretrain_epochs": "1",
    "conv3d_channels": "1", "conv1d_channels": "2", "neurons": "4",
    "episodes": "4", "learn_start": "2", "batch": "4", "target_sync": "2",
}


def tiny_config(tmp_path, **extra):
    kv = {**TINY, "data_dir": str(tmp_path / "data"), "out_dir": str(tmp_path / "out"), **extra}
    return config.from_mapping({k: str(v) for k, v in kv.items()})


@pytest.fixture(scope="module")
def finished(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("pipe")
    cfg = tiny_config(tmp)
    return cfg, pipeline.run_pipeline(cfg)


def test_report_has_four_metrics(finished):
    cfg, rep = finished
    on_disk = json.loads(pipeline.Run(cfg).report_path.read_text())
    for name in ("train", "test"):
        assert list(rep[name])[:4] == ["Profit per episode(%)", "Sharpe ratio", "MDD (%)", "Calmar ratio"]
        assert set(on_disk[name]) == set(rep[name])
    assert on_disk["config_hash"] == cfg.hash() and on_disk["seeds"]["seed"] == cfg.seed


def test_artifacts_carry_hash_and_seeds(finished):
    cfg, _ = finished
    out = pipeline.Run(cfg).out
    for side in ["filter.json", "train.json", "pretrain/bsa.json", "run.json"]:
        body = json.loads((out / side).read_text())
        assert body["config_hash"] == cfg.hash() and "seeds" in body
    assert (out / "curves.csv").read_text().splitlines()[0] == \
        "episode,reward_bsa,reward_boa,reward_ssa,reward_soa,profit"
    train = json.loads((out / "train.json").read_text())
    assert train["frozen_checksums_before"] == train["frozen_checksums_after"]


def test_rerun_resumes_and_reproduces(finished):
    cfg, rep = finished
    out = pipeline.Run(cfg).out
    stamp = (out / "pretrain" / "bsa.sgnn").stat().st_mtime_ns
    again = pipeline.run_pipeline(cfg)
    assert again == rep
    assert (out / "pretrain" / "bsa.sgnn").stat().st_mtime_ns == stamp


def test_fresh_rerun_is_identical(finished, tmp_path):
    cfg, rep = finished
    other = tiny_config(tmp_path)
    rep2 = pipeline.run_pipeline(other)
    strip = lambda r: {k: v for k, v in r.items() if k != "config_hash"}
    assert strip(rep2) == strip(rep)


def test_missing_pretrain_names_stage(tmp_path):
    cfg = tiny_config(tmp_path)
    run = pipeline.Run(cfg)
    run.data_stage()
    split = run.filter_stage()
    with pytest.raises(MissingPretrain) as exc:
        run.train_stage(split)
    assert exc.value.stage == "train"
