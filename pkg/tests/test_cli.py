import json

import pytest

from scalprl import cli
from scalprl.synth import synth_generate

from test_pipeline import TINY


@pytest.fixture
def cfg_file(tmp_path):
    lines = [f"{k} = {v}" for k, v in TINY.items() if k != "synthesize"]
    lines += [f"data_dir = {tmp_path / 'data'}", f"out_dir = {tmp_path / 'out'}"]
    path = tmp_path / "run.cfg"
    path.write_text("\n".join(lines) + "\n")
    return path


def test_synth_then_filter(tmp_path, capsys):
    data = tmp_path / "d"
    assert cli.main(["synth-gen", "--kind", "pattern", "--days", "5", "--seed", "1", "--data-dir", str(data)]) == 0
    assert len(list(data.glob("*.csv"))) == 5
    out = tmp_path / "o"
    assert cli.main(["filter", "--data-dir", str(data), "--threshold", "15", "--ratio", "0.5",
                     "--seed", "3", "--out", str(out)]) == 0
    train = (out / "train.list").read_text().splitlines()
    test = (out / "test.list").read_text().splitlines()
    assert train and test and not set(train) & set(test)
    assert all(line.count(",") == 1 for line in train + test)


def test_stagewise_commands(cfg_file, tmp_path, capsys):
    synth_generate("pattern", 2, 4, tmp_path / "data")
    assert cli.main(["--config", str(cfg_file), "train"]) == 4  # nothing pretrained yet
    assert "train stage failed: MissingPretrain" in capsys.readouterr().err
    assert cli.main(["pretrain", "--config", str(cfg_file), "--role", "all"]) == 0
    assert cli.main(["train", "--config", str(cfg_file)]) == 0
    assert cli.main(["backtest", "--config", str(cfg_file)]) == 0
    rep = json.loads((tmp_path / "out" / "report.json").read_text())
    assert "Sharpe ratio" in rep["test"]
    assert cli.main(["backtest", "--config", str(cfg_file), "--traces", str(tmp_path / "out" / "traces")]) == 0


def test_run_subcommand(cfg_file, tmp_path, capsys):
    synth_generate("pattern", 2, 4, tmp_path / "data")
    assert cli.main(["run", "--config", str(cfg_file), "--seed", "5"]) == 0
    assert "Profit per episode(%)" in capsys.readouterr().out
    assert json.loads((tmp_path / "out" / "report.json").read_text())["seeds"]["seed"] == 5


def test_exit_codes(tmp_path, capsys):
    assert cli.main(["--config", str(tmp_path / "nope.cfg"), "run"]) == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("unknown_key = 1\n")
    assert cli.main(["run", "--config", str(bad)]) == 2
    data = tmp_path / "d"
    data.mkdir()
    (data / "X_2018-01-01.csv").write_text("ts,bp1\n1,2\n")
    (data / "X_2018-01-01.json").write_text('{"ticker": "X", "prev_close": 1, "shares_outstanding": 10, "shares_majority": 1}')
    assert cli.main(["filter", "--data-dir", str(data), "--out", str(tmp_path / "o")]) == 3
    assert "filter stage failed" in capsys.readouterr().err
