import json

import numpy as np

from scalprl import synth
from scalprl.marketdata import CSV_HEADER, load_day


def test_same_seed_byte_identical(tmp_path):
    a = synth.synth_generate("pattern", 3, 2, tmp_path / "a")
    b = synth.synth_generate("pattern", 3, 2, tmp_path / "b")
    for pa, pb in zip(a, b):
        assert pa.read_bytes() == pb.read_bytes()
        assert pa.with_suffix(".json").read_bytes() == pb.with_suffix(".json").read_bytes()


def test_files_follow_csv_contract(tmp_path):
    paths = synth.synth_generate("random-walk", 0, 1, tmp_path)
    header = paths[0].read_text().splitlines()[0].split(",")
    assert header == list(CSV_HEADER)
    records, meta = load_day(paths[0])
    assert len(records) == synth.SynthParams().seconds and meta.prev_close == 10_000


def test_random_walk_log_returns_centred():
    p = synth.SynthParams(seconds=10_000, prev_close=1e6)
    (ep, _), = synth.generate("random-walk", 5, 1, p)
    r = np.diff(np.log(ep.prices))
    assert abs(r.mean()) <= 3 * r.std(ddof=1) / np.sqrt(len(r))


def test_pattern_step_follows_every_spike(tmp_path):
    synth.synth_generate("pattern", 4, 5, tmp_path)
    spikes = json.loads((tmp_path / "spikes.json").read_text())
    p = synth.SynthParams()
    for stem, marks in spikes.items():
        records, _ = load_day(tmp_path / f"{stem}.csv")
        prices = np.array([r.last_price for r in records])
        amounts = np.array([r.bid_amount[0] for r in records])
        assert marks
        for s in marks:
            k = s + p.spike_delay
            assert prices[k] == round(prices[k - 1] * (1 + p.step_pct / 100), 2)
            assert amounts[s] > 5 * np.median(amounts)


def test_ramp_is_linear():
    (ep, _), = synth.generate("ramp", 0, 1)
    d = np.diff(ep.prices)
    assert np.allclose(d, d[0], atol=0.011)
