import numpy as np
import pytest

from scalprl.epfilter import Episode
from scalprl.marketdata import TickerMeta
from scalprl.synth import day_from_prices

META = TickerMeta("TEST", 10_000.0, 10_000_000, 3_000_000)


def make_episode(prices, meta=META, seed=0, ticker="TEST", date="2018-04-02", boost=None):
    rng = np.random.default_rng(seed)
    recs = day_from_prices(prices, meta, rng, amount_boost=boost)
    return Episode(ticker=ticker, date=date, records=tuple(recs), meta=meta)


@pytest.fixture
def meta():
    return META


@pytest.fixture
def flat_episode():
    return make_episode(np.full(400, 10_000.0))


def planted_universe(n=100, seed=0, seconds=300):
    """``n`` days whose intraday peak rise over prev close is planted exactly.

    Returns ``(episodes, peaks)``; peaks include the 15% boundary and values just below it.
    """
    rng = np.random.default_rng(seed)
    peaks = rng.uniform(5.0, 25.0, size=n)
    peaks[:4] = [15.0, 14.99, 15.01, 25.0]
    eps = []
    for j, peak in enumerate(peaks):
        base = META.prev_close * (1 + rng.uniform(0.0, min(peak, 14.0)) / 100)
        prices = np.full(seconds, round(base, 2))
        at = int(rng.integers(1, seconds))
        prices[at] = META.prev_close * (1 + peak / 100)
        eps.append(make_episode(prices, seed=j, ticker=f"P{j:03d}"))
    return eps, peaks


# --- acceptance summary --------------------------------------------------------

_ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def criterion(request):
    """Record one pass/fail line for an acceptance criterion; fails the test on a miss."""

    def record(name: str, passed: bool, detail: str):
        _ACCEPTANCE.append((name, bool(passed), detail))
        assert passed, f"{name}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
