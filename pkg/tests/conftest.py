import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from rltrader.data import PriceSeries, write_price_csv  # noqa: E402

DAY = 86_400
T0 = 1_546_300_800  # 2019-01-01T00:00:00Z


def daily_series(prices, start=T0):
    prices = np.asarray(prices, dtype=float)
    return PriceSeries(start + DAY * np.arange(len(prices), dtype=np.int64), prices)


def random_walk(n, seed=0, start=100.0, step=1.0):
    rng = np.random.default_rng(seed)
    return start + np.cumsum(rng.normal(0.0, step, size=n)).clip(-start + 1.0, None)


def sine_prices(n=5000, period=50, level=100.0, amplitude=0.10):
    return level * (1.0 + amplitude * np.sin(2.0 * np.pi * np.arange(n) / period))


WORKED_PRICE_STEPS = (55.0, 30.0, -10.0)


def worked_example_series(t0=55, tail=1, seed=7):
    """Daily series whose closes from index ``t0`` move by +55, +30, -10.

    ``t0`` is the first decision index for the default warm-up (26) and window (30).
    """
    pre = 1000.0 + np.cumsum(np.random.default_rng(seed).normal(0, 5, size=t0 + 1))
    p = [*pre]
    for d in WORKED_PRICE_STEPS:
        p.append(p[-1] + d)
    p.extend([p[-1]] * tail)
    return daily_series(p)


@pytest.fixture
def walk_series():
    return daily_series(random_walk(200, seed=1))


@pytest.fixture
def csv_path(tmp_path):
    def _write(series, name="prices.csv"):
        path = tmp_path / name
        write_price_csv(path, series)
        return str(path)
    return _write


# acceptance summary -------------------------------------------------------

ACCEPTANCE_RESULTS: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {key}: {detail}")
