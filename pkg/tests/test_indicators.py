import math
from datetime import datetime, timezone

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from rltrader import indicators as ind
from rltrader.data import Bar, PriceSeries, resample_bars_array
from rltrader.errors import InsufficientDataError


def intraday_bars(n_bars=300, per_bar=6, seed=0, duration=21_600):
    """Random-walk points resampled into bars with genuine OHLC spread."""
    rng = np.random.default_rng(seed)
    step = duration // per_bar
    ts = 1_546_300_800 + step * np.arange(n_bars * per_bar, dtype=np.int64)
    px = 100.0 + np.cumsum(rng.normal(0, 0.5, len(ts)))
    return resample_bars_array(PriceSeries(ts, px), duration)


def assert_close_nan(a, b, tol=1e-9):
    a, b = np.asarray(a, float), np.asarray(b, float)
    assert a.shape == b.shape
    assert np.array_equal(np.isnan(a), np.isnan(b))
    m = ~np.isnan(a)
    assert np.max(np.abs(a[m] - b[m]), initial=0.0) <= tol


def test_ema_hand_values():
    np.testing.assert_allclose(ind.ema([1, 2, 3], 2), [1, 5 / 3, 23 / 9], rtol=0, atol=1e-12)


def test_ema_of_constant_is_constant():
    assert np.all(ind.ema(np.full(40, 7.5), 12) == 7.5)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(1, 1e4), min_size=1, max_size=120), st.integers(1, 40))
def test_ema_matches_loop(values, period):
    assert_close_nan(ind.ema(values, period), oracles.ema_loop(values, period), 1e-9 * max(values))


def test_macd_sign_convention():
    rising = np.arange(1.0, 101.0)
    assert np.all(ind.macd(rising)[1:] < 0)  # slow EMA lags below the fast one


def test_rsi_extremes_and_shape():
    assert np.all(ind.rsi(np.arange(1.0, 40.0))[14:] == 100.0)
    assert np.all(ind.rsi(np.arange(40.0, 1.0, -1))[14:] == 0.0)
    assert np.all(ind.rsi(np.full(30, 3.0))[14:] == 50.0)
    r = ind.rsi(np.arange(1.0, 40.0))
    assert np.isnan(r[:14]).all()
    with pytest.raises(InsufficientDataError):
        ind.rsi(np.ones(14))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(21, 200), st.integers(2, 20))
def test_rsi_in_range_and_matches_loop(seed, n, period):
    c = 50 + np.cumsum(np.random.default_rng(seed).normal(0, 1, n))
    r = ind.rsi(c, period)
    assert_close_nan(r, oracles.rsi_loop(list(c), period))
    assert np.all((r[period:] >= 0) & (r[period:] <= 100))


def test_williams_bounds_and_flat_window():
    b = intraday_bars(100, seed=3)
    wr = ind.williams_r(b, 14)
    assert np.isnan(wr[:13]).all()
    assert np.all((wr[13:] >= -100) & (wr[13:] <= 0))
    flat = [Bar(5, 5, 5, 5, i * 60, 60) for i in range(20)]
    assert np.all(ind.williams_r(flat, 14)[13:] == 0.0)


def test_bar_direction_example():
    assert ind.weighted_bar_direction(Bar(10, 12, 9, 11, 0, 60)) == pytest.approx(1 / 3, abs=1e-15)
    assert ind.weighted_bar_direction(Bar(4, 4, 4, 4, 0, 60)) == 0.0


@settings(max_examples=60, deadline=None)
@given(st.floats(1, 1000), st.floats(0, 1), st.floats(0, 1), st.floats(0.001, 100))
def test_bar_direction_bounded(low, fo, fc, span):
    b = Bar(low + fo * span, low + span, low, low + fc * span, 0, 60)
    assert -1.0 <= ind.weighted_bar_direction(b) <= 1.0


def test_hl_range_previous_day():
    day = 86_400
    bars = [Bar(10, 12, 9, 11, 0, 3600), Bar(11, 15, 10, 14, 3600, 3600),
            Bar(14, 14, 13, 13, day, 3600), Bar(13, 20, 13, 19, day + 3600, 3600),
            Bar(19, 19, 18, 18, 3 * day, 3600)]
    out = ind.hl_range_series(bars)
    assert np.isnan(out[:2]).all()
    assert list(out[2:4]) == [6.0, 6.0]
    assert out[4] == 7.0  # day 2 has no data, so the most recent day with data
    assert ind.hl_range(bars[:2]) == 6.0


def test_encode_timestamp_example():
    # Wednesday 2019-01-02 06:00 UTC
    t = int(datetime(2019, 1, 2, 6, tzinfo=timezone.utc).timestamp())
    enc = ind.encode_timestamp(t)
    a = 2 * math.pi * 2 / 7
    assert enc == pytest.approx((math.sin(a), math.cos(a), 1.0, 0.0), abs=1e-12)
    assert ind.encode_timestamp(datetime(2019, 1, 2, 6, tzinfo=timezone.utc)) == enc


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 4_000_000_000))
def test_encode_timestamp_matches_calendar(t):
    dt = datetime.fromtimestamp(t, tz=timezone.utc)
    a = 2 * math.pi * dt.weekday() / 7
    b = 2 * math.pi * (dt.hour * 3600 + dt.minute * 60 + dt.second) / 86_400
    enc = ind.encode_timestamp(t)
    assert enc == pytest.approx((math.sin(a), math.cos(a), math.sin(b), math.cos(b)), abs=1e-12)
    assert np.allclose(ind.encode_timestamps([t])[0], enc, atol=1e-12)
    assert enc[0] ** 2 + enc[1] ** 2 == pytest.approx(1.0)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_all_indicators_match_oracles(seed):
    b = intraday_bars(400, seed=seed)
    c = list(b.close)
    assert_close_nan(ind.macd(b.close), oracles.macd_loop(c))
    assert_close_nan(ind.rsi(b.close, 14), oracles.rsi_loop(c, 14))
    assert_close_nan(ind.williams_r(b, 14), oracles.williams_loop(list(b.high), list(b.low), c, 14))
    assert_close_nan(ind.bar_direction_series(b),
                     oracles.bar_direction_loop(list(b.open), list(b.high), list(b.low), c))
    assert_close_nan(ind.hl_range_series(b), oracles.hl_range_loop(list(b.start), list(b.high), list(b.low)))
