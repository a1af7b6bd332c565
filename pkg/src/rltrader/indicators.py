"""Technical indicators computed from bar closes and ranges.

All functions return arrays aligned with their input; entries that are not
yet defined (warm-up) are ``nan``.
"""
from __future__ import annotations

import math
from datetime import datetime
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import lfilter

from .data import SECONDS_PER_DAY, Bar, BarArray
from .errors import DomainError, InsufficientDataError

MACD_FAST = 12
MACD_SLOW = 26
RSI_PERIOD = 14
WILLIAMS_PERIOD = 14


def ema(values, period: int) -> np.ndarray:
    """Exponential moving average seeded at the first value, ``k = 2/(period+1)``."""
    if period < 1 or int(period) != period:
        raise DomainError(f"EMA period must be a positive integer, got {period!r}")
    x = np.asarray(values, dtype=float)
    if x.ndim != 1 or len(x) == 0:
        raise DomainError("EMA input must be a non-empty 1-D sequence")
    k = 2.0 / (period + 1.0)
    y, _ = lfilter([k], [1.0, -(1.0 - k)], x, zi=[(1.0 - k) * x[0]])
    return y


def macd(closes, fast: int = MACD_FAST, slow: int = MACD_SLOW) -> np.ndarray:
    """Slow EMA minus fast EMA.

    Note the sign: this is ``EMA(26) - EMA(12)``, the negation of the usual
    charting convention. A rising market therefore gives negative values.
    """
    x = np.asarray(closes, dtype=float)
    return ema(x, slow) - ema(x, fast)


def _wilder(x: np.ndarray, seed: float, period: int) -> np.ndarray:
    a = (period - 1.0) / period
    if len(x) == 0:
        return np.array([seed])
    y, _ = lfilter([1.0 - a], [1.0, -a], x, zi=[a * seed])
    return np.r_[seed, y]


def rsi(closes, period: int = RSI_PERIOD) -> np.ndarray:
    """Wilder RSI. The first ``period`` entries are ``nan``.

    The initial averages are simple means of the first ``period`` changes;
    after that each average is smoothed with weight ``1/period``. A window
    with neither gains nor losses reads 50.
    """
    if period < 1:
        raise DomainError(f"RSI period must be >= 1, got {period!r}")
    c = np.asarray(closes, dtype=float)
    if len(c) <= period:
        raise InsufficientDataError(f"RSI({period}) needs more than {period} closes, got {len(c)}")
    d = np.diff(c)
    gain = np.where(d > 0, d, 0.0)
    loss = np.where(d < 0, -d, 0.0)
    avg_gain = _wilder(gain[period:], gain[:period].mean(), period)
    avg_loss = _wilder(loss[period:], loss[:period].mean(), period)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = 100.0 - 100.0 / (1.0 + avg_gain / avg_loss)
    val = np.where(avg_loss == 0.0, np.where(avg_gain > 0.0, 100.0, 50.0), val)
    out = np.full(len(c), np.nan)
    out[period:] = val
    return out


def williams_r(bars: Sequence[Bar] | BarArray, period: int = WILLIAMS_PERIOD) -> np.ndarray:
    """Williams %R over trailing ``period`` bars, in [-100, 0].

    A flat window (highest high equals lowest low) reads 0.
    """
    if period < 1:
        raise DomainError(f"Williams %R period must be >= 1, got {period!r}")
    b = BarArray.from_bars(bars)
    n = len(b)
    if n < period:
        raise InsufficientDataError(f"Williams %R({period}) needs {period} bars, got {n}")
    hh = sliding_window_view(b.high, period).max(axis=1)
    ll = sliding_window_view(b.low, period).min(axis=1)
    close = b.close[period - 1:]
    span = hh - ll
    with np.errstate(divide="ignore", invalid="ignore"):
        wr = np.where(span > 0, -100.0 * (hh - close) / span, 0.0)
    out = np.full(n, np.nan)
    out[period - 1:] = wr
    return out


def weighted_bar_direction(bar: Bar) -> float:
    """Signed body-to-range ratio of a candle, in [-1, 1]; 0 for a flat bar."""
    rng = bar.high - bar.low
    if rng <= 0:
        return 0.0
    return (bar.close - bar.open) / rng


def bar_direction_series(bars: Sequence[Bar] | BarArray) -> np.ndarray:
    b = BarArray.from_bars(bars)
    rng = b.high - b.low
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(rng > 0, (b.close - b.open) / rng, 0.0)


def hl_range(prev_day_bars: Sequence[Bar] | BarArray) -> float:
    """High-low range over one day's bars."""
    b = BarArray.from_bars(prev_day_bars)
    if len(b) == 0:
        raise InsufficientDataError("no previous-day bars")
    return float(b.high.max() - b.low.min())


def hl_range_series(bars: Sequence[Bar] | BarArray) -> np.ndarray:
    """For each bar, the high-low range of the most recent earlier UTC day with data.

    Bars on the first day in the sequence get ``nan``.
    """
    b = BarArray.from_bars(bars)
    n = len(b)
    if n == 0:
        return np.array([])
    day = np.floor_divide(b.start, SECONDS_PER_DAY)
    first = np.flatnonzero(np.r_[True, day[1:] != day[:-1]])
    day_range = np.maximum.reduceat(b.high, first) - np.minimum.reduceat(b.low, first)
    day_idx = np.cumsum(np.r_[True, day[1:] != day[:-1]]) - 1
    out = np.full(n, np.nan)
    has_prev = day_idx >= 1
    out[has_prev] = day_range[day_idx[has_prev] - 1]
    return out


def encode_timestamp(t: int | datetime) -> tuple[float, float, float, float]:
    """Cyclical encoding ``(dow_sin, dow_cos, tod_sin, tod_cos)``; Monday is day 0."""
    if isinstance(t, datetime):
        t = int(t.timestamp())
    t = int(t)
    days, sec = divmod(t, SECONDS_PER_DAY)
    dow = (days + 3) % 7  # 1970-01-01 was a Thursday
    a = 2.0 * math.pi * dow / 7.0
    b = 2.0 * math.pi * sec / SECONDS_PER_DAY
    return (math.sin(a), math.cos(a), math.sin(b), math.cos(b))


def encode_timestamps(ts) -> np.ndarray:
    ts = np.asarray(ts, dtype=np.int64)
    days, sec = np.divmod(ts, SECONDS_PER_DAY)
    a = 2.0 * np.pi * ((days + 3) % 7) / 7.0
    b = 2.0 * np.pi * sec / SECONDS_PER_DAY
    return np.column_stack([np.sin(a), np.cos(a), np.sin(b), np.cos(b)])
