"""Market-feature assembly: indicator matrix, causal scaling, and windows."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import indicators as ind
from .data import SECONDS_PER_DAY, BarArray, PriceSeries, resample_bars_array
from .errors import DomainError, InsufficientDataError

FEATURE_COLUMNS = (
    "macd", "rsi", "williams_r", "bar_direction", "hl_range",
    "dow_sin", "dow_cos", "tod_sin", "tod_cos",
)
N_FEATURES = len(FEATURE_COLUMNS)

SCALE_LO = 0.1
SCALE_HI = 1.0
SCALE_MID = 0.55


class IndicatorVector(NamedTuple):
    macd: float
    rsi: float
    williams_r: float
    bar_direction: float
    hl_range: float
    time_enc: tuple[float, float, float, float]

    def as_row(self) -> np.ndarray:
        return np.array([self.macd, self.rsi, self.williams_r, self.bar_direction,
                         self.hl_range, *self.time_enc])

    @classmethod
    def from_row(cls, row) -> "IndicatorVector":
        r = [float(v) for v in row]
        return cls(r[0], r[1], r[2], r[3], r[4], tuple(r[5:9]))


@dataclass(frozen=True)
class FeatureConfig:
    bar_duration: int = SECONDS_PER_DAY
    window: int = 30
    macd_fast: int = ind.MACD_FAST
    macd_slow: int = ind.MACD_SLOW
    rsi_period: int = ind.RSI_PERIOD
    williams_period: int = ind.WILLIAMS_PERIOD

    def __post_init__(self):
        if self.window < 1:
            raise DomainError("window must be >= 1")
        if self.bar_duration <= 0:
            raise DomainError("bar_duration must be > 0")


def raw_indicator_matrix(bars: BarArray, cfg: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """``(n, 9)`` unscaled indicator rows; undefined entries are ``nan``.

    MACD is masked for the first ``macd_slow`` bars so the slow EMA has a
    full period of history behind it.
    """
    n = len(bars)
    need = max(cfg.rsi_period + 1, cfg.williams_period)
    if n < need:
        raise InsufficientDataError(f"need at least {need} bars for indicators, got {n}")
    m = np.empty((n, N_FEATURES))
    m[:, 0] = ind.macd(bars.close, cfg.macd_fast, cfg.macd_slow)
    m[: cfg.macd_slow, 0] = np.nan
    m[:, 1] = ind.rsi(bars.close, cfg.rsi_period)
    m[:, 2] = ind.williams_r(bars, cfg.williams_period)
    m[:, 3] = ind.bar_direction_series(bars)
    m[:, 4] = ind.hl_range_series(bars)
    m[:, 5:] = ind.encode_timestamps(bars.start)
    return m


def first_complete_index(raw: np.ndarray) -> int:
    ok = np.all(np.isfinite(raw), axis=1)
    if not ok.any():
        raise InsufficientDataError("no timestep has every indicator available")
    i = int(np.argmax(ok))
    if not ok[i:].all():
        raise InsufficientDataError(f"indicator gap after warm-up at index {i + int(np.argmin(ok[i:]))}")
    return i


def scale_expanding(raw) -> np.ndarray:
    """Per-column min-max scaling to [0.1, 1] using only rows up to each index.

    A column whose running range is still zero maps to 0.55.
    """
    x = np.asarray(raw, dtype=float)
    if len(x) == 0:
        raise DomainError("cannot scale an empty sequence")
    lo = np.minimum.accumulate(x, axis=0)
    hi = np.maximum.accumulate(x, axis=0)
    span = hi - lo
    with np.errstate(divide="ignore", invalid="ignore"):
        z = SCALE_LO + (SCALE_HI - SCALE_LO) * (x - lo) / span
    return np.where(span > 0, z, SCALE_MID)


@dataclass(frozen=True, eq=False)
class FeatureWindow:
    """``W`` consecutive scaled feature rows ending at ``end_index`` (oldest first)."""

    rows: np.ndarray
    end_index: int

    def __post_init__(self):
        r = self.rows
        # read-only float views (slices of frozen feature matrices) are shared, not copied
        if not (isinstance(r, np.ndarray) and r.dtype == np.float64 and not r.flags.writeable):
            r = np.array(r, dtype=float, copy=True)
            r.flags.writeable = False
        object.__setattr__(self, "rows", r)

    @property
    def length(self) -> int:
        return self.rows.shape[0]

    def __eq__(self, other):
        if not isinstance(other, FeatureWindow):
            return NotImplemented
        return self.end_index == other.end_index and np.array_equal(self.rows, other.rows)


def build_feature_window(features, end_index: int, window: int, warmup: int = 0) -> FeatureWindow:
    f = np.asarray(features)
    if window < 1:
        raise DomainError("window must be >= 1")
    if end_index < warmup + window - 1:
        raise InsufficientDataError(
            f"window of {window} ending at {end_index} reaches before warm-up index {warmup}"
        )
    if end_index >= len(f):
        raise InsufficientDataError(f"end_index {end_index} beyond {len(f)} feature rows")
    rows = f[end_index - window + 1: end_index + 1]
    if not np.all(np.isfinite(rows)):
        raise InsufficientDataError(f"window ending at {end_index} contains unavailable features")
    return FeatureWindow(rows, end_index)


@dataclass(frozen=True, eq=False)
class MarketFeatures:
    """Everything the environment needs from the data: bars and scaled features.

    ``raw`` and ``scaled`` have one row per bar; rows before ``warmup`` are ``nan``.
    """

    bars: BarArray
    raw: np.ndarray
    scaled: np.ndarray
    warmup: int
    config: FeatureConfig

    @property
    def closes(self) -> np.ndarray:
        return self.bars.close

    def __len__(self) -> int:
        return len(self.bars)

    @property
    def first_decision_index(self) -> int:
        return self.warmup + self.config.window - 1

    def window(self, end_index: int) -> FeatureWindow:
        W = self.config.window
        if self.warmup + W - 1 <= end_index < len(self.scaled):
            # rows from warm-up on are finite by construction
            return FeatureWindow(self.scaled[end_index - W + 1: end_index + 1], end_index)
        return build_feature_window(self.scaled, end_index, W, self.warmup)

    def indicator_vector(self, i: int) -> IndicatorVector:
        return IndicatorVector.from_row(self.raw[i])


def compute_features(bars: BarArray, cfg: FeatureConfig = FeatureConfig()) -> MarketFeatures:
    raw = raw_indicator_matrix(bars, cfg)
    warmup = max(first_complete_index(raw), cfg.macd_slow)
    if warmup >= len(bars):
        raise InsufficientDataError(f"{len(bars)} bars leave nothing after warm-up ({warmup})")
    scaled = np.full_like(raw, np.nan)
    scaled[warmup:] = scale_expanding(raw[warmup:])
    raw.flags.writeable = False
    scaled.flags.writeable = False
    return MarketFeatures(bars, raw, scaled, warmup, cfg)


def prepare_market(series: PriceSeries, cfg: FeatureConfig = FeatureConfig()) -> MarketFeatures:
    return compute_features(resample_bars_array(series, cfg.bar_duration), cfg)


def write_feature_csv(path, market: MarketFeatures) -> int:
    """Dump scaled feature rows from warm-up onward. Returns the row count."""
    rows = market.scaled[market.warmup:]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(FEATURE_COLUMNS)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])
    return len(rows)
