"""
From raw prices to a feature window
===================================

Hourly prices are resampled into daily bars, turned into nine indicator
columns and scaled to [0.1, 1] using only past rows.
"""
import numpy as np

from rltrader.data import PriceSeries, resample_bars_array
from rltrader.features import FEATURE_COLUMNS, compute_features

rng = np.random.default_rng(0)
ts = 1_546_300_800 + 3600 * np.arange(24 * 120)  # 120 days of hourly points
px = 60.0 + np.cumsum(rng.normal(0, 0.15, len(ts)))
series = PriceSeries(ts, px)

bars = resample_bars_array(series)  # daily, aligned to UTC midnight
print(len(series), "points ->", len(bars), "daily bars")

market = compute_features(bars)
print("warm-up rows:", market.warmup, " first decision at t =", market.first_decision_index)

# raw indicator values on the last day
print({k: round(float(v), 3) for k, v in zip(FEATURE_COLUMNS, market.raw[-1])})

# the network sees a (30, 9) window of scaled rows ending at t
w = market.window(len(bars) - 1)
print(w.rows.shape, w.rows.min().round(3), w.rows.max().round(3))
