"""
Position and reward accounting
==============================

Buy, hold, then sell on three price moves (+55, +30, -10) with a commission
of 5 per contract opened.
"""
import numpy as np

from rltrader.data import PriceSeries
from rltrader.env import BUY, HOLD, SELL, EnvConfig, TradingEnv

# 55 bars of history for the indicators, then the three moves
p = list(1000 + np.cumsum(np.random.default_rng(7).normal(0, 5, 56)))
for d in (55.0, 30.0, -10.0, 0.0):
    p.append(p[-1] + d)
series = PriceSeries(1_546_300_800 + 86_400 * np.arange(len(p)), np.array(p))

env = TradingEnv.from_series(series, EnvConfig(commission=5))
state = env.reset()
for a in (BUY, HOLD, SELL):
    res = env.step(a)
    print(f"{a.name:4s} -> [L, S, PnL] = {res.next_state.position.as_list()}")
    if res.closed_trade:
        print("   closed", res.closed_trade.direction, "trade, long-term PnL", res.closed_trade.long_term_pnl)

# the short opened by the sell is still open; close it for reporting
print("open at end:", env.force_close().long_term_pnl)
