"""
Online learning on a noiseless cycle
====================================

The agent trades while it learns: every 480 steps it replays its memory
once and clears it. On a clean 50-bar sine it should end well in profit,
far above random trading. Takes about ten seconds.
"""
import numpy as np

from rltrader.agent import Agent, HyperParams, online_learn, run_policy
from rltrader.backtest import equity_curve, max_drawdown, sharpe_annualized
from rltrader.data import PriceSeries
from rltrader.env import EnvConfig, TradingEnv
from rltrader.features import prepare_market
from rltrader.qnet import NetDims

n = 1500
px = 100 * (1 + 0.1 * np.sin(2 * np.pi * np.arange(n) / 50))
market = prepare_market(PriceSeries(1_546_300_800 + 86_400 * np.arange(n), px))
cfg = EnvConfig(commission=0.0)

res = online_learn(TradingEnv(market, cfg), Agent(HyperParams(), NetDims(), seed=0))
curve = equity_curve(res.step_log)
print("steps", len(curve), " replay cycles", res.replay_cycles, " epsilon", round(res.schedule.value, 3))
print("agent PnL", round(curve[-1], 1), " Sharpe", round(sharpe_annualized(curve), 2),
      " MDD %", round(max_drawdown(curve), 2))

# PnL per fifth of the run: later fifths should be better than the first
print("by fifth:", [round(float(c.sum()), 1) for c in np.array_split(np.diff(np.r_[0, curve]), 5)])

rng = np.random.default_rng(1)
rand = run_policy(TradingEnv(market, cfg), lambda s: int(rng.integers(3)))
print("random PnL", round(equity_curve(rand.step_log)[-1], 1))
