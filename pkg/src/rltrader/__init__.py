"""Online deep Q-learning trading engine.

Price points are resampled to bars, turned into scaled technical-indicator
windows, and traded by a recurrent Q-network that learns while it trades.
"""

__version__ = "0.1.0"

from .agent import Agent, EpsilonSchedule, HyperParams, ReplayMemory, online_learn
from .backtest import (
    BacktestReport, equity_curve, max_drawdown, sharpe_annualized, win_ratio,
)
from .data import Bar, PriceSeries, load_price_series, resample_bars
from .env import Action, EnvConfig, PositionState, TradeRecord, TradingEnv, episode_pnl
from .features import FeatureConfig, FeatureWindow, prepare_market
from .qnet import NetDims, NetworkParams, QNetwork, init_params

__all__ = [
    "Action", "Agent", "BacktestReport", "Bar", "EnvConfig", "EpsilonSchedule",
    "FeatureConfig", "FeatureWindow", "HyperParams", "NetDims", "NetworkParams",
    "PositionState", "PriceSeries", "QNetwork", "ReplayMemory", "TradeRecord",
    "TradingEnv", "episode_pnl", "equity_curve", "init_params", "load_price_series",
    "max_drawdown", "online_learn", "prepare_market", "resample_bars",
    "sharpe_annualized", "win_ratio",
]
