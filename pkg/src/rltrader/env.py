"""Single-instrument trading environment.

The state is a position triple ``[L, S, PnL]`` plus a window of market
features. Actions only touch the position; market features are a fixed
function of the data (zero market impact).

Reward for the action taken at ``t`` is realised over ``[t, t + T]``::

    r = direction * (price[t+T] - price[t]) * held - commission * charged

Consecutive rewards in the same direction are summed into the open trade;
when an action flips the direction, that sum is emitted as a closed trade.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from enum import IntEnum
from typing import Iterable, Sequence

import numpy as np

from .data import PriceSeries
from .errors import DomainError, InsufficientDataError, UsageError
from .features import FeatureConfig, FeatureWindow, MarketFeatures, prepare_market


class Action(IntEnum):
    HOLD = 0
    BUY = 1
    SELL = 2


HOLD, BUY, SELL = Action.HOLD, Action.BUY, Action.SELL
N_ACTIONS = 3


@dataclass(frozen=True)
class PositionState:
    long: int = 0
    short: int = 0
    pnl: float = 0.0

    def __post_init__(self):
        if self.long < 0 or self.short < 0:
            raise DomainError(f"negative contract count in {self}")
        if self.long and self.short:
            raise DomainError(f"long and short at once: {self}")

    @property
    def direction(self) -> int:
        return 1 if self.long else (-1 if self.short else 0)

    @property
    def contracts(self) -> int:
        return self.long + self.short

    def as_list(self) -> list:
        return [self.long, self.short, self.pnl]


@dataclass(frozen=True)
class EnvConfig:
    """Environment settings.

    ``commission`` is charged per contract opened. With
    ``charge_closing_leg`` a reversal also pays for each contract it closes.
    ``unit_exposure`` earns one contract's price move regardless of size.
    """

    max_contracts: int = 5
    commission: float = 2.0
    step_span: int = 1
    charge_closing_leg: bool = False
    unit_exposure: bool = False

    def __post_init__(self):
        if self.max_contracts < 1:
            raise DomainError("max_contracts must be >= 1")
        if self.commission < 0:
            raise DomainError("commission must be >= 0")
        if self.step_span < 1:
            raise DomainError("step_span must be >= 1")


@dataclass(frozen=True)
class EnvState:
    position: PositionState
    market: FeatureWindow
    t: int


@dataclass(frozen=True)
class TradeRecord:
    direction: str  # "long" | "short"
    open_t: int
    close_t: int
    long_term_pnl: float
    contracts: int
    long_term_log_return: float = 0.0
    forced: bool = False

    def to_dict(self) -> dict:
        return {"direction": self.direction, "open_t": self.open_t, "close_t": self.close_t,
                "long_term_pnl": self.long_term_pnl, "contracts": self.contracts,
                "long_term_log_return": self.long_term_log_return, "forced": self.forced}

    @classmethod
    def from_dict(cls, d: dict) -> "TradeRecord":
        return cls(**d)


@dataclass(frozen=True)
class StepResult:
    next_state: EnvState
    immediate_reward: float
    closed_trade: TradeRecord | None
    done: bool
    executed_action: Action = HOLD
    log_reward: float = 0.0
    forced_close: TradeRecord | None = None


@dataclass(frozen=True)
class StepRecord:
    """One line of the JSON-lines step log."""

    t: int
    action: int
    executed: int
    L: int
    S: int
    price: float
    immediate_reward: float
    accumulated_episode_pnl: float
    closed_trade: dict | None = None
    forced_close: dict | None = None

    def to_json(self) -> str:
        d = {k: v for k, v in vars(self).items() if v is not None}
        return json.dumps(d, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "StepRecord":
        return cls(**d)


def clamp_action(position: PositionState, action: int, config: EnvConfig) -> Action:
    """Turn a Buy at the long cap (or a Sell at the short cap) into a Hold."""
    a = Action(action)
    if a == BUY and position.long >= config.max_contracts:
        return HOLD
    if a == SELL and position.short >= config.max_contracts:
        return HOLD
    return a


def apply_action(position: PositionState, action: Action) -> tuple[int, int, int]:
    """New ``(L, S, contracts_closed)`` after an already clamped action.

    A Buy while short closes every short and opens one long; Sell mirrors it.
    """
    L, S = position.long, position.short
    if action == BUY:
        return (1, 0, S) if S else (L + 1, 0, 0)
    if action == SELL:
        return (0, 1, L) if L else (0, S + 1, 0)
    return L, S, 0


def episode_pnl(trades: Iterable[TradeRecord]) -> float:
    return float(sum(tr.long_term_pnl for tr in trades))


class TradingEnv:
    """Gym-style environment over precomputed market features.

    ``step`` returns a :class:`StepResult`; every step is also appended to
    :attr:`log` as a :class:`StepRecord`.
    """

    def __init__(self, market: MarketFeatures, config: EnvConfig = EnvConfig()):
        self.market = market
        self.config = config
        self._prices = np.asarray(market.closes, dtype=float)
        self.state: EnvState | None = None
        self.log: list[StepRecord] = []
        self.trades: list[TradeRecord] = []
        self.forced_close: TradeRecord | None = None
        self.done = False

    @classmethod
    def from_series(cls, series: PriceSeries, config: EnvConfig = EnvConfig(),
                    feature_config: FeatureConfig = FeatureConfig()) -> "TradingEnv":
        return cls(prepare_market(series, feature_config), config)

    def __len__(self) -> int:
        return len(self._prices)

    def price(self, t: int) -> float:
        return float(self._prices[t])

    @property
    def open_episode(self) -> tuple[float, float]:
        """Running ``(pnl, log_return)`` of the currently open trade."""
        return self._acc, self._acc_log

    def observe(self, t: int, position: PositionState) -> EnvState:
        return EnvState(position, self.market.window(t), t)

    def reset(self) -> EnvState:
        t0 = self.market.first_decision_index
        if t0 + self.config.step_span > len(self) - 1:
            raise InsufficientDataError(
                f"{len(self)} bars leave no decision step after warm-up "
                f"(first decision at {t0}, step span {self.config.step_span})"
            )
        self.state = self.observe(t0, PositionState())
        self.log = []
        self.trades = []
        self.forced_close = None
        self.done = False
        self._acc = 0.0
        self._acc_log = 0.0
        self._open_t = -1
        return self.state

    def step(self, action: int) -> StepResult:
        if self.state is None:
            raise UsageError("call reset() before step()")
        state = self.state
        t, T = state.t, self.config.step_span
        if self.done or t + T > len(self) - 1:
            self.done = True
            return StepResult(state, 0.0, None, True, HOLD)

        cfg = self.config
        pos = state.position
        executed = clamp_action(pos, action, cfg)
        L, S, closed = apply_action(pos, executed)
        opened = 0 if executed == HOLD else 1
        new_dir = 1 if L else (-1 if S else 0)
        held = L + S
        if cfg.unit_exposure:
            held = min(held, 1)
        charged = opened + (closed if cfg.charge_closing_leg else 0)

        p0, p1 = self._prices[t], self._prices[t + T]
        reward = float(new_dir * (p1 - p0) * held - cfg.commission * charged)
        log_reward = float(new_dir * held * (math.log(p1) - math.log(p0)) - cfg.commission * charged / p0)

        closed_trade = None
        if pos.direction != new_dir:
            if pos.direction != 0:
                closed_trade = TradeRecord(
                    "long" if pos.direction > 0 else "short", self._open_t, t,
                    self._acc, pos.contracts, self._acc_log,
                )
                self.trades.append(closed_trade)
            self._acc, self._acc_log, self._open_t = 0.0, 0.0, t
        if new_dir != 0:
            self._acc += reward
            self._acc_log += log_reward

        t_next = t + T
        done = t_next + T > len(self) - 1
        forced = None
        if done and new_dir != 0:
            forced = TradeRecord("long" if new_dir > 0 else "short", self._open_t, t_next,
                                 self._acc, L + S, self._acc_log, forced=True)
            self.forced_close = forced

        next_state = self.observe(t_next, PositionState(L, S, reward))
        self.log.append(StepRecord(
            t=t, action=int(action), executed=int(executed), L=L, S=S, price=float(p0),
            immediate_reward=reward, accumulated_episode_pnl=self._acc if new_dir else 0.0,
            closed_trade=closed_trade.to_dict() if closed_trade else None,
            forced_close=forced.to_dict() if forced else None,
        ))
        self.state = next_state
        self.done = done
        return StepResult(next_state, reward, closed_trade, done, executed, log_reward, forced)


    def force_close(self) -> TradeRecord | None:
        """Close any open position at the current decision time, for reporting only.

        Used when a run stops before the data end; a no-op if already recorded.
        """
        if self.state is None or self.forced_close is not None:
            return self.forced_close
        pos = self.state.position
        if pos.direction == 0:
            return None
        self.forced_close = TradeRecord("long" if pos.direction > 0 else "short", self._open_t,
                                        self.state.t, self._acc, pos.contracts, self._acc_log,
                                        forced=True)
        if self.log:
            self.log[-1] = replace(self.log[-1], forced_close=self.forced_close.to_dict())
        return self.forced_close

def write_step_log(path, records: Sequence[StepRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(rec.to_json())
            fh.write("\n")


def read_step_log(path) -> list[StepRecord]:
    with open(path, encoding="utf-8") as fh:
        return [StepRecord.from_dict(json.loads(line)) for line in fh if line.strip()]


def trades_from_log(records: Iterable[StepRecord]) -> list[TradeRecord]:
    return [TradeRecord.from_dict(r.closed_trade) for r in records if r.closed_trade]


def forced_from_log(records: Sequence[StepRecord]) -> TradeRecord | None:
    for r in reversed(records):
        if r.forced_close:
            return TradeRecord.from_dict(r.forced_close)
    return None

