"""Online Q-learning controller.

Per decision step: pick an action epsilon-greedily, step the environment,
store the transition, and once the memory is full replay *all* of it in
insertion order (one Adam step per transition) and clear it. The target
network tracks the online one by a soft update after every step.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Iterator

import numpy as np

from .env import N_ACTIONS, Action, EnvState, PositionState, StepRecord, TradeRecord, TradingEnv
from .errors import DomainError
from .qnet import (
    AdamState, NetDims, NetworkParams, adam_step, backward, forward, forward_cached,
    init_params, soft_update,
)

log = logging.getLogger(__name__)

REWARD_MODES = ("arithmetic", "log")
CREDIT_MODES = ("close", "open", "none")


@dataclass(frozen=True)
class HyperParams:
    gamma: float = 0.8
    lr: float = 0.001
    epsilon: float = 1.0
    epsilon_decay: float = 0.995
    epsilon_min: float = 0.01
    tau: float = 0.001
    train_interval: int = 1
    memory_capacity: int = 480
    reward_mode: str = "arithmetic"
    credit: str = "open"
    head: str = "linear"
    checkpoint_every: int = 0  # replay cycles between checkpoints; 0 disables

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise DomainError("gamma must lie in [0, 1]")
        if not 0.0 < self.epsilon_decay < 1.0:
            raise DomainError("epsilon_decay must lie in (0, 1)")
        if self.epsilon_min <= 0.0:
            raise DomainError("epsilon_min must be > 0")
        if not 0.0 <= self.epsilon <= 1.0:
            raise DomainError("epsilon must lie in [0, 1]")
        if self.memory_capacity < 1:
            raise DomainError("memory_capacity must be >= 1")
        if not 0.0 <= self.tau <= 1.0:
            raise DomainError("tau must lie in [0, 1]")
        if self.reward_mode not in REWARD_MODES:
            raise DomainError(f"reward_mode must be one of {REWARD_MODES}")
        if self.credit not in CREDIT_MODES:
            raise DomainError(f"credit must be one of {CREDIT_MODES}")


@dataclass(frozen=True)
class EpsilonSchedule:
    """Exploration rate after ``n_explore`` exploration events.

    The value is recomputed as ``max(minimum, start * decay**n)`` rather
    than multiplied step by step, so it carries no accumulated rounding.
    """

    start: float = 1.0
    decay: float = 0.995
    minimum: float = 0.01
    n_explore: int = 0

    @property
    def value(self) -> float:
        return max(self.minimum, self.start * self.decay ** self.n_explore)

    def explored(self) -> "EpsilonSchedule":
        return replace(self, n_explore=self.n_explore + 1)

    @classmethod
    def from_hyper(cls, hp: HyperParams) -> "EpsilonSchedule":
        return cls(hp.epsilon, hp.epsilon_decay, hp.epsilon_min)


class PnLScaler:
    """Expanding max-|PnL| used to bring the PnL entry of the position near [-1, 1]."""

    def __init__(self):
        self.max_abs = 0.0

    def update(self, pnl: float) -> None:
        self.max_abs = max(self.max_abs, abs(float(pnl)))

    @property
    def factor(self) -> float:
        return self.max_abs if self.max_abs > 0 else 1.0


def encode_position(position: PositionState, max_contracts: int, pnl_scale: float = 1.0) -> np.ndarray:
    return np.array([position.long / max_contracts, position.short / max_contracts,
                     position.pnl / pnl_scale])


@dataclass(frozen=True)
class Transition:
    state: EnvState
    action: int
    reward: float
    next_state: EnvState
    terminal: bool
    pos_in: np.ndarray = field(repr=False)
    next_pos_in: np.ndarray = field(repr=False)

    @property
    def market(self) -> np.ndarray:
        return self.state.market.rows

    @property
    def next_market(self) -> np.ndarray:
        return self.next_state.market.rows


class ReplayMemory:
    """Insertion-ordered transition buffer that is emptied, never evicted."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise DomainError("capacity must be >= 1")
        self.capacity = capacity
        self._items: list[Transition] = []

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self) -> Iterator[Transition]:
        return iter(self._items)

    @property
    def full(self) -> bool:
        return len(self._items) >= self.capacity

    def append(self, tr: Transition) -> None:
        if self.full:
            raise OverflowError("replay memory is full; replay it before adding more")
        self._items.append(tr)

    def clear(self) -> None:
        self._items.clear()

    def add_reward(self, index: int, amount: float) -> None:
        tr = self._items[index]
        self._items[index] = replace(tr, reward=tr.reward + float(amount))


def remember(memory: ReplayMemory, transition: Transition) -> ReplayMemory:
    memory.append(transition)
    return memory


def greedy_action(q: np.ndarray) -> int:
    """Index of the largest Q-value; ties go to the lowest action code."""
    return int(np.argmax(q))


def select_action(params: NetworkParams, market, position_in, schedule: EpsilonSchedule,
                  rng, head: str = "linear") -> tuple[Action, EpsilonSchedule]:
    if rng.random() < schedule.value:
        return Action(int(rng.integers(N_ACTIONS))), schedule.explored()
    return Action(greedy_action(forward(params, market, position_in, head))), schedule


def compute_target(online: NetworkParams, target: NetworkParams, tr: Transition,
                   gamma: float, head: str = "linear") -> float:
    """``r + gamma * Q_target(s', argmax_a Q_online(s', a))``; just ``r`` when terminal."""
    if tr.terminal or gamma == 0.0:
        return float(tr.reward)
    a_star = greedy_action(forward(online, tr.next_market, tr.next_pos_in, head))
    q_next = forward(target, tr.next_market, tr.next_pos_in, head)[a_star]
    return float(tr.reward + gamma * q_next)


def fit_transition(online: NetworkParams, target: NetworkParams, adam: AdamState,
                   tr: Transition, hp: HyperParams) -> tuple[NetworkParams, AdamState, float]:
    """One Adam step on ``(y - Q(s, a))**2``; only the taken action's output gets gradient."""
    y = compute_target(online, target, tr, hp.gamma, hp.head)
    q, cache = forward_cached(online, tr.market, tr.pos_in, hp.head)
    resid = y - q[tr.action]
    dq = np.zeros_like(q)
    dq[tr.action] = -2.0 * resid
    online, adam = adam_step(online, backward(online, cache, dq), adam, hp.lr)
    return online, adam, float(resid * resid)


def replay_fit(online: NetworkParams, target: NetworkParams, memory: ReplayMemory,
               adam: AdamState, hp: HyperParams) -> tuple[NetworkParams, AdamState]:
    """Fit on every stored transition in order, then empty the memory."""
    for tr in memory:
        online, adam, _ = fit_transition(online, target, adam, tr, hp)
    memory.clear()
    return online, adam


@dataclass
class OnlineResult:
    step_log: list[StepRecord]
    trades: list[TradeRecord]
    forced_close: TradeRecord | None
    checkpoints: list[tuple[int, NetworkParams]]
    actions: list[int]
    replay_cycles: int
    schedule: EpsilonSchedule


class Agent:
    """Online and target networks plus everything the learning loop mutates."""

    def __init__(self, hp: HyperParams = HyperParams(), dims: NetDims = NetDims(),
                 seed: int = 0, max_contracts: int = 5, params: NetworkParams | None = None,
                 rng=None):
        self.hp = hp
        self.max_contracts = max_contracts
        self.online = params.copy() if params is not None else init_params(dims, seed)
        self.target = self.online.copy()
        self.adam = AdamState.zeros_like(self.online)
        self.schedule = EpsilonSchedule.from_hyper(hp)
        self.memory = ReplayMemory(hp.memory_capacity)
        self.scaler = PnLScaler()
        self.rng = rng if rng is not None else np.random.default_rng(seed)
        self.replay_cycles = 0

    def position_input(self, position: PositionState) -> np.ndarray:
        return encode_position(position, self.max_contracts, self.scaler.factor)

    def act(self, state: EnvState) -> Action:
        action, self.schedule = select_action(
            self.online, state.market.rows, self.position_input(state.position),
            self.schedule, self.rng, self.hp.head)
        return action

    def replay(self) -> None:
        self.online, self.adam = replay_fit(self.online, self.target, self.memory, self.adam, self.hp)
        self.replay_cycles += 1


def _learner_reward(result, hp: HyperParams) -> float:
    r = result.log_reward if hp.reward_mode == "log" else result.immediate_reward
    if hp.credit == "close" and result.closed_trade is not None:
        r += _trade_credit(result.closed_trade, hp)
    return float(r)


def _trade_credit(trade: TradeRecord, hp: HyperParams) -> float:
    return trade.long_term_log_return if hp.reward_mode == "log" else trade.long_term_pnl


def online_learn(env: TradingEnv, agent: Agent, total_steps: int | None = None,
                 on_checkpoint: Callable[[int, NetworkParams], None] | None = None) -> OnlineResult:
    """Run the online loop from ``env.reset()`` until data or ``total_steps`` run out.

    Long-term trade PnL is added to a stored reward according to
    ``hp.credit``: ``"close"`` credits the transition whose action closed the
    trade; ``"open"`` credits the transition that opened it, using the running
    total if the trade is still open when memory is replayed; ``"none"``
    stores immediate rewards only. Leftover transitions get a final replay.
    """
    state = env.reset()
    hp = agent.hp
    checkpoints: list[tuple[int, NetworkParams]] = []
    actions: list[int] = []
    open_idx: int | None = None
    steps = 0

    def credit_open_partial():
        if hp.credit == "open" and open_idx is not None:
            pnl, logret = env.open_episode
            agent.memory.add_reward(open_idx, logret if hp.reward_mode == "log" else pnl)

    while total_steps is None or steps < total_steps:
        pos_in = agent.position_input(state.position)
        action = agent.act(state)
        res = env.step(action)
        if res.done and res.next_state is state:
            break
        actions.append(int(action))
        steps += 1
        agent.scaler.update(res.next_state.position.pnl)
        tr = Transition(state, int(action), _learner_reward(res, hp), res.next_state, res.done,
                        pos_in, agent.position_input(res.next_state.position))
        if hp.credit == "open" and res.closed_trade is not None and open_idx is not None:
            agent.memory.add_reward(open_idx, _trade_credit(res.closed_trade, hp))
            open_idx = None
        agent.memory.append(tr)
        new_dir = res.next_state.position.direction
        if new_dir != state.position.direction:
            open_idx = len(agent.memory) - 1 if new_dir else None
        if agent.memory.full:
            credit_open_partial()
            open_idx = None
            agent.replay()
            if hp.checkpoint_every and agent.replay_cycles % hp.checkpoint_every == 0:
                snap = agent.online.copy()
                checkpoints.append((agent.replay_cycles, snap))
                if on_checkpoint:
                    on_checkpoint(agent.replay_cycles, snap)
        agent.target = soft_update(agent.target, agent.online, hp.tau)
        state = res.next_state
        if res.done:
            break
    if steps and len(agent.memory):
        credit_open_partial()
        agent.replay()
    env.force_close()
    log.debug("online_learn: %d steps, %d replay cycles, epsilon %.4f",
              steps, agent.replay_cycles, agent.schedule.value)
    return OnlineResult(list(env.log), list(env.trades), env.forced_close, checkpoints,
                        actions, agent.replay_cycles, agent.schedule)


def run_policy(env: TradingEnv, policy: Callable[[EnvState], int],
               total_steps: int | None = None) -> OnlineResult:
    """Drive the environment with a fixed policy (scripted or random); no learning."""
    state = env.reset()
    actions = []
    while total_steps is None or len(actions) < total_steps:
        a = int(policy(state))
        res = env.step(a)
        if res.done and res.next_state is state:
            break
        actions.append(a)
        state = res.next_state
        if res.done:
            break
    env.force_close()
    return OnlineResult(list(env.log), list(env.trades), env.forced_close, [], actions, 0,
                        EpsilonSchedule())
