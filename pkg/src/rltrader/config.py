"""Run configuration: defaults < JSON config file < command-line overrides."""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields, replace

from .agent import HyperParams
from .env import EnvConfig
from .errors import DomainError
from .features import FeatureConfig
from .qnet import NetDims


class ConfigError(DomainError):
    """Bad or inconsistent run configuration (CLI exit code 2)."""


@dataclass(frozen=True)
class RunConfig:
    data_path: str | None = None
    instrument: str = "instrument"
    # market data
    bar_duration: int = 86_400
    window: int = 30
    macd_fast: int = 12
    macd_slow: int = 26
    rsi_period: int = 14
    williams_period: int = 14
    # environment
    max_contracts: int = 5
    commission: float = 2.0
    charge_closing_leg: bool = False
    unit_exposure: bool = False
    # learner
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
    checkpoint_every: int = 5
    # network
    lstm1: int = 32
    lstm2: int = 16
    pos_hidden: int = 8
    merge1: int = 32
    merge2: int = 16
    # run / report
    seed: int = 0
    out: str = "runs"
    total_steps: int | None = None
    base_capital: float = 10_000.0
    periods_per_year: int = 252
    scripted_actions: tuple[int, ...] | None = None

    def feature_config(self) -> FeatureConfig:
        return FeatureConfig(self.bar_duration, self.window, self.macd_fast, self.macd_slow,
                             self.rsi_period, self.williams_period)

    def env_config(self) -> EnvConfig:
        return EnvConfig(self.max_contracts, self.commission, self.train_interval,
                         self.charge_closing_leg, self.unit_exposure)

    def hyper(self) -> HyperParams:
        return HyperParams(self.gamma, self.lr, self.epsilon, self.epsilon_decay, self.epsilon_min,
                           self.tau, self.train_interval, self.memory_capacity, self.reward_mode,
                           self.credit, self.head, self.checkpoint_every)

    def dims(self) -> NetDims:
        return NetDims(lstm1=self.lstm1, lstm2=self.lstm2, pos_hidden=self.pos_hidden,
                       merge1=self.merge1, merge2=self.merge2)

    def validate(self) -> "RunConfig":
        try:
            self.feature_config(), self.env_config(), self.hyper(), self.dims()
        except DomainError as exc:
            raise ConfigError(str(exc)) from None
        if self.scripted_actions is not None and any(a not in (0, 1, 2) for a in self.scripted_actions):
            raise ConfigError("scripted_actions must contain only 0, 1, 2")
        return self

    def require_data(self) -> str:
        if not self.data_path:
            raise ConfigError("no data_path given (config file or --data)")
        if not os.path.isfile(self.data_path):
            raise ConfigError(f"data file not found: {self.data_path}")
        return self.data_path

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["scripted_actions"] is not None:
            d["scripted_actions"] = list(d["scripted_actions"])
        return d


FIELD_NAMES = {f.name for f in fields(RunConfig)}


def _coerce(cfg: dict) -> dict:
    unknown = set(cfg) - FIELD_NAMES
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    out = dict(cfg)
    if out.get("scripted_actions") is not None:
        out["scripted_actions"] = tuple(int(a) for a in out["scripted_actions"])
    return out


def load_config_file(path) -> dict:
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    base = os.path.dirname(os.path.abspath(path))
    dp = doc.get("data_path")
    if dp and not os.path.isabs(dp):
        doc["data_path"] = os.path.join(base, dp)
    return doc


def make_config(file_values: dict | None = None, overrides: dict | None = None) -> RunConfig:
    cfg = RunConfig()
    try:
        if file_values:
            cfg = replace(cfg, **_coerce(file_values))
        if overrides:
            cfg = replace(cfg, **_coerce({k: v for k, v in overrides.items() if v is not None}))
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return cfg.validate()


def parse_set_option(text: str) -> tuple[str, object]:
    """``key=value`` with value parsed as JSON when possible, else kept as a string."""
    if "=" not in text:
        raise ConfigError(f"--set expects key=value, got {text!r}")
    key, raw = text.split("=", 1)
    key = key.strip()
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value
