"""Backtest metrics (Sharpe, Win Ratio, Maximum Drawdown) and report files."""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Sequence

import numpy as np

from .env import StepRecord, TradeRecord
from .errors import DomainError, UndefinedMetricError

PERIODS_PER_YEAR = 252
BASE_CAPITAL = 10_000.0

REFERENCE_BANNER = (
    "NOTE: previously published figures for this method (e.g. Crude Oil: Sharpe 4.09, "
    "Win Ratio 67.88%, MDD -7.33%) are reference points, not targets; the data windows "
    "and exact hyperparameters behind them are not available."
)


def equity_curve(step_log: Iterable[StepRecord | float]) -> np.ndarray:
    """Running sum of immediate rewards (the implicit starting equity 0 is not included)."""
    rewards = [r.immediate_reward if isinstance(r, StepRecord) else float(r) for r in step_log]
    return np.cumsum(np.asarray(rewards, dtype=float))


def period_changes(curve) -> np.ndarray:
    c = np.asarray(curve, dtype=float)
    return np.diff(np.r_[0.0, c])


def sharpe_annualized(curve, periods_per_year: int = PERIODS_PER_YEAR) -> float:
    """Mean over sample std of per-period PnL changes, times sqrt(periods_per_year).

    Risk-free rate is 0. Raises :class:`UndefinedMetricError` for a
    zero-variance stream instead of returning inf.
    """
    ch = period_changes(curve)
    if len(ch) < 2:
        raise UndefinedMetricError("Sharpe needs at least 2 periods")
    mean = ch.mean()
    sd = ch.std(ddof=1)
    # cumsum/diff round-off can leave a constant stream with a ~1e-17 spread
    if sd <= 1e-12 * max(np.abs(ch).max(), 1e-300):
        raise UndefinedMetricError("Sharpe undefined: per-period changes have zero variance")
    return float(mean / sd * math.sqrt(periods_per_year))


def win_ratio(trades: Sequence[TradeRecord | float]) -> float:
    """Percentage of trades with strictly positive long-term PnL."""
    pnl = [t.long_term_pnl if isinstance(t, TradeRecord) else float(t) for t in trades]
    if not pnl:
        raise UndefinedMetricError("no trades")
    return 100.0 * sum(p > 0 for p in pnl) / len(pnl)


def max_drawdown(curve, base_capital: float = BASE_CAPITAL) -> float:
    """Largest peak-to-trough fall of ``base_capital + curve`` as a non-positive percentage.

    The equity path starts at ``base_capital`` before the first entry.
    """
    if base_capital <= 0:
        raise DomainError("base_capital must be > 0")
    c = np.r_[0.0, np.asarray(curve, dtype=float)]
    peak = np.maximum.accumulate(c)
    dd = (peak - c) / (base_capital + peak)
    return float(-100.0 * dd.max()) if dd.max() > 0 else 0.0


@dataclass(frozen=True)
class BacktestReport:
    instrument: str
    period_start: str
    period_end: str
    sharpe: float | None
    win_ratio_pct: float | None
    mdd_pct: float
    n_trades: int
    total_pnl: float
    base_capital: float = BASE_CAPITAL
    seed: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "BacktestReport":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def table_row(self) -> str:
        sharpe = "n/a" if self.sharpe is None else f"{self.sharpe:.2f}"
        wr = "n/a" if self.win_ratio_pct is None else f"{self.win_ratio_pct:.2f}%"
        return f"{self.instrument} | {sharpe} | {wr} | {self.mdd_pct:.2f}%"


def build_report(step_log: Sequence[StepRecord], trades: Sequence[TradeRecord], *,
                 instrument: str, period_start: str, period_end: str,
                 base_capital: float = BASE_CAPITAL, seed: int | None = None,
                 periods_per_year: int = PERIODS_PER_YEAR) -> BacktestReport:
    curve = equity_curve(step_log)
    try:
        sharpe = sharpe_annualized(curve, periods_per_year)
    except UndefinedMetricError:
        sharpe = None
    try:
        wr = win_ratio(trades)
    except UndefinedMetricError:
        wr = None
    return BacktestReport(
        instrument=instrument, period_start=period_start, period_end=period_end,
        sharpe=sharpe, win_ratio_pct=wr,
        mdd_pct=max_drawdown(curve, base_capital) if len(curve) else 0.0,
        n_trades=len(trades), total_pnl=float(curve[-1]) if len(curve) else 0.0,
        base_capital=float(base_capital), seed=seed,
    )


TRADE_COLUMNS = ("direction", "open_t", "close_t", "contracts", "long_term_pnl")


def write_trades_csv(path, trades: Sequence[TradeRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(TRADE_COLUMNS)
        for t in trades:
            w.writerow([t.direction, t.open_t, t.close_t, t.contracts, repr(float(t.long_term_pnl))])


def read_trades_csv(path) -> list[TradeRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [TradeRecord(r["direction"], int(r["open_t"]), int(r["close_t"]),
                            float(r["long_term_pnl"]), int(r["contracts"]))
                for r in csv.DictReader(fh)]


def emit_report(out_dir, report: BacktestReport, step_log: Sequence[StepRecord],
                trades: Sequence[TradeRecord]) -> dict[str, str]:
    """Write ``report.json``, ``trades.csv`` and ``plotdata.csv`` into ``out_dir``."""
    paths = {name: os.path.join(out_dir, name) for name in ("report.json", "trades.csv", "plotdata.csv")}
    try:
        os.makedirs(out_dir, exist_ok=True)
        with open(paths["report.json"], "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2)
        write_trades_csv(paths["trades.csv"], trades)
        curve = equity_curve(step_log)
        with open(paths["plotdata.csv"], "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "price", "equity"])
            for rec, eq in zip(step_log, curve):
                w.writerow([rec.t, repr(float(rec.price)), repr(float(eq))])
    except OSError as exc:
        raise OSError(f"failed writing report files under {out_dir}: {exc}") from exc
    return paths


def load_report(path) -> BacktestReport:
    with open(path, encoding="utf-8") as fh:
        return BacktestReport.from_dict(json.load(fh))
