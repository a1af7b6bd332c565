"""Command-line entry point: ``rltrader {features,run,gradcheck,report}``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import __version__
from .agent import Agent, online_learn, run_policy
from .backtest import REFERENCE_BANNER, build_report, emit_report, win_ratio
from .config import ConfigError, RunConfig, load_config_file, make_config, parse_set_option
from .data import format_timestamp, load_price_series
from .env import TradingEnv, forced_from_log, read_step_log, trades_from_log, write_step_log
from .errors import RLTraderError, UndefinedMetricError
from .features import prepare_market, write_feature_csv
from .gradcheck import SMALL_DIMS, run_suite
from .qnet import save_params

log = logging.getLogger("rltrader")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
GRAD_TOL = 1e-4


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def cmd_features(cfg: RunConfig, output: str | None = None) -> tuple[str, int]:
    path = cfg.require_data()
    market = prepare_market(load_price_series(path), cfg.feature_config())
    if output is None:
        os.makedirs(cfg.out, exist_ok=True)
        output = os.path.join(cfg.out, f"{cfg.instrument}_features.csv")
    n = write_feature_csv(output, market)
    return output, n


def _run_dir(cfg: RunConfig) -> str:
    stamp = time.strftime("%Y%m%dT%H%M%S", time.gmtime())
    base = os.path.join(cfg.out, f"{cfg.instrument}-{stamp}-seed{cfg.seed}")
    path, k = base, 1
    while os.path.exists(path):
        path, k = f"{base}-{k}", k + 1
    os.makedirs(path)
    return path


def cmd_run(cfg: RunConfig) -> str:
    """Train online (or replay scripted actions), then write logs, checkpoints and the report."""
    data_path = cfg.require_data()
    series = load_price_series(data_path)
    market = prepare_market(series, cfg.feature_config())
    env = TradingEnv(market, cfg.env_config())
    run_dir = _run_dir(cfg)
    manifest = {
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "data_sha256": file_sha256(data_path),
        "code_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "started_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    with open(os.path.join(run_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
    try:
        if cfg.scripted_actions is not None:
            script = list(cfg.scripted_actions)
            it = iter(script)
            result = run_policy(env, lambda _s: next(it), total_steps=len(script))
            final_params = None
        else:
            ckpt_dir = os.path.join(run_dir, "checkpoints")
            os.makedirs(ckpt_dir, exist_ok=True)

            def on_ckpt(cycle, params):
                save_params(os.path.join(ckpt_dir, f"cycle_{cycle:05d}.npz"), params)

            agent = Agent(cfg.hyper(), cfg.dims(), seed=cfg.seed, max_contracts=cfg.max_contracts)
            result = online_learn(env, agent, cfg.total_steps, on_checkpoint=on_ckpt)
            final_params = agent.online
        write_step_log(os.path.join(run_dir, "steps.jsonl"), result.step_log)
        if final_params is not None:
            save_params(os.path.join(run_dir, "params_final.npz"), final_params)
        report = build_report(
            result.step_log, result.trades, instrument=cfg.instrument,
            period_start=format_timestamp(int(market.bars.start[result.step_log[0].t])) if result.step_log else "",
            period_end=format_timestamp(int(market.bars.start[result.step_log[-1].t])) if result.step_log else "",
            base_capital=cfg.base_capital, seed=cfg.seed, periods_per_year=cfg.periods_per_year,
        )
        emit_report(run_dir, report, result.step_log, result.trades)
    except Exception as exc:
        with open(os.path.join(run_dir, "FAILED"), "w", encoding="utf-8") as fh:
            fh.write(f"{type(exc).__name__}: {exc}\n")
        raise
    return run_dir


def recompute_report(run_dir: str):
    """Rebuild the report from ``steps.jsonl`` and ``manifest.json`` only."""
    steps_path = os.path.join(run_dir, "steps.jsonl")
    manifest_path = os.path.join(run_dir, "manifest.json")
    for p in (steps_path, manifest_path):
        if not os.path.isfile(p):
            raise FileNotFoundError(f"missing run log: {p}")
    with open(manifest_path, encoding="utf-8") as fh:
        cfg = json.load(fh)["config"]
    records = read_step_log(steps_path)
    trades = trades_from_log(records)
    report = build_report(
        records, trades, instrument=cfg["instrument"],
        period_start=_read_period(run_dir, "period_start"),
        period_end=_read_period(run_dir, "period_end"),
        base_capital=cfg["base_capital"], seed=cfg["seed"], periods_per_year=cfg["periods_per_year"],
    )
    return report, records, trades


def _read_period(run_dir: str, key: str) -> str:
    p = os.path.join(run_dir, "report.json")
    if os.path.isfile(p):
        with open(p, encoding="utf-8") as fh:
            return json.load(fh).get(key, "")
    return ""


def cmd_report(run_dir: str, out=sys.stdout):
    report, records, trades = recompute_report(run_dir)
    win_ratio(trades)  # raises "no trades"
    forced = forced_from_log(records)
    print(REFERENCE_BANNER, file=out)
    print("Instrument Name | Sharpe | Win Ratio | MDD", file=out)
    print(report.table_row(), file=out)
    extra = f"trades={report.n_trades} total_pnl={report.total_pnl:.6g} base_capital={report.base_capital:g}"
    if forced is not None:
        extra += f" open_at_end={forced.long_term_pnl:.6g}"
    print(extra, file=out)
    return report


def cmd_gradcheck(seeds: int = 10, windows=(1, 3, 8), corrupt: bool = False, out=sys.stdout) -> bool:
    results = run_suite(range(seeds), windows, SMALL_DIMS, corrupt=corrupt)
    worst = max(r.max_rel_error for r in results)
    for r in results:
        print(f"seed={r.seed} W={r.window} head={r.head} params={r.n_params} "
              f"max_rel_err={r.max_rel_error:.3e}", file=out)
    ok = worst <= GRAD_TOL
    print(f"{'PASS' if ok else 'FAIL'}: max relative error {worst:.3e} (tolerance {GRAD_TOL:g}) "
          f"over {len(results)} configurations", file=out)
    return ok


def _run_one(cfg_dict: dict) -> str:
    return cmd_run(make_config(cfg_dict))


def _global_flags(p: argparse.ArgumentParser, suppress: bool):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, help="JSON config file")
    p.add_argument("--seed", type=int, default=d, help="random seed")
    p.add_argument("--out", default=d, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rltrader", description=__doc__.splitlines()[0])
    _global_flags(parser, suppress=False)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        sp = sub.add_parser(name, help=help_)
        _global_flags(sp, suppress=True)
        return sp

    p = add("features", "write the scaled feature CSV")
    p.add_argument("--data", help="price CSV (timestamp,price)")
    p.add_argument("--output", help="feature CSV path")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")

    p = add("run", "online training + backtest into a new run directory")
    p.add_argument("--data", help="price CSV (timestamp,price)")
    p.add_argument("--instrument")
    p.add_argument("--total-steps", type=int)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config field, value parsed as JSON")
    p.add_argument("--instruments", nargs="+", metavar="NAME=CSV",
                   help="run several instruments with the same settings")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for --instruments")

    p = add("gradcheck", "finite-difference check of network gradients")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--windows", default="1,3,8")
    p.add_argument("--corrupt-gradient", action="store_true", help=argparse.SUPPRESS)

    p = add("report", "recompute and print metrics for a run directory")
    p.add_argument("run_dir")
    return parser


def _config_from_args(args) -> RunConfig:
    file_values = load_config_file(args.config) if getattr(args, "config", None) else {}
    overrides = dict(parse_set_option(s) for s in getattr(args, "set", []) or [])
    for key, attr in (("data_path", "data"), ("instrument", "instrument"),
                      ("total_steps", "total_steps"), ("seed", "seed"), ("out", "out")):
        v = getattr(args, attr, None)
        if v is not None:
            overrides[key] = v
    return make_config(file_values, overrides)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "gradcheck":
            windows = tuple(int(w) for w in args.windows.split(","))
            return EXIT_OK if cmd_gradcheck(args.seeds, windows, args.corrupt_gradient) else EXIT_FAIL
        if args.command == "report":
            cmd_report(args.run_dir)
            return EXIT_OK
        cfg = _config_from_args(args)
        if args.command == "features":
            path, n = cmd_features(cfg, args.output)
            print(f"wrote {n} feature rows to {path}")
            return EXIT_OK
        if args.instruments:
            jobs = []
            for item in args.instruments:
                name, _, path = item.partition("=")
                if not path:
                    raise ConfigError(f"--instruments expects NAME=CSV, got {item!r}")
                c = replace(cfg, instrument=name, data_path=path)
                c.require_data()
                jobs.append(c.to_dict())
            with ProcessPoolExecutor(max_workers=max(1, args.jobs)) as pool:
                for d in pool.map(_run_one, jobs):
                    print(d)
            return EXIT_OK
        run_dir = cmd_run(cfg)
        print(run_dir)
        return EXIT_OK
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RLTraderError, OSError, UndefinedMetricError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
