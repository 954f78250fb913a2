"""File artifacts for runs: report.json and CSVs for backtests, draws/summary for bootstraps.

Number formats are fixed so identical runs write byte-identical files:
values carry 6 fractional digits, fees 2, returns the shortest round-trip repr.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
from dataclasses import asdict
from decimal import Decimal
from pathlib import Path
from typing import Sequence

from .backtest import BacktestReport
from .bootstrap import BootstrapConfig, BootstrapDraw, BootstrapSummary
from .errors import DataError


def money(v: float) -> str:
    return f"{v:.6f}"


def fee(v: float) -> str:
    return f"{v:.2f}"


def _dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=1, allow_nan=False) + "\n", encoding="utf-8")


def report_to_dict(report: BacktestReport, metrics: dict | None = None, config: dict | None = None) -> dict:
    ledger = report.fee_ledger
    admin, spread = fee(ledger["admin_total"]), fee(ledger["spread_total"])
    return {
        "config": config or {},
        "transform": report.config.transform.value,
        "bankrupt": report.bankrupt,
        "bankruptcy_date": report.bankruptcy_date.isoformat() if report.bankruptcy_date else None,
        "initial_capital": money(report.initial_capital),
        "final_value": money(report.final_value),
        # total is the exact decimal sum of the two serialized parts
        "fee_ledger": {"admin_total": admin, "spread_total": spread, "total": str(Decimal(admin) + Decimal(spread))},
        "metrics": metrics or {},
        "annual_returns": [[y, r] for y, r in report.annual_returns],
        "monthly_returns": [[m, r] for m, r in report.monthly_returns],
        "daily_values": [[d.isoformat(), money(v)] for d, v in report.daily_values],
        "daily_returns": [[d.isoformat(), float(r)] for d, r in zip(report.dates, report.daily_returns)],
    }


def write_backtest(report: BacktestReport, out_dir: str | Path, metrics=None, config=None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _dump(report_to_dict(report, metrics, config), out / "report.json")
    with open(out / "values.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("date,value\n")
        for d, v in report.daily_values:
            fh.write(f"{d.isoformat()},{money(v)}\n")
    with open(out / "returns.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("date,daily_return\n")
        for d, r in zip(report.dates, report.daily_returns):
            fh.write(f"{d.isoformat()},{float(r)!r}\n")
    with open(out / "fees.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("date,admin,spread\n")
        for d, a, s in zip(report.dates, report.admin_fees, report.spread_fees):
            fh.write(f"{d.isoformat()},{fee(a)},{fee(s)}\n")
    return out


def write_bootstrap(
    draws: Sequence[BootstrapDraw], summary: BootstrapSummary, cfg: BootstrapConfig, out_dir: str | Path
) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "draws.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("iteration,cumulative_return\n")
        for d in draws:
            fh.write(f"{d.iteration},{money(d.cumulative_return)}\n")
    doc = {k: (v if k == "iterations" else money(v)) for k, v in asdict(summary).items()}
    doc["config"] = {
        "n_mode": str(cfg.n_mode),
        "iterations": cfg.iterations,
        "transform": cfg.transform.value,
        "master_seed": cfg.master_seed,
        "initial_scale": money(cfg.initial_scale),
    }
    _dump(doc, out / "summary.json")
    return out


def write_metrics(metrics: dict, out_dir: str | Path, config: dict | None = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _dump({"config": config or {}, "metrics": metrics}, out / "metrics.json")
    return out


def read_returns(path: str | Path) -> tuple[list[dt.date], list[float]]:
    """Read a ``date,daily_return`` CSV as written by :func:`write_backtest`."""
    dates, rets = [], []
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["date", "daily_return"]:
                raise DataError(f"{path}: header must be date,daily_return")
            for n, row in enumerate(reader, start=2):
                try:
                    d, r = dt.date.fromisoformat(row[0]), float(row[1])
                except (ValueError, IndexError):
                    raise DataError(f"{path}: line {n}: bad row {row!r}") from None
                if not r > -1:
                    raise DataError(f"{path}: line {n}: return must be > -1")
                dates.append(d)
                rets.append(r)
    except FileNotFoundError:
        raise DataError(f"{path}: no such file") from None
    if not dates:
        raise DataError(f"{path}: no data rows")
    if any(b <= a for a, b in zip(dates, dates[1:])):
        raise DataError(f"{path}: dates must be strictly increasing")
    return dates, rets
