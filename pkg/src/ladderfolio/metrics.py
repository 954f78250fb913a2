"""Summary statistics over return and value series: CAGR, moments, Sharpe, VaR/cVaR, growth counts."""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError
from .marketdata import MarketHistory

HORIZONS = ("daily", "monthly", "annual")
GROWTH_THRESHOLDS = (0.5, 1.0, 2.0)
# guards ceil(level * n) against binary round-up, e.g. 0.05 * 60 = 3.0000000000000004
_CEIL_EPS = 1e-9


@dataclass(frozen=True)
class ReturnSeries:
    horizon: str
    values: tuple[float, ...]

    def __post_init__(self):
        if self.horizon not in HORIZONS:
            raise ValueError(f"horizon must be one of {HORIZONS}")
        vals = tuple(float(v) for v in self.values)
        if any(not v > -1 for v in vals):
            raise ValueError("every return must be > -1")
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class RiskParams:
    risk_free_rate: float = 0.0175
    var_level: float = 0.05

    def __post_init__(self):
        if not 0 < self.var_level < 1:
            raise ValueError("var_level must lie in (0, 1)")
        if self.risk_free_rate < 0:
            raise ValueError("risk_free_rate must be >= 0")


def _values(s) -> np.ndarray:
    return np.asarray(s.values if isinstance(s, ReturnSeries) else s, dtype=float)


def cagr(initial: float, final: float, years: float) -> float:
    if not initial > 0 or final < 0 or not years > 0:
        raise ValueError("need initial > 0, final >= 0, years > 0")
    return (final / initial) ** (1.0 / years) - 1.0


def mean_sd(s: ReturnSeries | Sequence[float]) -> tuple[float, float]:
    """Arithmetic mean and sample (n-1) standard deviation."""
    x = _values(s)
    if x.size < 2:
        raise ValueError("need at least two returns for a sample standard deviation")
    # shifting by the first value makes a constant series give exactly (c, 0)
    d = x - x[0]
    return float(x[0] + d.mean()), float(d.std(ddof=1))


def sharpe(s: ReturnSeries | Sequence[float], p: RiskParams = RiskParams()) -> float:
    if isinstance(s, ReturnSeries) and s.horizon != "annual":
        raise ValueError("sharpe is defined on annual returns")
    mean, sd = mean_sd(s)
    if sd == 0:
        raise ValueError("sharpe undefined: zero standard deviation")
    return (mean - p.risk_free_rate) / sd


def tail_count(n: int, level: float) -> int:
    """Number of observations in the lower tail, ``ceil(level * n)`` and at least 1."""
    return max(1, math.ceil(level * n - _CEIL_EPS))


def lower_order_statistic(values, level: float) -> float:
    x = np.sort(np.asarray(values, dtype=float))
    if x.size == 0:
        raise ValueError("empty series")
    return float(x[tail_count(x.size, level) - 1])


def var(s: ReturnSeries | Sequence[float], level: float = 0.05, method: str = "lower") -> float:
    """Historical value at risk as a (typically negative) return.

    ``method="lower"`` returns the ``ceil(level*n)``-th smallest observation.
    ``method="linear"`` interpolates between order statistics at position
    ``level*(n-1)``, the default convention of numpy and R.
    """
    x = _values(s)
    if x.size == 0:
        raise ValueError("empty series")
    if method == "lower":
        return lower_order_statistic(x, level)
    if method == "linear":
        return float(np.quantile(x, level, method="linear"))
    raise ValueError(f"unknown method {method!r}")


def cvar(s: ReturnSeries | Sequence[float], level: float = 0.05) -> float:
    """Mean of the ``ceil(level*n)`` smallest returns."""
    x = np.sort(_values(s))
    if x.size == 0:
        raise ValueError("empty series")
    return float(x[: tail_count(x.size, level)].mean())


def growth_counts(
    h: MarketHistory, year: int, thresholds: Iterable[float] = GROWTH_THRESHOLDS
) -> dict[float, int]:
    """Count member securities whose calendar-year price growth reaches each threshold.

    Growth is close-to-close and excludes dividends: from the last trading day
    of ``year - 1`` (or the first trading day of ``year`` when the history
    starts that year) to the last trading day of ``year``. Only securities that
    are members on the final day and have records on both boundary days count.
    """
    cal = h.calendar
    in_year = [i for i, d in enumerate(cal) if d.year == year]
    if not in_year:
        raise DataError(f"year {year} is not covered by the history")
    first, last = in_year[0], in_year[-1]
    start = first - 1 if first > 0 and cal[first - 1].year == year - 1 else first
    ok = h.member[last] & h.present[start] & h.present[last]
    ratio = h.close[last, ok] / h.close[start, ok]
    return {th: int(np.sum(ratio >= 1.0 + th - 1e-12)) for th in thresholds}


def compound_by_period(dates: Sequence[dt.date], daily_returns: Sequence[float], frequency: str):
    """Compound daily returns within calendar months or years."""
    if frequency not in ("monthly", "annual"):
        raise ValueError("frequency must be monthly or annual")
    out: list[tuple[object, float]] = []
    key_of = (lambda d: (d.year, d.month)) if frequency == "monthly" else (lambda d: d.year)
    growth, current = 1.0, None
    for d, r in zip(dates, daily_returns):
        k = key_of(d)
        if current is not None and k != current:
            out.append((current, growth - 1.0))
            growth = 1.0
        current = k
        growth *= 1.0 + r
    if current is not None:
        out.append((current, growth - 1.0))
    return out


def years_between(first: dt.date, last: dt.date) -> float:
    return (last - first).days / 365.25


def summary_metrics(
    daily: Sequence[float],
    monthly: Sequence[float],
    annual: Sequence[float],
    growth: float,
    years: float,
    p: RiskParams = RiskParams(),
) -> dict[str, float | None]:
    """The ``metrics`` object of a run report; entries that are undefined come back as ``None``."""

    def safe(fn, *args):
        try:
            return fn(*args)
        except (ValueError, ZeroDivisionError):
            return None

    out: dict[str, float | None] = {
        "cagr": safe(cagr, 1.0, growth, years),
        "mean_annual": None,
        "sd_annual": None,
        "sharpe": None,
    }
    if len(annual) >= 2:
        out["mean_annual"], out["sd_annual"] = mean_sd(annual)
        out["sharpe"] = safe(sharpe, list(annual), p)
    for name, series in (("annual", annual), ("monthly", monthly), ("daily", daily)):
        out[f"var_{name}"] = safe(var, list(series), p.var_level)
        out[f"cvar_{name}"] = safe(cvar, list(series), p.var_level)
    return out


def report_metrics(report, p: RiskParams = RiskParams()) -> dict[str, float | None]:
    """Metrics of a backtest report, computed on net-of-fee value changes.

    A bankrupt run reports ``cagr = -1`` and leaves every other entry ``None``.
    """
    years = years_between(report.dates[0], report.dates[-1]) if len(report.dates) > 1 else 0.0
    if report.bankrupt:
        keys = summary_metrics([], [], [], 1.0, 1.0, p)
        return {k: (-1.0 if k == "cagr" else None) for k in keys}
    return summary_metrics(
        report.net_daily_returns.tolist(),
        [r for _, r in report.monthly_returns],
        [r for _, r in report.annual_returns],
        report.final_value / report.initial_capital,
        years,
        p,
    )
