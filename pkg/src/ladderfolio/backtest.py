"""Fee-aware periodic-rebalancing backtest of a ladder-weighted portfolio.

Timing conventions (one run is a day-by-day state machine):

* Day ``t`` return: holdings set at the close of ``t-1`` earn the
  dividend-inclusive return of each security; idle cash earns zero. This is the
  cap-weighted index formula with drifted weights ``shares * close_{t-1}``.
* Dividends are credited to cash on the pay date and swept into holdings at
  the next rebalance.
* On the first trading day of each rebalance period, target weights are formed
  from that day's closing market caps and executed at the same close. The new
  weights first earn the next day's return, so the weights behind day ``t``'s
  return always come from day ``t-1`` caps. Fees for the trade come out of the
  portfolio at that close, so the post-trade book is fully invested with zero
  cash.
* A held security that is not a member on the next trading day is sold at its
  last available close (admin fee plus half-spread).
* If fees would consume the whole portfolio the run stops: the final value is
  zero and the report is flagged bankrupt.
"""

from __future__ import annotations

import datetime as dt
import math
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .marketdata import CpiSeries, MarketHistory, deflate
from .weighting import Transform, transform_array

FREQUENCIES = ("daily", "monthly", "quarterly", "annual")

# trades smaller than this fraction of portfolio value count as no trade
TRADE_TOL = 1e-10
_MAX_FEE_ITER = 200


@dataclass(frozen=True)
class FeeSchedule:
    admin_fee_2015: float = 1.0
    spread_rate: float = 0.001

    def __post_init__(self):
        if self.admin_fee_2015 < 0 or self.spread_rate < 0:
            raise ValueError("fees must be nonnegative")
        if self.spread_rate >= 2:
            raise ValueError("spread_rate must be < 2 (half-spread below 100% of traded value)")


ZERO_FEES = FeeSchedule(0.0, 0.0)


@dataclass(frozen=True)
class RebalancePolicy:
    frequency: str = "monthly"
    fee_schedule: FeeSchedule = field(default_factory=FeeSchedule)

    def __post_init__(self):
        if self.frequency not in FREQUENCIES:
            raise ValueError(f"frequency must be one of {FREQUENCIES}, got {self.frequency!r}")


@dataclass(frozen=True)
class BacktestConfig:
    transform: Transform
    policy: RebalancePolicy = field(default_factory=RebalancePolicy)
    start_date: dt.date | None = None
    end_date: dt.date | None = None
    initial_capital: float = 100_000.0

    def __post_init__(self):
        if not self.initial_capital > 0:
            raise ValueError("initial_capital must be > 0")
        if self.start_date and self.end_date and not self.start_date < self.end_date:
            raise ValueError("start_date must precede end_date")


@dataclass
class PortfolioState:
    date: dt.date
    value: float
    holdings: dict[str, float]
    cash: float = 0.0


@dataclass(frozen=True)
class FeeRecord:
    date: dt.date
    admin: float = 0.0
    spread: float = 0.0
    trades: int = 0
    bankrupt: bool = False

    @property
    def total(self) -> float:
        return self.admin + self.spread


def index_return(weights: Mapping[str, float], returns: Mapping[str, float]) -> float:
    """Weighted average ``sum(w*r) / sum(w)``; weights need not be normalized."""
    if set(weights) != set(returns):
        raise ValueError("weight and return supports differ")
    keys = list(weights)
    total = math.fsum(weights[k] for k in keys)
    if total == 0:
        raise ValueError("weights sum to zero")
    return math.fsum(weights[k] * returns[k] for k in keys) / total


def trade_cost(
    delta_shares: float, close: float, date: dt.date, fees: FeeSchedule, cpi: CpiSeries | None
) -> tuple[float, float]:
    """``(admin, spread)`` paid for trading ``delta_shares`` of one security at ``close`` on ``date``."""
    if delta_shares == 0:
        return 0.0, 0.0
    return _admin_fee(fees, date, cpi), abs(delta_shares) * close * fees.spread_rate / 2


def _solve_rebalance(shares, close, cash, target, admin_fee, half_spread):
    """Trade to ``target`` weights paying fees out of the book.

    Finds the post-fee invested value ``x`` with ``x = V - fees(x)`` where
    ``fees(x) = admin_fee * #traded + half_spread * sum|target*x - position|``.
    The map is a contraction (slope <= half_spread < 1) so plain iteration
    converges. Returns ``(shares, cash, admin, spread, n_trades, bankrupt)``.
    """
    pos = np.where(shares > 0, shares * np.nan_to_num(close), 0.0)
    V = pos.sum() + cash
    tol = TRADE_TOL * max(V, 0.0)
    x = V
    for _ in range(_MAX_FEE_ITER):
        diff = np.abs(target * x - pos)
        traded = diff > tol
        a_fee = admin_fee * int(traded.sum())
        s_fee = half_spread * diff[traded].sum()
        x_new = V - a_fee - s_fee
        done = abs(x_new - x) <= 1e-15 * max(V, 1.0)
        x = x_new
        if done:
            break
    if x <= 0:
        owed = admin_fee * int(((target > 0) | (pos > 0)).sum())
        a = min(owed, max(V, 0.0))
        return np.zeros_like(shares), 0.0, a, max(V, 0.0) - a, int(((target > 0) | (pos > 0)).sum()), True
    n_trades = int(traded.sum())
    if n_trades == 0:
        return shares.copy(), cash, 0.0, 0.0, 0, False
    new_shares = np.zeros_like(shares)
    buy = target > 0
    new_shares[buy] = target[buy] * x / close[buy]
    new_cash = V - a_fee - s_fee - float((new_shares[buy] * close[buy]).sum())
    return new_shares, new_cash, a_fee, s_fee, n_trades, False


def _admin_fee(fees: FeeSchedule, date: dt.date, cpi: CpiSeries | None) -> float:
    if fees.admin_fee_2015 == 0:
        return 0.0
    if cpi is None:
        raise ValueError("a CPI series is required when the admin fee is nonzero")
    return deflate(fees.admin_fee_2015, date, cpi)


def rebalance(
    state: PortfolioState,
    targets: Mapping[str, float],
    closes: Mapping[str, float],
    fees: FeeSchedule,
    cpi: CpiSeries | None,
) -> tuple[PortfolioState, FeeRecord]:
    """Trade ``state`` to ``targets`` at ``closes`` on ``state.date``.

    Each security whose share count changes pays one admin fee (2015 dollars,
    CPI-deflated to the trade month) plus ``|shares traded| * close *
    spread_rate / 2``. A bankrupt result has value 0 and ``record.bankrupt``.
    """
    ids = sorted(set(state.holdings) | set(targets))
    missing = [k for k in ids if k not in closes]
    if missing:
        raise DataError(f"no close price for {missing[0]} on {state.date}")
    sh = np.array([state.holdings.get(k, 0.0) for k in ids], dtype=float)
    c = np.array([closes[k] for k in ids], dtype=float)
    tw = np.array([targets.get(k, 0.0) for k in ids], dtype=float)
    admin = _admin_fee(fees, state.date, cpi)
    new_sh, cash, a, s, n, broke = _solve_rebalance(sh, c, state.cash, tw, admin, fees.spread_rate / 2)
    holdings = {k: v for k, v in zip(ids, new_sh) if v > 0}
    value = 0.0 if broke else float((new_sh * c).sum() + cash)
    return PortfolioState(state.date, value, holdings, cash), FeeRecord(state.date, a, s, n, broke)


def _period_key(date: dt.date, frequency: str):
    if frequency == "monthly":
        return (date.year, date.month)
    if frequency == "quarterly":
        return (date.year, (date.month - 1) // 3)
    if frequency == "annual":
        return date.year
    return date


def is_rebalance_day(prev: dt.date, date: dt.date, frequency: str) -> bool:
    """True on the first trading day of a new period."""
    return _period_key(prev, frequency) != _period_key(date, frequency)


@dataclass
class BacktestReport:
    config: BacktestConfig
    dates: tuple[dt.date, ...]
    values: np.ndarray
    daily_returns: np.ndarray
    admin_fees: np.ndarray
    spread_fees: np.ndarray
    trades: np.ndarray
    bankrupt: bool = False
    bankruptcy_date: dt.date | None = None
    states: list[PortfolioState] | None = None

    @property
    def initial_capital(self) -> float:
        return self.config.initial_capital

    @property
    def final_value(self) -> float:
        return float(self.values[-1])

    @property
    def daily_values(self) -> list[tuple[dt.date, float]]:
        return list(zip(self.dates, self.values.tolist()))

    @property
    def daily_fees(self) -> np.ndarray:
        return self.admin_fees + self.spread_fees

    @property
    def fee_ledger(self) -> dict[str, float]:
        admin = math.fsum(self.admin_fees)
        spread = math.fsum(self.spread_fees)
        return {"admin_total": admin, "spread_total": spread, "total": admin + spread}

    @property
    def net_daily_returns(self) -> np.ndarray:
        """Day-over-day value changes after fees; the first entry is relative to initial capital."""
        prev = np.concatenate([[self.initial_capital], self.values[:-1]])
        return self.values / prev - 1.0

    @property
    def monthly_returns(self) -> list[tuple[str, float]]:
        return [(f"{y:04d}-{m:02d}", r) for (y, m), r in period_returns(self, "monthly")]

    @property
    def annual_returns(self) -> list[tuple[int, float]]:
        return annualize_report(self)


def period_returns(report: BacktestReport, frequency: str) -> list[tuple[object, float]]:
    """Period-end value over prior period-end value (initial capital for the first period)."""
    out = []
    prev_value = report.initial_capital
    n = len(report.dates)
    for k in range(n):
        key = _period_key(report.dates[k], frequency)
        if k == n - 1 or _period_key(report.dates[k + 1], frequency) != key:
            v = float(report.values[k])
            out.append((key, v / prev_value - 1.0))
            prev_value = v
    return out


def annualize_report(report: BacktestReport) -> list[tuple[int, float]]:
    if len(report.dates) == 0:
        raise ValueError("empty report")
    return period_returns(report, "annual")


def _horizon(h: MarketHistory, start: dt.date | None, end: dt.date | None) -> tuple[int, int]:
    cal = h.calendar
    start = start or cal[0]
    end = end or cal[-1]
    i0 = next((i for i, d in enumerate(cal) if d >= start), None)
    i1 = next((i for i in range(len(cal) - 1, -1, -1) if cal[i] <= end), None)
    if i0 is None or i1 is None or i1 <= i0:
        raise DataError(f"history does not cover {start}..{end} with at least two trading days")
    return i0, i1


def run_backtest(
    h: MarketHistory,
    cpi: CpiSeries | None,
    cfg: BacktestConfig,
    *,
    record_states: bool = False,
) -> BacktestReport:
    i0, i1 = _horizon(h, cfg.start_date, cfg.end_date)
    cal = h.calendar
    fees = cfg.policy.fee_schedule
    freq = cfg.policy.frequency
    half_spread = fees.spread_rate / 2
    admin_cache: dict[tuple[int, int], float] = {}

    def admin_on(d: dt.date) -> float:
        key = (d.year, d.month)
        if key not in admin_cache:
            admin_cache[key] = _admin_fee(fees, d, cpi)
        return admin_cache[key]

    close, div, member = h.close, h.dividend, h.member
    caps = h.caps()
    T, S = close.shape
    leaving = np.zeros((T, S), dtype=bool)
    leaving[:-1] = member[:-1] & ~member[1:]

    def targets_on(k: int) -> np.ndarray:
        eligible = member[k] & ~leaving[k]
        if not eligible.any():
            return None
        f = transform_array(cfg.transform, np.where(eligible, caps[k], np.nan))
        w = np.where(eligible, f, 0.0)
        return w / math.fsum(w)

    n = i1 - i0 + 1
    values = np.zeros(n)
    rets = np.zeros(n)
    admin = np.zeros(n)
    spread = np.zeros(n)
    trades = np.zeros(n, dtype=int)
    states = [] if record_states else None
    shares = np.zeros(S)
    cash = float(cfg.initial_capital)
    bankrupt_at = None

    def snapshot(k: int, value: float):
        if states is not None:
            held = np.flatnonzero(shares > 0)
            states.append(
                PortfolioState(cal[k], value, {h.security_ids[j]: float(shares[j]) for j in held}, cash)
            )

    for pos in range(n):
        k = i0 + pos
        held = shares > 0
        if pos == 0:
            rets[pos] = 0.0
            gross_value = cash
        else:
            c = close[k]
            divcash = float((shares[held] * div[k, held]).sum())
            gross = float((shares[held] * c[held]).sum()) + cash + divcash
            rets[pos] = gross / values[pos - 1] - 1.0
            cash += divcash
            gross_value = gross

        if pos == 0 or freq == "daily" or is_rebalance_day(cal[k - 1], cal[k], freq):
            tw = targets_on(k)
            if tw is None:
                if pos == 0:
                    raise DataError(f"no eligible member securities on {cal[k]}")
            else:
                shares, cash, a, s, nt, broke = _solve_rebalance(
                    shares, close[k], cash, tw, admin_on(cal[k]), half_spread
                )
                admin[pos] += a
                spread[pos] += s
                trades[pos] += nt
                if broke:
                    bankrupt_at = pos
                    cash = 0.0
                    values[pos] = 0.0
                    snapshot(k, 0.0)
                    break

        if pos < n - 1:
            for j in np.flatnonzero((shares > 0) & leaving[k]):
                proceeds = shares[j] * close[k, j]
                a, s = admin_on(cal[k]), half_spread * proceeds
                shares[j] = 0.0
                cash += proceeds - a - s
                admin[pos] += a
                spread[pos] += s
                trades[pos] += 1

        held = shares > 0
        value = float((shares[held] * close[k, held]).sum()) + cash
        if value <= 0:
            # liquidation fees exhausted the book; the day's fees are capped at its gross value
            admin[pos] = min(admin[pos], gross_value)
            spread[pos] = gross_value - admin[pos]
            bankrupt_at = pos
            values[pos] = 0.0
            shares[:] = 0.0
            cash = 0.0
            snapshot(k, 0.0)
            break
        values[pos] = value
        snapshot(k, value)

    last = n if bankrupt_at is None else bankrupt_at + 1
    return BacktestReport(
        config=cfg,
        dates=tuple(cal[i0 : i0 + last]),
        values=values[:last],
        daily_returns=rets[:last],
        admin_fees=admin[:last],
        spread_fees=spread[:last],
        trades=trades[:last],
        bankrupt=bankrupt_at is not None,
        bankruptcy_date=cal[i0 + bankrupt_at] if bankrupt_at is not None else None,
        states=states,
    )
