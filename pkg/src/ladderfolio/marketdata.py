"""Daily security panels, CPI series, and the seeded synthetic market generator.

A :class:`MarketHistory` is stored as dense ``(n_dates, n_securities)`` arrays so
the backtest and bootstrap engines can slice it without per-record lookups.
Cells without a record hold ``NaN`` in the price columns.
"""

from __future__ import annotations

import calendar as _calendar
import datetime as dt
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
import pandas as pd

from .errors import DataError, MissingRecordError

PRICES_HEADER = ("date", "security_id", "close", "shares_outstanding", "dividend", "member")
CPI_HEADER = ("month", "cpi")
CPI_ANCHOR = "2015-12"
TRADING_DAYS_PER_YEAR = 252


@dataclass(frozen=True)
class SecurityDay:
    security_id: str
    date: dt.date
    close: float
    shares_outstanding: int
    dividend: float = 0.0
    is_member: bool = True

    def __post_init__(self):
        if not self.close > 0:
            raise DataError(f"{self.security_id} {self.date}: close must be > 0, got {self.close}")
        if not self.shares_outstanding > 0:
            raise DataError(
                f"{self.security_id} {self.date}: shares_outstanding must be > 0, "
                f"got {self.shares_outstanding}"
            )
        if not self.dividend >= 0:
            raise DataError(f"{self.security_id} {self.date}: dividend must be >= 0, got {self.dividend}")


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MarketHistory:
    """Immutable panel of daily security records over a trading calendar.

    ``close``, ``shares`` and ``dividend`` are float arrays of shape
    ``(len(calendar), len(security_ids))`` with ``NaN`` where a security has no
    record; ``member`` is a boolean array of the same shape (``False`` where
    absent).
    """

    security_ids: tuple[str, ...]
    calendar: tuple[dt.date, ...]
    close: np.ndarray
    shares: np.ndarray
    dividend: np.ndarray
    member: np.ndarray
    _date_pos: dict = field(init=False, repr=False)
    _sec_pos: dict = field(init=False, repr=False)

    def __post_init__(self):
        T, S = len(self.calendar), len(self.security_ids)
        for name in ("close", "shares", "dividend", "member"):
            arr = getattr(self, name)
            if np.shape(arr) != (T, S):
                raise DataError(f"{name} has shape {np.shape(arr)}, expected {(T, S)}")
        if len(set(self.security_ids)) != S:
            raise DataError("duplicate security ids")
        if any(b <= a for a, b in zip(self.calendar, self.calendar[1:])):
            raise DataError("calendar must be strictly increasing")

        close = np.asarray(self.close, dtype=float)
        present = ~np.isnan(close)
        shares = np.asarray(self.shares, dtype=float)
        dividend = np.asarray(self.dividend, dtype=float)
        member = np.asarray(self.member, dtype=bool) & present
        if np.any(close[present] <= 0):
            raise DataError("close must be > 0 on every record")
        if np.any(~(shares[present] > 0)):
            raise DataError("shares_outstanding must be > 0 on every record")
        if np.any(~(dividend[present] >= 0)):
            raise DataError("dividend must be >= 0 on every record")
        # contiguous listing run per security
        counts = present.sum(axis=0)
        for j in np.flatnonzero(counts):
            rows = np.flatnonzero(present[:, j])
            if rows[-1] - rows[0] + 1 != rows.size:
                raise DataError(f"security {self.security_ids[j]} has a gap in its record run")

        object.__setattr__(self, "close", _freeze(close))
        object.__setattr__(self, "shares", _freeze(np.where(present, shares, np.nan)))
        object.__setattr__(self, "dividend", _freeze(np.where(present, dividend, np.nan)))
        object.__setattr__(self, "member", _freeze(member))
        object.__setattr__(self, "calendar", tuple(self.calendar))
        object.__setattr__(self, "security_ids", tuple(self.security_ids))
        object.__setattr__(self, "_date_pos", {d: i for i, d in enumerate(self.calendar)})
        object.__setattr__(self, "_sec_pos", {s: j for j, s in enumerate(self.security_ids)})

    @classmethod
    def from_records(cls, records: Iterable[SecurityDay]) -> "MarketHistory":
        records = list(records)
        calendar = sorted({r.date for r in records})
        ids = sorted({r.security_id for r in records})
        dpos = {d: i for i, d in enumerate(calendar)}
        spos = {s: j for j, s in enumerate(ids)}
        shape = (len(calendar), len(ids))
        close = np.full(shape, np.nan)
        shares = np.full(shape, np.nan)
        dividend = np.full(shape, np.nan)
        member = np.zeros(shape, dtype=bool)
        for r in records:
            i, j = dpos[r.date], spos[r.security_id]
            if not np.isnan(close[i, j]):
                raise DataError(f"duplicate record for ({r.security_id}, {r.date})")
            close[i, j] = r.close
            shares[i, j] = r.shares_outstanding
            dividend[i, j] = r.dividend
            member[i, j] = r.is_member
        return cls(tuple(ids), tuple(calendar), close, shares, dividend, member)

    @property
    def present(self) -> np.ndarray:
        return ~np.isnan(self.close)

    @property
    def n_records(self) -> int:
        return int(self.present.sum())

    def date_index(self, date: dt.date) -> int:
        try:
            return self._date_pos[date]
        except KeyError:
            raise MissingRecordError(f"{date} is not a trading date in this history") from None

    def security_index(self, security_id: str) -> int:
        try:
            return self._sec_pos[security_id]
        except KeyError:
            raise MissingRecordError(f"unknown security {security_id!r}") from None

    def has_record(self, security_id: str, date: dt.date) -> bool:
        i, j = self._date_pos.get(date), self._sec_pos.get(security_id)
        return i is not None and j is not None and not np.isnan(self.close[i, j])

    def record(self, security_id: str, date: dt.date) -> SecurityDay:
        i, j = self.date_index(date), self.security_index(security_id)
        if np.isnan(self.close[i, j]):
            raise MissingRecordError(f"no record for ({security_id}, {date})")
        return SecurityDay(
            security_id,
            date,
            float(self.close[i, j]),
            int(self.shares[i, j]),
            float(self.dividend[i, j]),
            bool(self.member[i, j]),
        )

    def records(self) -> Iterator[SecurityDay]:
        """Yield every record ordered by (date, security_id)."""
        for i, j in zip(*np.nonzero(self.present)):
            yield SecurityDay(
                self.security_ids[j],
                self.calendar[i],
                float(self.close[i, j]),
                int(self.shares[i, j]),
                float(self.dividend[i, j]),
                bool(self.member[i, j]),
            )

    def members_on(self, date: dt.date) -> list[str]:
        i = self.date_index(date)
        return [self.security_ids[j] for j in np.flatnonzero(self.member[i])]

    def caps(self) -> np.ndarray:
        """Market-cap panel, ``NaN`` where absent."""
        return self.close * self.shares

    def total_returns(self) -> np.ndarray:
        """Dividend-inclusive daily returns; ``NaN`` where the day or its predecessor lacks a record."""
        out = np.full(self.close.shape, np.nan)
        if len(self.calendar) > 1:
            out[1:] = (self.close[1:] + self.dividend[1:]) / self.close[:-1] - 1.0
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, MarketHistory):
            return NotImplemented
        return (
            self.security_ids == other.security_ids
            and self.calendar == other.calendar
            and np.array_equal(self.close, other.close, equal_nan=True)
            and np.array_equal(self.shares, other.shares, equal_nan=True)
            and np.array_equal(self.dividend, other.dividend, equal_nan=True)
            and np.array_equal(self.member, other.member)
        )

    __hash__ = None


def market_cap(h: MarketHistory, security_id: str, date: dt.date) -> float:
    rec = h.record(security_id, date)
    return rec.close * rec.shares_outstanding


def total_return(h: MarketHistory, security_id: str, date: dt.date) -> float:
    """``(close_t + dividend_t) / close_{t-1} - 1`` for one security."""
    i = h.date_index(date)
    rec = h.record(security_id, date)
    if i == 0 or not h.has_record(security_id, h.calendar[i - 1]):
        raise MissingRecordError(f"{security_id} has no record before {date}; no return on its first day")
    prev = h.close[i - 1, h.security_index(security_id)]
    return (rec.close + rec.dividend) / prev - 1.0


def _parse_rows(df: pd.DataFrame) -> pd.DataFrame:
    def bad(mask, what):
        if mask.any():
            line = int(np.flatnonzero(mask.to_numpy())[0]) + 2  # header is line 1
            raise DataError(f"line {line}: {what}")

    dates = pd.to_datetime(df["date"], format="%Y-%m-%d", errors="coerce")
    bad(dates.isna(), f"bad date {df['date'][dates.isna()].iloc[0]!r}" if dates.isna().any() else "")
    bad(df["security_id"].isna() | (df["security_id"].str.strip() == ""), "empty security_id")
    out = pd.DataFrame({"date": dates.dt.date, "security_id": df["security_id"].str.strip()})
    for col in ("close", "shares_outstanding", "dividend"):
        vals = pd.to_numeric(df[col], errors="coerce")
        bad(vals.isna(), f"{col} is not a number")
        out[col] = vals
    bad(out["close"] <= 0, "close must be > 0")
    bad(out["shares_outstanding"] <= 0, "shares_outstanding must be > 0")
    bad(out["dividend"] < 0, "dividend must be >= 0")
    member = df["member"].str.strip()
    bad(~member.isin(["0", "1"]), "member must be 0 or 1")
    out["member"] = member == "1"
    dup = out.duplicated(["security_id", "date"], keep="first")
    if dup.any():
        line = int(np.flatnonzero(dup.to_numpy())[0]) + 2
        row = out.iloc[line - 2]
        raise DataError(f"line {line}: duplicate record for ({row['security_id']}, {row['date']})")
    return out


def load_history(path: str | Path) -> MarketHistory:
    """Read a prices CSV (``date,security_id,close,shares_outstanding,dividend,member``)."""
    path = Path(path)
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, na_values=[])
    except FileNotFoundError:
        raise DataError(f"{path}: no such file") from None
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"{path}: {exc}") from None
    if tuple(c.strip() for c in df.columns) != PRICES_HEADER:
        raise DataError(f"{path}: header must be {','.join(PRICES_HEADER)}")
    df.columns = list(PRICES_HEADER)
    if df.empty:
        raise DataError(f"{path}: no data rows")
    try:
        rows = _parse_rows(df)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None

    calendar = sorted(rows["date"].unique())
    ids = sorted(rows["security_id"].unique())
    i = pd.Index(calendar).get_indexer(rows["date"])
    j = pd.Index(ids).get_indexer(rows["security_id"])
    shape = (len(calendar), len(ids))
    close = np.full(shape, np.nan)
    shares = np.full(shape, np.nan)
    dividend = np.full(shape, np.nan)
    member = np.zeros(shape, dtype=bool)
    close[i, j] = rows["close"].to_numpy()
    shares[i, j] = rows["shares_outstanding"].to_numpy()
    dividend[i, j] = rows["dividend"].to_numpy()
    member[i, j] = rows["member"].to_numpy()
    try:
        return MarketHistory(tuple(ids), tuple(calendar), close, shares, dividend, member)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


def write_history(h: MarketHistory, path: str | Path) -> None:
    """Write ``h`` as a prices CSV with fixed-format numbers (byte-stable)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(PRICES_HEADER) + "\n")
        for i, j in zip(*np.nonzero(h.present)):
            fh.write(
                f"{h.calendar[i].isoformat()},{h.security_ids[j]},{h.close[i, j]:.6f},"
                f"{int(h.shares[i, j])},{h.dividend[i, j]:.6f},{int(h.member[i, j])}\n"
            )


# --- CPI -------------------------------------------------------------------


def _month_key(month) -> int:
    """Map ``'YYYY-MM'``, a date, or ``(year, month)`` to a month ordinal."""
    if isinstance(month, (dt.date, dt.datetime)):
        return month.year * 12 + month.month - 1
    if isinstance(month, tuple):
        y, m = month
    else:
        try:
            y, m = (int(p) for p in str(month).split("-"))
        except ValueError:
            raise DataError(f"bad month {month!r}, expected YYYY-MM") from None
    if not 1 <= m <= 12:
        raise DataError(f"bad month {month!r}")
    return y * 12 + m - 1


def _month_str(key: int) -> str:
    return f"{key // 12:04d}-{key % 12 + 1:02d}"


@dataclass(frozen=True)
class CpiSeries:
    """Contiguous monthly CPI levels starting at ``first_month``."""

    first_month: str
    levels: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "first_month", _month_str(_month_key(self.first_month)))
        object.__setattr__(self, "levels", tuple(float(v) for v in self.levels))
        if not self.levels:
            raise DataError("CPI series is empty")
        for k, v in enumerate(self.levels):
            if not v > 0:
                raise DataError(f"CPI level for {self.month_at(k)} must be > 0, got {v}")

    @classmethod
    def from_entries(cls, entries: dict) -> "CpiSeries":
        keyed = sorted((_month_key(m), float(v)) for m, v in entries.items())
        if not keyed:
            raise DataError("CPI series is empty")
        for (a, _), (b, _) in zip(keyed, keyed[1:]):
            if b != a + 1:
                raise DataError(f"missing {_month_str(a + 1)}")
        return cls(_month_str(keyed[0][0]), tuple(v for _, v in keyed))

    @property
    def last_month(self) -> str:
        return self.month_at(len(self.levels) - 1)

    @property
    def entries(self) -> dict[str, float]:
        return {self.month_at(k): v for k, v in enumerate(self.levels)}

    def month_at(self, k: int) -> str:
        return _month_str(_month_key(self.first_month) + k)

    def covers(self, month) -> bool:
        k = _month_key(month) - _month_key(self.first_month)
        return 0 <= k < len(self.levels)

    def level(self, month) -> float:
        k = _month_key(month) - _month_key(self.first_month)
        if not 0 <= k < len(self.levels):
            raise DataError(
                f"month {_month_str(_month_key(month))} outside CPI range "
                f"{self.first_month}..{self.last_month}"
            )
        return self.levels[k]

    def __len__(self) -> int:
        return len(self.levels)


def load_cpi(path: str | Path) -> CpiSeries:
    """Read a ``month,cpi`` CSV; rows may be in any order but must be contiguous."""
    path = Path(path)
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
    except FileNotFoundError:
        raise DataError(f"{path}: no such file") from None
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"{path}: {exc}") from None
    if tuple(c.strip() for c in df.columns) != CPI_HEADER:
        raise DataError(f"{path}: header must be {','.join(CPI_HEADER)}")
    entries = {}
    for n, (month, level) in enumerate(df.itertuples(index=False, name=None), start=2):
        try:
            key = _month_key(month.strip())
            value = float(level)
        except (DataError, ValueError):
            raise DataError(f"{path}: line {n}: bad row {month!r},{level!r}") from None
        if not value > 0:
            raise DataError(f"{path}: line {n}: CPI level must be > 0, got {value}")
        if key in entries:
            raise DataError(f"{path}: line {n}: duplicate month {month}")
        entries[key] = value
    try:
        return CpiSeries.from_entries({(k // 12, k % 12 + 1): v for k, v in entries.items()})
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


def bundled_cpi() -> CpiSeries:
    """U.S. CPI-U, all items, city average, not seasonally adjusted (BLS CUUR0000SA0), 1913-01..2024-12."""
    ref = resources.files("ladderfolio") / "data" / "cpi_u_nsa.csv"
    with resources.as_file(ref) as p:
        return load_cpi(p)


def convert(amount: float, from_month, to_month, cpi: CpiSeries) -> float:
    """Re-express ``amount`` in ``from_month`` dollars as ``to_month`` dollars."""
    return amount * (cpi.level(to_month) / cpi.level(from_month))


def deflate(amount_2015: float, target_month, cpi: CpiSeries, anchor=CPI_ANCHOR) -> float:
    """Express an amount quoted in anchor-month (2015-12) dollars in ``target_month`` dollars."""
    return convert(amount_2015, anchor, target_month, cpi)


# --- synthetic generator -----------------------------------------------------


@dataclass(frozen=True)
class SynthConfig:
    n_securities: int = 50
    n_years: int = 10
    drift_range: tuple[float, float] = (0.0, 0.15)
    volatility_range: tuple[float, float] = (0.10, 0.40)
    dividend_yield_range: tuple[float, float] = (0.0, 0.04)
    membership_churn_rate: float = 2.0
    seed: int = 0
    start_year: int = 1958

    def __post_init__(self):
        if self.n_securities < 1 or self.n_years < 1:
            raise ValueError("n_securities and n_years must be >= 1")
        for name in ("drift_range", "volatility_range", "dividend_yield_range"):
            lo, hi = getattr(self, name)
            if lo < 0 or hi < lo:
                raise ValueError(f"{name} must satisfy 0 <= lo <= hi, got {(lo, hi)}")
            object.__setattr__(self, name, (float(lo), float(hi)))
        if self.volatility_range[1] < 0:
            raise ValueError("volatility upper bound must be >= 0")
        if self.membership_churn_rate < 0:
            raise ValueError("membership_churn_rate must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


def _weekdays(year: int, month: int) -> list[dt.date]:
    n = _calendar.monthrange(year, month)[1]
    days = (dt.date(year, month, d) for d in range(1, n + 1))
    return [d for d in days if d.weekday() < 5]


def synthetic_calendar(start_year: int, n_years: int) -> list[dt.date]:
    """252 trading days per year, each month starting at its first weekday.

    Every month takes 21 weekdays where it has them. Days missing from short
    months (20 weekdays) are taken from the latest months that have spare
    weekdays, so each year has exactly 252 dates.
    """
    out: list[dt.date] = []
    for year in range(start_year, start_year + n_years):
        wd = [_weekdays(year, m) for m in range(1, 13)]
        take = [min(21, len(w)) for w in wd]
        short = 21 * 12 - sum(take)
        for m in range(11, -1, -1):
            extra = min(short, len(wd[m]) - take[m])
            take[m] += extra
            short -= extra
        for w, k in zip(wd, take):
            out.extend(w[:k])
    return out


def generate_synthetic(cfg: SynthConfig) -> MarketHistory:
    """Seeded geometric-random-walk universe with quarterly dividends and membership churn.

    Each security draws its own annual drift, volatility and dividend yield
    uniformly from the configured ranges. Churn events arrive as a Poisson
    process with ``membership_churn_rate`` events per year; each event delists
    a uniformly chosen member (its record run ends the previous day) and lists
    a fresh security in its place, so exactly ``n_securities`` are members on
    every date.
    """
    rng = np.random.default_rng(cfg.seed)
    calendar = synthetic_calendar(cfg.start_year, cfg.n_years)
    T = len(calendar)
    div_days = np.array(
        [i > 0 and d.month in (3, 6, 9, 12) and calendar[i - 1].month != d.month for i, d in enumerate(calendar)]
    )

    # listing runs: (first_day, last_day_inclusive)
    runs = [[0, T - 1] for _ in range(cfg.n_securities)]
    live = list(range(cfg.n_securities))
    events = rng.poisson(cfg.membership_churn_rate / TRADING_DAYS_PER_YEAR, size=T)
    events[0] = 0
    for t in np.flatnonzero(events):
        for _ in range(events[t]):
            slot = int(rng.integers(len(live)))
            old = live[slot]
            if runs[old][0] == t:  # listed today; cannot also delist today
                continue
            runs[old][1] = t - 1
            runs.append([int(t), T - 1])
            live[slot] = len(runs) - 1

    S = len(runs)
    close = np.full((T, S), np.nan)
    shares = np.full((T, S), np.nan)
    dividend = np.full((T, S), np.nan)
    dt_year = 1.0 / TRADING_DAYS_PER_YEAR
    for j, (a, b) in enumerate(runs):
        mu = rng.uniform(*cfg.drift_range)
        sigma = rng.uniform(*cfg.volatility_range)
        yld = rng.uniform(*cfg.dividend_yield_range)
        p0 = rng.uniform(10.0, 100.0)
        n_sh = int(np.exp(rng.uniform(np.log(1e6), np.log(1e9))))
        n = b - a + 1
        z = rng.standard_normal(n - 1)
        steps = (mu - 0.5 * sigma**2) * dt_year + sigma * np.sqrt(dt_year) * z
        path = p0 * np.exp(np.concatenate([[0.0], np.cumsum(steps)]))
        close[a : b + 1, j] = path
        shares[a : b + 1, j] = n_sh
        div = np.zeros(n)
        pay = div_days[a + 1 : b + 1]
        div[1:][pay] = yld / 4.0 * path[:-1][pay]
        dividend[a : b + 1, j] = div

    ids = tuple(f"S{j:05d}" for j in range(S))
    member = ~np.isnan(close)
    return MarketHistory(ids, tuple(calendar), close, shares, dividend, member)


def history_from_arrays(
    close: Sequence[Sequence[float]],
    shares: Sequence[Sequence[float]] | float = 1.0,
    dividend: Sequence[Sequence[float]] | float = 0.0,
    *,
    start: dt.date = dt.date(1958, 1, 2),
    ids: Sequence[str] | None = None,
    member=None,
) -> MarketHistory:
    """Build a history from dense arrays on consecutive weekdays from ``start``.

    Convenience for small hand-built scenarios; ``NaN`` in ``close`` marks a
    missing record.
    """
    close = np.asarray(close, dtype=float)
    T, S = close.shape
    shares = np.broadcast_to(np.asarray(shares, dtype=float), (T, S))
    dividend = np.broadcast_to(np.asarray(dividend, dtype=float), (T, S))
    present = ~np.isnan(close)
    member = present if member is None else np.asarray(member, dtype=bool) & present
    days = pd.bdate_range(start, periods=T).date
    ids = tuple(ids) if ids is not None else tuple(f"S{j:03d}" for j in range(S))
    return MarketHistory(ids, tuple(days), close, shares, dividend, member)
