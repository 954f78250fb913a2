"""Cross-sectional bootstrap of ladder-weighted portfolios.

Each iteration samples a basket of securities with replacement, then replays
the daily index return with weights formed from the previous day's caps. Any
basket member that leaves the universe is swapped for a uniform draw (with
replacement) from that day's members. No fees are charged.

Iteration ``i`` draws from ``numpy.random.default_rng([master_seed, i])``, a
``SeedSequence`` keyed on both integers, so a draw depends only on the inputs
and its own index. Worker count and scheduling cannot change results.
"""

from __future__ import annotations

import datetime as dt
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import BootstrapError, DataError
from .marketdata import MarketHistory
from .metrics import lower_order_statistic
from .weighting import Transform, transform_array

# sampler(rng, pool, k) -> k security indices drawn from pool
Sampler = Callable[[np.random.Generator, np.ndarray, int], np.ndarray]


def uniform_sampler(rng: np.random.Generator, pool: np.ndarray, k: int) -> np.ndarray:
    return pool[rng.integers(0, pool.size, size=k)]


@dataclass(frozen=True)
class UniformN:
    lo: int = 100
    hi: int = 500

    def __post_init__(self):
        if not 1 <= self.lo <= self.hi:
            raise ValueError("need 1 <= lo <= hi")

    def draw(self, rng: np.random.Generator) -> int:
        return int(rng.integers(self.lo, self.hi + 1))

    def __str__(self) -> str:
        return f"uniform:{self.lo}-{self.hi}"


@dataclass(frozen=True)
class FixedN:
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")

    def draw(self, rng: np.random.Generator) -> int:
        return self.n

    def __str__(self) -> str:
        return f"fixed:{self.n}"


def parse_n_mode(text: str) -> UniformN | FixedN:
    kind, _, arg = text.strip().partition(":")
    try:
        if kind == "fixed":
            return FixedN(int(arg))
        if kind == "uniform":
            lo, _, hi = arg.partition("-")
            return UniformN(int(lo), int(hi))
    except ValueError as exc:
        raise ValueError(f"invalid n-mode {text!r}: {exc}") from None
    raise ValueError(f"invalid n-mode {text!r}; expected uniform:LO-HI or fixed:N")


@dataclass(frozen=True)
class BootstrapConfig:
    transform: Transform
    n_mode: UniformN | FixedN = field(default_factory=UniformN)
    iterations: int = 20_000
    master_seed: int = 0
    initial_scale: float = 1e5
    start_date: dt.date | None = None
    end_date: dt.date | None = None

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if not self.initial_scale > 0:
            raise ValueError("initial_scale must be > 0")


@dataclass(frozen=True)
class BootstrapDraw:
    iteration: int
    cumulative_return: float


@dataclass(frozen=True)
class BootstrapSummary:
    mean: float
    median: float
    sd: float
    q1: float
    q5: float
    q95: float
    q99: float
    iterations: int


@dataclass(frozen=True)
class _Prepared:
    """Per-(history, transform, horizon) arrays shared by every iteration."""

    weight: np.ndarray  # f(cap) on day t, 0 where absent
    ret: np.ndarray  # total return on day t, 0 where undefined
    valid: np.ndarray  # member on t with a record on t-1
    next_invalid: np.ndarray  # first day >= t on which the security is not valid
    start_pool: np.ndarray
    a0: int
    a1: int


def prepare(h: MarketHistory, transform: Transform, start=None, end=None) -> _Prepared:
    cal = h.calendar
    a0 = next((i for i, d in enumerate(cal) if start is None or d >= start), None)
    a1 = next((i for i in range(len(cal) - 1, -1, -1) if end is None or cal[i] <= end), None)
    if a0 is None or a1 is None or a1 <= a0:
        raise DataError("bootstrap horizon needs at least two trading days")
    sl = slice(a0, a1 + 1)
    present = h.present[sl]
    member = h.member[sl]
    weight = np.nan_to_num(transform_array(transform, np.where(present, h.caps()[sl], np.nan)), nan=0.0)
    ret = np.nan_to_num(h.total_returns()[sl], nan=0.0)
    valid = np.zeros_like(member)
    valid[1:] = member[1:] & present[:-1]
    T = valid.shape[0]
    next_invalid = np.empty(valid.shape, dtype=np.int64)
    nxt = np.full(valid.shape[1], T, dtype=np.int64)
    for t in range(T - 1, -1, -1):
        nxt = np.where(valid[t], nxt, t)
        next_invalid[t] = nxt
    start_pool = np.flatnonzero(member[0])
    if start_pool.size == 0:
        raise DataError(f"no member securities on {cal[a0]}")
    for arr in (weight, ret, valid, next_invalid, start_pool):
        arr.setflags(write=False)
    return _Prepared(weight, ret, valid, next_invalid, start_pool, a0, a1)


def _iterate(p: _Prepared, cfg: BootstrapConfig, itr: int, sampler: Sampler) -> float:
    rng = np.random.default_rng([cfg.master_seed, itr])
    n = cfg.n_mode.draw(rng)
    if isinstance(cfg.n_mode, FixedN) and n > p.start_pool.size:
        raise ValueError(f"fixed N={n} exceeds the {p.start_pool.size} securities in the universe")
    slots = np.asarray(sampler(rng, p.start_pool, n), dtype=np.int64)
    T = p.valid.shape[0]
    growth = 1.0
    t = 1
    while t < T:
        held, mult = np.unique(slots, return_counts=True)
        end = int(p.next_invalid[t, held].min())
        if end > t:
            w = p.weight[t - 1 : end - 1, held] * mult
            num = np.einsum("ij,ij->i", w, p.ret[t:end, held])
            den = w.sum(axis=1)
            growth *= float(np.prod(1.0 + num / den))
        if end >= T:
            break
        out = ~p.valid[end, slots]
        pool = np.flatnonzero(p.valid[end])
        if pool.size == 0:
            raise ValueError(f"no member securities to replace delisted names on day {end}")
        slots = slots.copy()
        slots[out] = sampler(rng, pool, int(out.sum()))
        t = end
    return cfg.initial_scale * growth


def run_iteration(
    h: MarketHistory,
    cfg: BootstrapConfig,
    itr: int,
    *,
    sampler: Sampler = uniform_sampler,
    prepared: _Prepared | None = None,
) -> BootstrapDraw:
    p = prepared or prepare(h, cfg.transform, cfg.start_date, cfg.end_date)
    try:
        return BootstrapDraw(itr, _iterate(p, cfg, itr, sampler))
    except (ValueError, IndexError) as exc:
        raise BootstrapError(itr, str(exc)) from exc


_WORKER: dict = {}


def _init_worker(p: _Prepared, cfg: BootstrapConfig, sampler: Sampler) -> None:
    _WORKER.update(p=p, cfg=cfg, sampler=sampler)


def _run_chunk(lo: int, hi: int) -> list[float]:
    p, cfg, sampler = _WORKER["p"], _WORKER["cfg"], _WORKER["sampler"]
    out = []
    for itr in range(lo, hi):
        try:
            out.append(_iterate(p, cfg, itr, sampler))
        except (ValueError, IndexError) as exc:
            raise BootstrapError(itr, str(exc)) from None
    return out


def run_bootstrap(
    h: MarketHistory,
    cfg: BootstrapConfig,
    *,
    workers: int | None = 1,
    sampler: Sampler = uniform_sampler,
) -> list[BootstrapDraw]:
    """All ``cfg.iterations`` draws, ordered by iteration index."""
    p = prepare(h, cfg.transform, cfg.start_date, cfg.end_date)
    workers = max(1, workers or os.cpu_count() or 1)
    n = cfg.iterations
    if workers == 1 or n < 2:
        _init_worker(p, cfg, sampler)
        values = _run_chunk(0, n)
    else:
        size = -(-n // (workers * 4))
        bounds = [(lo, min(lo + size, n)) for lo in range(0, n, size)]
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(p, cfg, sampler)) as ex:
            futures = [ex.submit(_run_chunk, lo, hi) for lo, hi in bounds]
            values = [v for f in futures for v in f.result()]
    return [BootstrapDraw(i, v) for i, v in enumerate(values)]


def summarize(draws: Sequence[BootstrapDraw] | Sequence[float]) -> BootstrapSummary:
    """Mean, midpoint median, sample sd, and lower order-statistic percentiles.

    A single draw has ``sd = 0``.
    """
    x = np.array([d.cumulative_return if isinstance(d, BootstrapDraw) else d for d in draws], dtype=float)
    if x.size == 0:
        raise ValueError("no draws to summarize")
    d = x - x[0]
    sd = float(d.std(ddof=1)) if x.size > 1 else 0.0
    return BootstrapSummary(
        mean=float(x[0] + d.mean()),
        median=float(np.median(x)),
        sd=sd,
        q1=lower_order_statistic(x, 0.01),
        q5=lower_order_statistic(x, 0.05),
        q95=lower_order_statistic(x, 0.95),
        q99=lower_order_statistic(x, 0.99),
        iterations=int(x.size),
    )
