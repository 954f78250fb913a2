"""Ladder-weighted equity portfolios: weighting, fee-aware backtests, bootstrap and risk metrics."""

from .backtest import (
    BacktestConfig,
    BacktestReport,
    FeeSchedule,
    RebalancePolicy,
    ZERO_FEES,
    index_return,
    rebalance,
    run_backtest,
)
from .bootstrap import BootstrapConfig, BootstrapSummary, FixedN, UniformN, run_bootstrap, run_iteration, summarize
from .errors import BootstrapError, DataError, DomainError, LadderfolioError, MissingRecordError
from .marketdata import (
    CpiSeries,
    MarketHistory,
    SecurityDay,
    SynthConfig,
    bundled_cpi,
    deflate,
    generate_synthetic,
    load_cpi,
    load_history,
    market_cap,
    total_return,
)
from .metrics import RiskParams, ReturnSeries, cagr, cvar, growth_counts, mean_sd, sharpe, var
from .weighting import ALL_TRANSFORMS, LADDER, TargetWeights, Transform, target_weights, transform_value

__version__ = "0.1.0"
