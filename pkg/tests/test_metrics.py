from __future__ import annotations

import datetime as dt
import math

import numpy as np
import pandas as pd
import pytest
from conftest import DATA_DIR
from hypothesis import given, settings
from hypothesis import strategies as st

from ladderfolio.backtest import ZERO_FEES, BacktestConfig, RebalancePolicy, run_backtest
from ladderfolio.errors import DataError
from ladderfolio.marketdata import history_from_arrays
from ladderfolio.metrics import (
    ReturnSeries,
    RiskParams,
    cagr,
    compound_by_period,
    cvar,
    growth_counts,
    lower_order_statistic,
    mean_sd,
    report_metrics,
    sharpe,
    summary_metrics,
    tail_count,
    var,
)
from ladderfolio.weighting import Transform

returns_st = st.lists(st.floats(-0.99, 5.0, allow_nan=False), min_size=1, max_size=300)

# annual-return summary rows (percent), in file column order:
# inv-square, inv, inv-sqrt, log, equal, sqrt, identity, square
ARITHMETIC = [23.92, 20.35, 17.40, 15.62, 15.03, 13.18, 11.81, 10.25]
GEOMETRIC = [18.00, 17.53, 15.23, 13.80, 13.32, 11.73, 10.43, 8.69]
SD = [39.54, 26.44, 22.29, 20.01, 19.30, 17.52, 16.98, 18.05]
SHARPE = [56.07, 70.35, 70.21, 69.31, 68.81, 65.24, 59.25, 47.09]
VAR_ANNUAL = [-33.96, -16.60, -18.65, -18.91, -17.98, -17.43, -15.98, -24.23]
CVAR_ANNUAL = [-38.19, -29.75, -28.28, -27.09, -26.90, -26.83, -28.07, -29.23]


@pytest.fixture(scope="module")
def annual_table():
    df = pd.read_csv(DATA_DIR / "ladder_annual_returns_pct.csv")
    assert len(df) == 58 and df["year"].tolist() == list(range(1958, 2016))
    return df


def _col(df, i):
    return df.iloc[:, i + 1].to_numpy() / 100.0


# --- basic operations -----------------------------------------------------------


def test_cagr_examples():
    assert cagr(1e5, 1.477e9, 58) == pytest.approx(0.180, abs=5e-4)
    assert cagr(100, 100, 3) == 0.0
    assert cagr(100, 121, 2) == pytest.approx(0.10)
    assert cagr(100, 0, 2) == -1.0
    with pytest.raises(ValueError):
        cagr(0, 1, 1)


def test_mean_sd_examples():
    assert mean_sd([0.1, 0.1, 0.1]) == (pytest.approx(0.1), 0.0)
    m, s = mean_sd([0.0, 0.2])
    assert m == pytest.approx(0.1) and s == pytest.approx(math.sqrt(0.02), rel=1e-12)
    with pytest.raises(ValueError):
        mean_sd([0.1])


def test_sharpe_examples():
    assert sharpe([0.0175 - 0.01, 0.0175 + 0.01]) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        sharpe([0.05, 0.05])
    with pytest.raises(ValueError):
        sharpe(ReturnSeries("monthly", (0.01, 0.02)))
    assert sharpe(ReturnSeries("annual", (0.1, 0.3)), RiskParams(0.0)) == pytest.approx(0.2 / math.sqrt(0.02))


def test_var_examples():
    worst_of_20 = [-0.3] + [0.01 * i for i in range(19)]
    assert tail_count(20, 0.05) == 1
    assert var(worst_of_20) == -0.3
    assert var(list(reversed(worst_of_20))) == -0.3
    assert var([0.02] * 13) == 0.02


def test_cvar_examples():
    assert cvar([-0.3] + [0.1] * 19) == var([-0.3] + [0.1] * 19)
    rets = [-0.4, -0.2] + [0.01 * (i + 1) for i in range(38)]
    assert tail_count(40, 0.05) == 2
    assert cvar(rets) == pytest.approx(-0.3)
    assert cvar([0.03] * 9) == pytest.approx(0.03)


def test_tail_count_guards_float_roundup():
    # 0.05 * 60 evaluates to 3.0000000000000004 in binary
    assert tail_count(60, 0.05) == 3
    assert tail_count(58, 0.05) == 3
    assert tail_count(1, 0.05) == 1


def test_linear_quantile_option():
    x = [-0.5, -0.1, 0.0, 0.2]
    assert var(x, 0.5, method="linear") == pytest.approx(-0.05)
    with pytest.raises(ValueError):
        var(x, method="nearest")


def test_return_series_validation():
    with pytest.raises(ValueError):
        ReturnSeries("annual", (0.1, -1.0))
    with pytest.raises(ValueError):
        ReturnSeries("weekly", (0.1,))
    with pytest.raises(ValueError):
        RiskParams(var_level=1.0)


# --- published annual-return tables ------------------------------------------------


@pytest.mark.parametrize("i", range(8))
def test_annual_table_moments(annual_table, i):
    x = _col(annual_table, i)
    m, s = mean_sd(x)
    assert 100 * m == pytest.approx(ARITHMETIC[i], abs=0.01)
    assert 100 * s == pytest.approx(SD[i], abs=0.01)
    assert 100 * cagr(1.0, float(np.prod(1 + x)), 58) == pytest.approx(GEOMETRIC[i], abs=0.01)
    assert 100 * sharpe(ReturnSeries("annual", tuple(x))) == pytest.approx(SHARPE[i], abs=0.05)


@pytest.mark.parametrize("i", range(8))
def test_annual_table_tail_rows(annual_table, i):
    x = _col(annual_table, i)
    assert 100 * cvar(x) == pytest.approx(CVAR_ANNUAL[i], abs=0.01)
    # the published VaR row interpolates between order statistics
    assert 100 * var(x, method="linear") == pytest.approx(VAR_ANNUAL[i], abs=0.01)
    assert var(x) <= var(x, method="linear")


# --- growth counts ------------------------------------------------------------------


def test_growth_counts_thresholds():
    close = [[10.0, 10.0, 10.0], [16.0, 22.0, 11.0]]
    h = history_from_arrays(close, start=dt.date(1999, 12, 31))
    assert growth_counts(h, 2000) == {0.5: 2, 1.0: 1, 2.0: 0}


def test_growth_counts_flat_and_nested():
    flat = history_from_arrays([[5.0, 7.0]] * 3, start=dt.date(2000, 1, 3))
    assert growth_counts(flat, 2000) == {0.5: 0, 1.0: 0, 2.0: 0}
    big = history_from_arrays([[10.0], [35.0]], start=dt.date(1999, 12, 31))
    assert growth_counts(big, 2000) == {0.5: 1, 1.0: 1, 2.0: 1}
    with pytest.raises(DataError):
        growth_counts(big, 2005)


def test_growth_counts_ignore_dividends_and_non_members():
    close = [[10.0, 10.0], [16.0, 16.0]]
    h = history_from_arrays(close, dividend=[[0, 0], [9.0, 0]], member=[[1, 1], [1, 0]], start=dt.date(1999, 12, 31))
    assert growth_counts(h, 2000) == {0.5: 1, 1.0: 0, 2.0: 0}


@settings(max_examples=100, deadline=None)
@given(growth=st.lists(st.floats(0.05, 6.0), min_size=1, max_size=20))
def test_growth_counts_nesting(growth):
    close = [[10.0] * len(growth), [10.0 * g for g in growth]]
    h = history_from_arrays(close, start=dt.date(1999, 12, 31))
    c = growth_counts(h, 2000)
    assert c[2.0] <= c[1.0] <= c[0.5]


# --- properties ---------------------------------------------------------------------


@settings(max_examples=300, deadline=None)
@given(x=returns_st, level=st.floats(0.001, 0.999))
def test_cvar_never_exceeds_var(x, level):
    assert cvar(x, level) <= var(x, level) + 1e-15


@settings(max_examples=300, deadline=None)
@given(x=returns_st, worst=st.floats(-0.999, -0.99), level=st.floats(0.01, 0.5))
def test_new_worst_observation_lowers_tail(x, worst, level):
    worse = [min(worst, min(x) - 1e-9)] if min(x) > -0.999 else [-0.9999]
    y = x + worse
    assert var(y, level) <= var(x, level)
    assert cvar(y, level) <= cvar(x, level) + 1e-12


@settings(max_examples=200, deadline=None)
@given(x=st.lists(st.floats(-0.9, 2.0), min_size=2, max_size=60))
def test_geometric_at_most_arithmetic(x):
    g = cagr(1.0, math.prod(1 + r for r in x), len(x))
    assert g <= float(np.mean(x)) + 1e-12


@settings(max_examples=100, deadline=None)
@given(values=st.lists(st.floats(1.0, 1e6), min_size=3, max_size=30), c=st.floats(1e-3, 1e3))
def test_sharpe_ignores_currency_scale(values, c):
    v = np.array(values)
    r1 = v[1:] / v[:-1] - 1
    r2 = (c * v[1:]) / (c * v[:-1]) - 1
    if np.std(r1) < 1e-9:
        return
    assert sharpe(list(r1)) == pytest.approx(sharpe(list(r2)), rel=1e-9, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(x=returns_st, level=st.floats(0.001, 0.999))
def test_var_matches_sort_oracle(x, level):
    k = max(1, math.ceil(level * len(x) - 1e-9))
    assert var(x, level) == sorted(x)[k - 1]
    assert lower_order_statistic(x, level) == sorted(x)[k - 1]


# --- aggregation and report metrics -------------------------------------------------


def test_compound_by_period():
    dates = [dt.date(2000, 1, 30), dt.date(2000, 1, 31), dt.date(2000, 2, 1), dt.date(2001, 1, 2)]
    rets = [0.1, 0.1, -0.5, 0.2]
    months = compound_by_period(dates, rets, "monthly")
    assert [k for k, _ in months] == [(2000, 1), (2000, 2), (2001, 1)]
    assert months[0][1] == pytest.approx(0.21)
    years = compound_by_period(dates, rets, "annual")
    assert years[0][1] == pytest.approx(1.21 * 0.5 - 1)


def test_summary_metrics_keys_and_nones():
    m = summary_metrics([0.01], [0.01], [0.05], 1.05, 1.0)
    assert set(m) == {
        "cagr", "mean_annual", "sd_annual", "sharpe",
        "var_annual", "cvar_annual", "var_monthly", "cvar_monthly", "var_daily", "cvar_daily",
    }
    assert m["sharpe"] is None and m["sd_annual"] is None
    assert m["cagr"] == pytest.approx(0.05)


def test_report_metrics(static_universe):
    rep = run_backtest(static_universe, None, BacktestConfig(Transform.EQUAL, RebalancePolicy("monthly", ZERO_FEES)))
    m = report_metrics(rep)
    ann = [r for _, r in rep.annual_returns]
    assert m["mean_annual"] == pytest.approx(np.mean(ann))
    assert m["var_daily"] == var(rep.net_daily_returns.tolist())
    assert m["cvar_monthly"] <= m["var_monthly"]
