from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import enumerate_bootstrap
from scipy.stats import chisquare

from ladderfolio.backtest import ZERO_FEES, BacktestConfig, RebalancePolicy, run_backtest
from ladderfolio.bootstrap import (
    BootstrapConfig,
    BootstrapDraw,
    FixedN,
    UniformN,
    parse_n_mode,
    run_bootstrap,
    run_iteration,
    summarize,
)
from ladderfolio.errors import BootstrapError, DataError
from ladderfolio.marketdata import SynthConfig, generate_synthetic, history_from_arrays
from ladderfolio.weighting import ALL_TRANSFORMS, Transform

NAN = float("nan")


def each_once(rng, pool, k):
    return pool[:k]


@pytest.fixture(scope="module")
def three_by_two():
    # distinct caps and returns so the six distinct baskets give six distinct outcomes
    return history_from_arrays([[10.0, 20.0, 40.0], [11.0, 19.0, 46.0]], shares=[[1, 3, 2], [1, 3, 2]])


def test_exhaustive_enumeration_chi_square(three_by_two):
    cfg = BootstrapConfig(Transform.INV, FixedN(2), iterations=10_000, master_seed=2024)
    exact = enumerate_bootstrap(three_by_two, "inv", 2, 1e5)
    assert len(exact) == 6 and math.isclose(sum(exact.values()), 1.0)
    draws = run_bootstrap(three_by_two, cfg)
    keys = sorted(exact)
    seen = [round(d.cumulative_return, 6) for d in draws]
    assert set(seen) == set(keys)
    observed = [seen.count(k) for k in keys]
    expected = [exact[k] * len(draws) for k in keys]
    assert chisquare(observed, expected).pvalue > 0.01


def test_zero_return_history_gives_scale():
    h = history_from_arrays([[5.0, 8.0, 3.0]] * 6)
    cfg = BootstrapConfig(Transform.SQUARE, UniformN(1, 9), iterations=100, initial_scale=1234.5)
    assert all(d.cumulative_return == 1234.5 for d in run_bootstrap(h, cfg))


@pytest.mark.parametrize("t", ALL_TRANSFORMS)
def test_single_security_closed_form(t):
    r, T = 0.01, 12
    h = history_from_arrays([[50.0 * (1 + r) ** k] for k in range(T + 1)], shares=1e6)
    d = run_iteration(h, BootstrapConfig(t, FixedN(1)), 0)
    assert d.cumulative_return == pytest.approx(1e5 * (1 + r) ** T, rel=1e-12)


def test_run_iteration_is_deterministic(churn_universe):
    cfg = BootstrapConfig(Transform.INV_SQRT, UniformN(3, 30), master_seed=99)
    a = run_iteration(churn_universe, cfg, 17)
    b = run_iteration(churn_universe, cfg, 17)
    assert a == b
    assert run_iteration(churn_universe, cfg, 18) != a


def test_single_iteration_run(churn_universe):
    cfg = BootstrapConfig(Transform.LOG, UniformN(2, 10), iterations=1, master_seed=3)
    assert run_bootstrap(churn_universe, cfg) == [run_iteration(churn_universe, cfg, 0)]


def test_worker_count_does_not_change_draws(churn_universe):
    cfg = BootstrapConfig(Transform.INV, UniformN(2, 20), iterations=150, master_seed=5)
    one = run_bootstrap(churn_universe, cfg, workers=1)
    three = run_bootstrap(churn_universe, cfg, workers=3)
    assert one == three
    assert [d.iteration for d in one] == list(range(150))


@pytest.mark.parametrize("t", ALL_TRANSFORMS)
def test_zero_fee_consistency_with_daily_backtest(static_universe, t):
    n = len(static_universe.security_ids)
    draw = run_iteration(static_universe, BootstrapConfig(t, FixedN(n)), 0, sampler=each_once)
    rep = run_backtest(static_universe, None, BacktestConfig(t, RebalancePolicy("daily", ZERO_FEES)))
    assert draw.cumulative_return == pytest.approx(rep.final_value, rel=1e-8)


def test_mean_near_equal_weight_backtest():
    h = generate_synthetic(SynthConfig(n_securities=50, n_years=2, membership_churn_rate=0.0, seed=8))
    cfg = BootstrapConfig(Transform.EQUAL, FixedN(50), iterations=200, master_seed=1)
    x = np.array([d.cumulative_return for d in run_bootstrap(h, cfg)])
    rep = run_backtest(h, None, BacktestConfig(Transform.EQUAL, RebalancePolicy("daily", ZERO_FEES)))
    se = x.std(ddof=1) / math.sqrt(x.size)
    assert abs(x.mean() - rep.final_value) < 3 * se


def test_delisted_name_is_replaced_from_valid_pool():
    close = [
        [10.0, 20.0, NAN],
        [12.0, 21.0, NAN],
        [NAN, 22.0, 5.0],
        [NAN, 23.1, 6.0],
    ]
    h = history_from_arrays(close)
    calls = []

    def pick(rng, pool, k):
        calls.append(pool.tolist())
        return pool[:k]

    d = run_iteration(h, BootstrapConfig(Transform.EQUAL, FixedN(1)), 0, sampler=pick)
    # start pool is A and B; A leaves on day 2 when only B has a prior-day record
    assert calls == [[0, 1], [1]]
    assert d.cumulative_return == pytest.approx(1e5 * 1.2 * (22 / 21) * (23.1 / 22), rel=1e-12)


def test_multiplicity_weighting():
    h = history_from_arrays([[10.0, 10.0], [11.0, 9.0]])
    d = run_iteration(h, BootstrapConfig(Transform.EQUAL, UniformN(3, 3)), 0, sampler=lambda r, p, k: np.array([0, 0, 1]))
    assert d.cumulative_return == pytest.approx(1e5 * (1 + (2 * 0.1 - 0.1) / 3), rel=1e-12)


def test_fixed_n_larger_than_universe_fails_with_iteration(three_by_two):
    with pytest.raises(BootstrapError) as exc:
        run_bootstrap(three_by_two, BootstrapConfig(Transform.INV, FixedN(4), iterations=3))
    assert exc.value.iteration == 0


def test_empty_horizon_rejected(three_by_two):
    with pytest.raises(DataError):
        run_bootstrap(three_by_two, BootstrapConfig(Transform.INV, start_date=three_by_two.calendar[1]))


def test_config_validation():
    with pytest.raises(ValueError):
        UniformN(5, 4)
    with pytest.raises(ValueError):
        FixedN(0)
    with pytest.raises(ValueError):
        BootstrapConfig(Transform.INV, iterations=0)


def test_parse_n_mode():
    assert parse_n_mode("fixed:10") == FixedN(10)
    assert parse_n_mode("uniform:100-500") == UniformN(100, 500)
    assert str(parse_n_mode(str(UniformN(3, 7)))) == "uniform:3-7"
    for bad in ("fixed:", "uniform:9-2", "random:3"):
        with pytest.raises(ValueError):
            parse_n_mode(bad)


def test_uniform_n_covers_range():
    rng = np.random.default_rng(0)
    seen = {UniformN(2, 5).draw(rng) for _ in range(200)}
    assert seen == {2, 3, 4, 5}


# --- summary ------------------------------------------------------------------------


def test_summary_examples():
    s = summarize([1, 2, 3, 4, 5])
    assert (s.mean, s.median, s.iterations) == (3, 3, 5)
    c = summarize([7.5] * 11)
    assert c.mean == c.median == c.q1 == c.q99 == 7.5 and c.sd == 0
    h = summarize(list(range(1, 101)))
    assert (h.q5, h.q95, h.q1, h.q99) == (5, 95, 1, 99)
    assert summarize([BootstrapDraw(0, 2.0)]).sd == 0
    assert summarize([1, 2, 3, 4]).median == 2.5
    with pytest.raises(ValueError):
        summarize([])


@settings(max_examples=200, deadline=None)
@given(x=st.lists(st.floats(0, 1e9), min_size=1, max_size=200))
def test_summary_quantile_chain(x):
    s = summarize(x)
    assert s.q1 <= s.q5 <= s.median <= s.q95 <= s.q99
    assert s.sd >= 0
