import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corrkit.acceptance import leverage_market
from corrkit.beta import (
    ReactiveParams,
    beta_paths,
    bias_test,
    estimate_beta,
    leverage_eigen_test,
    quantile_slopes,
    reactive_normalize,
    reactive_normalize_arrays,
    regime_split,
)
from corrkit.errors import AlignmentError, DegenerateIndexError, InsufficientDataError, ParameterError
from corrkit.leverage import LeverageParams, decay, leverage_states
from corrkit.market_data import SyntheticMarketSpec, factor_market_spec, simulate_market_detailed
from corrkit.rng import child_seed

from conftest import make_panel


def ewma_var(x, h, x0):
    """Loop-form predictive EWMA of squares."""
    a = decay(h)
    out = [x0]
    for v in x:
        out.append(a * out[-1] + (1 - a) * v * v)
    return np.array(out)


def ols(y, x):
    X = np.c_[np.ones_like(x), x]
    return np.linalg.lstsq(X, y, rcond=None)[0][1]


# ------------------------------------------------------------ estimators

@pytest.mark.parametrize("method", ["ols", "reactive", "trimean_quantile"])
def test_exact_multiple_of_index(rng, method):
    x = 0.01 * rng.standard_normal(300)
    panel = make_panel(np.c_[2 * x, 0.5 * x])
    params = ReactiveParams(0.3, 0.3, 0.5)
    est = estimate_beta(panel, x, method, 250, params)
    tol = 1e-10 if method != "trimean_quantile" else 1e-6
    assert est[0].beta == pytest.approx(2.0, abs=tol)
    assert est[1].beta == pytest.approx(0.5, abs=tol)
    assert est[0].asset == "A0" and est[0].method == method and est[0].window_periods == 250


@settings(max_examples=30, deadline=None)
@given(b=st.floats(-5, 5), seed=st.integers(0, 2 ** 32 - 1))
def test_ols_linear_in_response(b, seed):
    rng = np.random.default_rng(seed)
    T = 500
    x = rng.standard_normal(T)
    y = b * x + rng.standard_normal(T)
    est = estimate_beta(make_panel(np.c_[y, rng.standard_normal(T)]), x, "ols")
    se = 1 / math.sqrt(np.sum((x - x.mean()) ** 2))
    assert abs(est[0].beta - b) < 3.5 * se
    assert est[0].beta == pytest.approx(ols(y, x), abs=1e-12)


def test_independent_asset_has_zero_beta(rng):
    T = 2000
    x = rng.standard_normal(T)
    y = rng.standard_normal((T, 3))
    se = 1 / math.sqrt(np.sum((x - x.mean()) ** 2))
    for method in ("ols", "trimean_quantile", "reactive"):
        for e in estimate_beta(make_panel(y), x, method):
            assert abs(e.beta) < 3.5 * se * (1.3 if method == "trimean_quantile" else 1.0)


def test_quantile_median_of_symmetric_noise(rng):
    x = rng.standard_normal(4000)
    y = 1.5 * x + rng.laplace(size=4000)
    assert quantile_slopes(y, x, 0.5)[0] == pytest.approx(1.5, abs=0.05)
    # the 75% slope equals the median slope under homoskedastic noise
    assert quantile_slopes(y, x, 0.75)[0] == pytest.approx(1.5, abs=0.1)


def test_reactive_with_zero_parameters_is_vol_standardized_ols(rng):
    T, W = 600, 200
    x = 0.01 * rng.standard_normal(T)
    R = np.c_[1.3 * x + 0.01 * rng.standard_normal(T), 0.01 * rng.standard_normal(T)]
    p = ReactiveParams()
    est = estimate_beta(make_panel(R), x, "reactive", W, p)
    warm = int(round(p.vol_halflife_periods))
    vI = ewma_var(x, p.vol_halflife_periods, np.mean(x[:warm] ** 2))
    for j in range(2):
        v = ewma_var(R[:, j], p.vol_halflife_periods, np.mean(R[:warm, j] ** 2))
        nI, ni = x / np.sqrt(vI[:-1]), R[:, j] / np.sqrt(v[:-1])
        expected = ols(ni[-W:], nI[-W:]) * math.sqrt(v[-1] / vI[-1])
        assert est[j].beta == pytest.approx(expected, abs=1e-8)


@pytest.mark.parametrize("method", ["ols", "reactive", "trimean_quantile"])
def test_index_rescaling_equivariance(rng, method):
    x = 0.01 * rng.standard_normal(400)
    R = np.c_[0.9 * x, 1.2 * x] + 0.01 * rng.standard_normal((400, 2))
    p = ReactiveParams(0.2, 0.3, 0.4)
    b1 = [e.beta for e in estimate_beta(make_panel(R), x, method, 300, p)]
    b2 = [e.beta for e in estimate_beta(make_panel(R), 2 * x, method, 300, p)]
    tol = 1e-9 if method != "trimean_quantile" else 1e-5
    np.testing.assert_allclose(np.array(b2) * 2, b1, atol=tol)


def test_beta_paths_are_predictive(rng):
    T, W = 120, 40
    x = rng.standard_normal(T)
    R = np.c_[x + rng.standard_normal(T), rng.standard_normal(T)]
    B = beta_paths(make_panel(R), x, "ols", W)
    assert B.shape == (T + 1, 2)
    assert np.all(np.isnan(B[:W]))
    for t in (W, 77, T):
        assert B[t, 0] == pytest.approx(ols(R[t - W: t, 0], x[t - W: t]), abs=1e-10)
    Q = beta_paths(make_panel(R), x, "trimean_quantile", W, dates=[60])
    assert np.isfinite(Q[60]).all() and np.isnan(Q[61]).all()


def test_input_errors(rng):
    p = make_panel(rng.standard_normal((50, 2)))
    with pytest.raises(AlignmentError):
        estimate_beta(p, np.ones(49))
    with pytest.raises(DegenerateIndexError):
        estimate_beta(p, np.ones(50))
    with pytest.raises(ParameterError):
        estimate_beta(p, rng.standard_normal(50), "ols", 60)
    with pytest.raises(ParameterError):
        estimate_beta(p, rng.standard_normal(50), "garch")


# ----------------------------------------------------------- normalization

def test_normalized_variance_is_unit(rng):
    T = 10_000
    x = 0.01 * rng.standard_normal(T)
    R = 0.02 * rng.standard_normal((T, 3))
    n = reactive_normalize(make_panel(R), x, ReactiveParams())
    np.testing.assert_allclose(np.var(n.returns[500:], axis=0), 1.0, rtol=0.05)


def test_normalization_absorbs_specific_leverage():
    lp = LeverageParams(0.0, 0.3, 0.0)
    spec = leverage_market(params=lp, T=3000)
    rp = ReactiveParams.from_leverage(lp)
    raw_spread, norm_spread = [], []
    for s in range(3):
        mk = simulate_market_detailed(spec, child_seed(21, s))
        R, x = mk.panel.returns, mk.index_returns
        nz = reactive_normalize_arrays(R, x, rp)
        u = leverage_states(x, R, lp).underperformance_z[:-1]
        for j in range(R.shape[1]):
            hi = u[:, j] > np.median(u[300:, j])
            hi[:300] = False
            lo = ~hi
            lo[:300] = False
            b = [ols(R[m, j], x[m]) for m in (hi, lo)]
            n = [ols(nz.returns[m, j], nz.index[m]) for m in (hi, lo)]
            raw_spread.append(abs(b[0] - b[1]) / abs(np.mean(b)))
            norm_spread.append(abs(n[0] - n[1]) / abs(np.mean(n)))
    # beta rises with underperformance in raw returns; normalization removes it
    assert np.mean(raw_spread) > 0.2
    assert np.mean(norm_spread) <= 0.5 * np.mean(raw_spread)


# ------------------------------------------------------------- bias tests

def no_leverage_market(seed, T=600, N=30):
    base = factor_market_spec(N, [0.3, 0.05], T, market_dispersion=0.5, structure_seed=1)
    spec = SyntheticMarketSpec(base.factor_loadings, base.idiosyncratic_vol, T)
    from corrkit.market_data import simulate_market
    panel = simulate_market(spec, seed)
    return panel, panel.returns.mean(axis=1)


def test_random_portfolio_has_no_residual_beta():
    hits = 0
    for r in range(100):
        panel, x = no_leverage_market(child_seed(31, r))
        rep = bias_test(panel, x, "random", "ols", 250, seed=r, rebalance=5)
        hits += abs(rep.t_stat) < 2
    assert hits >= 90


def test_momentum_bias_under_specific_leverage():
    lp = LeverageParams(0.25, 0.3, 0.0)
    spec = leverage_market(params=lp)
    rp = ReactiveParams.from_leverage(lp)
    ols_b, rea_b, neg = [], [], 0
    for r in range(15):
        mk = simulate_market_detailed(spec, child_seed(41, r))
        o = bias_test(mk.panel, mk.index_returns, "momentum", "ols", 250)
        ols_b.append(o.residual_beta)
        neg += o.t_stat < -2
        rea_b.append(bias_test(mk.panel, mk.index_returns, "momentum", "reactive", 250, rp).residual_beta)
    assert neg > 15 / 2
    assert abs(np.mean(rea_b)) <= 0.5 * abs(np.mean(ols_b))


def test_bias_test_needs_criteria_for_proxies():
    panel, x = no_leverage_market(0)
    from corrkit.errors import ValidationError
    with pytest.raises(ValidationError):
        bias_test(panel, x, "value_proxy")
    with pytest.raises(ParameterError):
        bias_test(panel, x, "carry")


# ------------------------------------------------------------- regimes

def test_regime_partition_sizes():
    x = np.sin(np.arange(1000) * 0.37)
    down, up = regime_split(x, 0.25, window=1)
    assert len(down) == len(up) == 250
    assert set(down).isdisjoint(up)
    assert np.max(x[down]) <= np.min(x[up])
    d2, u2 = regime_split(x, 0.1, window=5)
    assert len(d2) == len(u2) == 100


def test_no_leverage_ratios_contain_one():
    spec = leverage_market(100, 2000, LeverageParams(), structure_seed=2, shares=(0.3, 0.08, 0.05),
                           market_dispersion=0.0)
    mk = simulate_market_detailed(spec, 9)
    rep = leverage_eigen_test(mk.panel, mk.index_returns, 3, n_boot=300, seed=1)
    assert not any(rep.excludes_one(k) for k in (1, 2, 3))
    assert rep.n_down == rep.n_up == 500


def test_leverage_eigen_needs_long_panel(rng):
    with pytest.raises(InsufficientDataError):
        leverage_eigen_test(make_panel(rng.standard_normal((499, 3))), rng.standard_normal(499), 2)
