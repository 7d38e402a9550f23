import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corrkit.errors import ParameterError
from corrkit.longhorizon import (
    OuParams,
    autocorrelation_profile,
    horizon_eigen_curve,
    sample_acf,
    simulate_ou,
)
from corrkit.market_data import TrendSpec, equicorrelation_spec, simulate_market, trend_for_share
from corrkit.rng import child_seed

from conftest import make_panel


# ---------------------------------------------------------------------- OU

def test_zero_std_is_constant():
    x = simulate_ou(OuParams(10.0, 0.0, 2.5), 100, 0)
    assert np.all(x == 2.5)


def test_ou_closed_form_moments():
    theta = 60.0
    x = simulate_ou(OuParams(theta, 0.3, 1.0), 1_000_000, 3)
    acf = sample_acf(x, 1)
    assert acf[1] == pytest.approx(math.exp(-1 / theta), abs=0.01)
    assert np.var(x) == pytest.approx(0.09, rel=0.02)
    assert np.mean(x) == pytest.approx(1.0, abs=0.05)


def test_ou_matches_recursion():
    p = OuParams(7.0, 2.0, -1.0)
    x = simulate_ou(p, 50, 11, x0=3.0)
    a = math.exp(-1 / 7.0)
    # innovations implied by the exact discretization are standard normal draws
    eps = (x[1:] - (-1.0) - a * (x[:-1] + 1.0)) / (2.0 * math.sqrt(1 - a * a))
    from corrkit.rng import stream
    np.testing.assert_allclose(eps, stream(11, "ou").standard_normal(50)[1:], atol=1e-12)
    assert x[0] == 3.0


@settings(max_examples=20, deadline=None)
@given(theta=st.floats(1.0, 50.0), lag=st.integers(1, 5))
def test_ou_acf_no_step_bias(theta, lag):
    x = simulate_ou(OuParams(theta, 1.0), 200_000, 1)
    se = 4 * math.sqrt((1 + math.exp(-2 / theta)) / (1 - math.exp(-2 / theta)) / 200_000)
    assert sample_acf(x, lag)[lag] == pytest.approx(math.exp(-lag / theta), abs=se + 0.01)


def test_ou_parameter_validation():
    with pytest.raises(ParameterError):
        OuParams(0.0, 1.0)
    with pytest.raises(ParameterError):
        OuParams(1.0, -1.0)
    with pytest.raises(ParameterError):
        simulate_ou(OuParams(1.0, 1.0), 0, 0)


# ------------------------------------------------------------------ ACF

def test_acf_of_iid_panel(rng):
    p = make_panel(0.01 * rng.standard_normal((5000, 4)))
    prof = autocorrelation_profile(p, np.ones(4), 100)
    assert prof.acf[0] == 1.0
    inside = np.abs(prof.acf[1:]) < 3 * prof.stderr[1:]
    assert inside.mean() >= 0.95


def test_bartlett_errors(rng):
    x = rng.standard_normal((1000, 2))
    prof = autocorrelation_profile(x, [1.0, 0.0], 5)
    acf = sample_acf(x[:, 0], 5)
    expected = [math.sqrt((1 + 2 * np.sum(acf[1:k] ** 2)) / 1000) for k in range(1, 6)]
    np.testing.assert_allclose(prof.stderr[1:], expected, rtol=1e-12)


def test_lag_cap(rng):
    with pytest.raises(ParameterError):
        autocorrelation_profile(rng.standard_normal((100, 2)), [1, 1], 11)


def trend_market(seed, T, mode="factor", N=20, rho=0.4, share=0.1, theta=20.0):
    spec = equicorrelation_spec(N, rho, T, trend=TrendSpec((trend_for_share(share, theta),), mode))
    return simulate_market(spec, seed)


def test_trend_factor_has_positive_autocorrelation():
    p = trend_market(1, 10_000)
    prof = autocorrelation_profile(p, np.ones(p.N), 5)
    assert prof.acf[1] > 3 * prof.stderr[1]


# --------------------------------------------------------------- eigen curves

def growth(mode, seeds, T=5000):
    out = []
    for s in seeds:
        kw = {} if mode is None else dict(trend=TrendSpec((trend_for_share(0.1, 20.0),), mode))
        p = simulate_market(equicorrelation_spec(30, 0.4, T, **kw), child_seed(77, s))
        c = horizon_eigen_curve(p, [1, 20], 1)[0]
        out.append(c.values[1] - c.values[0])
    out = np.array(out)
    return out.mean() / (out.std(ddof=1) / math.sqrt(len(out)))


def test_shared_trend_grows_and_controls_stay_flat():
    assert growth("factor", range(20)) > 3
    assert abs(growth(None, range(20))) < 3
    # unshared trends never make the top eigenvalue grow; their extra
    # idiosyncratic variance at long horizons can only dilute correlations
    assert growth("idiosyncratic", range(20)) < 3


def test_curve_saturates_beyond_relaxation():
    theta = 20.0
    num, den = [], []
    for s in range(10):
        p = trend_market(child_seed(5, s), 30_000, N=30, theta=theta)
        c = horizon_eigen_curve(p, [5 * theta, 10 * theta], 1)[0]
        num.append(c.values[0])
        den.append(c.values[1])
    assert 0.9 <= np.mean(num) / np.mean(den) <= 1.1


def test_horizons_in_days():
    p = trend_market(0, 400)
    c = horizon_eigen_curve(p, [1, 2, 5], 2)
    np.testing.assert_array_equal(c[0].horizons_seconds, [86400, 172800, 432000])
    assert len(c) == 2
