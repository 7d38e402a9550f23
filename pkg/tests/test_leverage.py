import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corrkit.errors import ParameterError
from corrkit.leverage import MOD_BOUNDS, LeverageFilter, LeverageParams, decay, ewma_before, leverage_states


def test_decay_halflife():
    assert decay(10.0) ** 10 == pytest.approx(0.5, rel=1e-12)


def test_ewma_before_is_predictive():
    x = np.array([1.0, 2.0, 3.0])
    e = ewma_before(x, 0.5, 0.0)
    np.testing.assert_allclose(e, [0.0, 0.5, 1.25, 2.125])


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), ls=st.floats(0, 1), li=st.floats(0, 1), ev=st.floats(0, 2))
def test_filter_matches_vectorized_states(seed, ls, li, ev):
    rng = np.random.default_rng(seed)
    T, N = 80, 4
    x = 0.01 * rng.standard_normal(T)
    R = 0.8 * x[:, None] + 0.01 * rng.standard_normal((T, N))
    p = LeverageParams(ls, li, ev, 30.0, 5.0, 8.0)
    st_ = leverage_states(x, R, p)
    f = LeverageFilter(p, st_.index_var[0], st_.asset_var[0])
    for t in range(T + 1):
        s, sp, el = f.current()
        assert s == pytest.approx(st_.systematic[t], rel=1e-10)
        np.testing.assert_allclose(sp, st_.specific[t], rtol=1e-10)
        np.testing.assert_allclose(el, st_.elasticity[t], rtol=1e-10)
        if t < T:
            f.update(x[t], R[t])


def test_modulations_are_clipped():
    x = np.r_[np.full(50, 0.001), np.full(20, -0.2)]
    R = np.c_[x, -x]
    st_ = leverage_states(x, R, LeverageParams(50.0, 50.0, 2.0))
    for m in (st_.systematic, st_.specific, st_.elasticity):
        assert np.all(m >= MOD_BOUNDS[0]) and np.all(m <= MOD_BOUNDS[1])


def test_zero_slopes_give_unit_modulation():
    rng = np.random.default_rng(3)
    x = rng.standard_normal(40)
    st_ = leverage_states(x, rng.standard_normal((40, 3)), LeverageParams())
    assert np.all(st_.asset_modulation == 1.0)


def test_parameter_validation():
    with pytest.raises(ParameterError):
        LeverageParams(elasticity=3.0)
    with pytest.raises(ParameterError):
        LeverageParams(vol_halflife=0.0)
