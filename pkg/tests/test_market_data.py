import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corrkit.errors import (
    InsufficientDataError,
    ParameterError,
    ParseError,
    RankabilityError,
    SpacingError,
    ValidationError,
)
from corrkit.market_data import (
    CriterionPanel,
    LeverageSpec,
    ReturnPanel,
    SyntheticMarketSpec,
    TrendSpec,
    aggregate_returns,
    equicorrelation_spec,
    factor_market_spec,
    load_criteria,
    load_return_panel,
    simulate_market,
    simulate_market_detailed,
    trend_for_share,
    write_return_panel,
)
from corrkit.correlation import correlation_from_returns
from corrkit.epps import lag_kernel_ratio

from conftest import make_panel


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


# ------------------------------------------------------------------ loading

def test_load_small_panel(tmp_path):
    p = write(tmp_path, "r.csv", "timestamp,A,B\n60,0.01,0.02\n120,-0.01,0.0\n180,0.03,0.01\n")
    panel = load_return_panel(p)
    assert (panel.T, panel.N, panel.period_seconds) == (3, 2, 60)
    assert panel.assets == ("A", "B")
    np.testing.assert_array_equal(panel.returns[:, 0], [0.01, -0.01, 0.03])


def test_gap_in_timestamps_is_spacing_error(tmp_path):
    p = write(tmp_path, "r.csv", "timestamp,A,B\n60,0.01,0.02\n120,0.0,0.0\n240,0.03,0.01\n")
    with pytest.raises(SpacingError):
        load_return_panel(p)


def test_drop_asset_policy_removes_sparse_column(tmp_path):
    rows = ["timestamp,A,B,C"]
    for t in range(1, 11):
        b = "" if t % 2 else "0.01"
        rows.append(f"{60 * t},0.01,{b},{0.002 * t}")
    p = write(tmp_path, "r.csv", "\n".join(rows) + "\n")
    panel = load_return_panel(p, "drop_asset")
    assert panel.assets == ("A", "C")
    zf = load_return_panel(p, "zero_fill")
    assert zf.N == 3
    assert np.count_nonzero(zf.returns[:, 1] == 0.0) == 5


def test_drop_asset_threshold_is_ten_percent(tmp_path):
    rows = ["timestamp,A,B,C"]
    for t in range(1, 11):
        b = "" if t == 3 else "0.01"            # 10% missing: kept, zero-filled
        c = "" if t in (3, 4) else "0.01"       # 20% missing: dropped
        rows.append(f"{60 * t},0.01,{b},{c}")
    panel = load_return_panel(write(tmp_path, "r.csv", "\n".join(rows) + "\n"))
    assert panel.assets == ("A", "B")
    assert panel.returns[2, 1] == 0.0


def test_malformed_value_reports_row(tmp_path):
    p = write(tmp_path, "r.csv", "timestamp,A,B\n60,0.01,0.02\n120,abc,0.0\n")
    with pytest.raises(ParseError) as exc:
        load_return_panel(p)
    assert exc.value.row == 3


def test_unknown_missing_policy(tmp_path):
    p = write(tmp_path, "r.csv", "timestamp,A,B\n60,0.01,0.02\n120,0.0,0.0\n")
    with pytest.raises(ParameterError):
        load_return_panel(p, "impute")


def test_write_then_load_roundtrip(tmp_path, rng):
    panel = make_panel(rng.standard_normal((20, 4)) * 0.01)
    write_return_panel(panel, tmp_path / "p.csv")
    assert load_return_panel(tmp_path / "p.csv") == panel


def test_criteria_readback(tmp_path):
    c = load_criteria(write(tmp_path, "book.csv", "date,A,B,C\n2020-01-01,1.0,2.0,3.0\n"))
    assert c.name == "book"
    np.testing.assert_array_equal(c.row(), [1.0, 2.0, 3.0])


def test_criteria_all_equal_row_is_unrankable(tmp_path):
    with pytest.raises(RankabilityError):
        load_criteria(write(tmp_path, "c.csv", "date,A,B,C\nd1,1,2,3\nd2,4,4,4\n"))


def test_criteria_fixture_shape(tmp_path):
    text = "date,A,B,C,D,E\nd1,1,2,3,4,5\nd2,5,,3,2,1\n"
    c = load_criteria(write(tmp_path, "c.csv", text))
    assert c.values.shape == (2, 5)
    assert np.isnan(c.values[1, 1])


def test_panel_invariants():
    with pytest.raises(InsufficientDataError):
        make_panel(np.zeros((1, 3)))
    with pytest.raises(InsufficientDataError):
        make_panel(np.zeros((5, 1)))
    with pytest.raises(ValidationError):
        make_panel(np.array([[0.0, np.nan], [0.0, 0.0]]))
    with pytest.raises(SpacingError):
        ReturnPanel([1, 2, 4], 1, ["a", "b"], np.zeros((3, 2)))
    p = make_panel(np.zeros((3, 2)))
    with pytest.raises(ValueError):
        p.returns[0, 0] = 1.0


def test_criterion_panel_shape_check():
    with pytest.raises(ValidationError):
        CriterionPanel(["d"], ["a", "b"], np.array([[1.0, 2.0, 3.0]]))


# -------------------------------------------------------------- aggregation

def test_aggregate_identity_and_compounding():
    p = make_panel(np.array([[0.1, 0.0], [0.1, 0.0], [0.5, 0.5]]))
    assert aggregate_returns(p, 1) == p
    a = aggregate_returns(make_panel(np.array([[0.1, 0.0], [0.1, 0.0], [0.0, 0.0], [0.0, 0.0]])), 2)
    assert a.T == 2 and a.period_seconds == 120
    assert a.returns[0, 0] == pytest.approx(0.21, abs=1e-15)
    np.testing.assert_array_equal(a.timestamps, [120, 240])


def test_aggregate_errors():
    p = make_panel(np.zeros((5, 2)))
    with pytest.raises(InsufficientDataError):
        aggregate_returns(p, 6)
    with pytest.raises(ParameterError):
        aggregate_returns(p, 0)


@settings(max_examples=40, deadline=None)
@given(m=st.integers(1, 4), n=st.integers(1, 4), T=st.integers(16, 60), seed=st.integers(0, 2 ** 32))
def test_aggregate_composes(m, n, T, seed):
    R = np.random.default_rng(seed).uniform(-0.05, 0.05, (T, 3))
    p = make_panel(R)
    if T // (m * n) < 2:
        return
    two = aggregate_returns(aggregate_returns(p, m), n)
    one = aggregate_returns(p, m * n)
    np.testing.assert_array_equal(two.timestamps, one.timestamps)
    assert two.period_seconds == one.period_seconds
    np.testing.assert_allclose(two.returns, one.returns, rtol=1e-12, atol=1e-15)


def test_aggregation_of_iid_keeps_correlation():
    rho = 0.3
    spec = equicorrelation_spec(2, rho, 50_000, vol=0.01)
    p = simulate_market(spec, 4)
    c1 = correlation_from_returns(p.returns)[0, 1]
    c10 = correlation_from_returns(aggregate_returns(p, 10).returns)[0, 1]
    # standard error of the difference, dominated by the aggregated sample
    se = (1 - rho ** 2) * np.sqrt(1 / 50_000 + 1 / 5_000)
    assert abs(c1 - c10) < 3 * se


# -------------------------------------------------------------- generators

def test_equicorrelation_population_spectrum():
    spec = equicorrelation_spec(500, 0.4, 10)
    ev = np.linalg.eigvalsh(spec.population_correlation())
    assert ev[-1] == pytest.approx(200.6, abs=1e-9)
    np.testing.assert_allclose(ev[:-1], 0.6, atol=1e-9)


def test_equicorrelation_sample_mean_correlation():
    p = simulate_market(equicorrelation_spec(100, 0.4, 20_000), 7)
    C = correlation_from_returns(p.returns)
    off = C[~np.eye(100, dtype=bool)]
    assert abs(off.mean() - 0.4) < 0.01


def test_simulate_is_pure_function_of_seed():
    spec = factor_market_spec(8, [0.3, 0.1], 200)
    a, b, c = simulate_market(spec, 1), simulate_market(spec, 1), simulate_market(spec, 2)
    assert a == b
    assert not np.array_equal(a.returns, c.returns)
    for extra in (dict(lag_tau_seconds=60.0, step_seconds=10),
                  dict(trend=TrendSpec((trend_for_share(0.1, 20.0),))),
                  dict(leverage=LeverageSpec())):
        s = factor_market_spec(8, [0.3, 0.1], 300, **extra)
        assert simulate_market(s, 5) == simulate_market(s, 5)


def test_per_asset_streams_do_not_depend_on_panel_width():
    small = SyntheticMarketSpec(np.full((3, 1), 0.005), np.full(3, 0.01), 100)
    big = SyntheticMarketSpec(np.full((6, 1), 0.005), np.full(6, 0.01), 100)
    np.testing.assert_array_equal(simulate_market(small, 9).returns, simulate_market(big, 9).returns[:, :3])


def test_spec_validation():
    with pytest.raises(ValidationError):
        SyntheticMarketSpec(np.ones((3, 1)), np.array([1.0, 0.0, 1.0]), 10)
    with pytest.raises(ValidationError):
        SyntheticMarketSpec(np.ones((3, 1)), np.ones(3), 10, lag_tau_seconds=0.0)
    with pytest.raises(ValidationError):
        SyntheticMarketSpec(np.ones((3, 1)), np.ones(3), 10, lag_tau_seconds=5.0, leverage=LeverageSpec())
    with pytest.raises(ParameterError):
        factor_market_spec(5, [0.7, 0.3], 10)


def test_lagged_correlation_rises_with_scale():
    tau, step = 60.0, 10
    spec = factor_market_spec(2, [0.5], 60_000, step_seconds=step, lag_tau_seconds=tau)
    p = simulate_market(spec, 3)
    c_fast = correlation_from_returns(p.returns)[0, 1]
    c_slow = correlation_from_returns(aggregate_returns(p, 60).returns)[0, 1]
    assert c_fast < c_slow
    # the generator's population law: ρ(T) = g(T/τ) ρ∞
    assert c_fast == pytest.approx(0.5 * lag_kernel_ratio(step / tau), abs=0.03)
    assert c_slow == pytest.approx(0.5 * lag_kernel_ratio(600 / tau), abs=0.05)


def test_leverage_outputs_are_aligned():
    spec = factor_market_spec(6, [0.3, 0.05], 400, leverage=LeverageSpec())
    mk = simulate_market_detailed(spec, 2)
    assert mk.index_returns.shape == (400,)
    assert mk.true_betas.shape == (400, 6)
    assert np.all(np.isfinite(mk.true_betas))
    assert np.all(mk.panel.timestamps == 86400 * np.arange(1, 401))
