"""Desk-scale validation battery.

Each ``criterion_<n>(seed)`` returns a :class:`CriterionResult` whose
``metrics`` are plain JSON data; :func:`run_all` runs them in order and
:func:`criterion_11` replays everything to check byte-identical metrics.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .beta import ReactiveParams, beta_paths, bias_test, leverage_eigen_test
from .correlation import (
    constrained_eigen,
    correlation_from_returns,
    correlation_matrix,
    eigen_decompose,
    fcl,
    fcl_significance,
)
from .diffusion import (
    baseline_wishart,
    fit_logfcl_ou,
    increment_spectrum,
    reduced_correlation,
    simulate_corr_diffusion,
)
from .epps import eigenvalue_scale_curve, fit_lag_law
from .io import dumps
from .leverage import LeverageParams
from .longhorizon import horizon_eigen_curve
from .market_data import (
    CriterionPanel,
    LeverageSpec,
    SyntheticMarketSpec,
    TrendSpec,
    equicorrelation_spec,
    factor_market_spec,
    simulate_market,
    simulate_market_detailed,
    trend_for_share,
)
from .maxvar import build_factor_set, fama_french_weights, maxvar_optimize, neutralize, rank_weights
from .ou import OuParams, simulate_ou
from .rng import child_seed, stream


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"criterion {self.number:2d} {status}  {self.title}  ({self.seconds:.1f}s)"


def _result(number, title, checks, metrics):
    metrics = dict(metrics)
    metrics["checks"] = {k: bool(v) for k, v in checks.items()}
    return CriterionResult(number, title, all(checks.values()), metrics)


def _random_correlation(rng, N):
    T = int(rng.integers(N + 5, 3 * N))
    R = rng.standard_normal((T, N)) @ (np.eye(N) + 0.3 * rng.standard_normal((N, N)))
    return correlation_from_returns(R)


# ---------------------------------------------------------------- criteria

def criterion_1(seed):
    N, rho, T = 500, 0.4, 100_000
    spec = equicorrelation_spec(N, rho, T, vol=0.01)
    lam_pop = eigen_decompose(spec.population_correlation()).eigenvalues
    exact = 1.0 + (N - 1) * rho
    panel = simulate_market(spec, child_seed(seed, "c1"))
    C = correlation_matrix(panel)
    lam1 = float(eigen_decompose(C).eigenvalues[0])
    del panel
    off = (C.matrix.sum() - N) / (N * (N - 1))
    m = {"lambda1_population": float(lam_pop[0]), "lambda1_closed_form": exact,
         "lambda1_sample": lam1, "relative_error_sample": abs(lam1 - exact) / exact,
         "mean_offdiagonal": float(off), "rest_population": float(lam_pop[1])}
    checks = {"population_exact": abs(lam_pop[0] - exact) < 1e-9,
              "sample_within_2pct": m["relative_error_sample"] < 0.02}
    return _result(1, "equicorrelation spectrum", checks, m)


def criterion_2(seed):
    rng = stream(seed, "c2")
    worst, worst_single = 0.0, 0.0
    for _ in range(100):
        N = int(rng.integers(5, 60))
        C = _random_correlation(rng, N)
        w = rng.standard_normal(N)
        es = eigen_decompose(C)
        p = es.eigenvectors.T @ (w / np.linalg.norm(w))
        worst = max(worst, abs(fcl(C, w) - float(np.sum(es.eigenvalues * p * p))))
        for i in range(N):
            worst_single = max(worst_single, abs(fcl(C, np.eye(N)[i]) - 1.0))
    m = {"max_identity_error": worst, "max_single_asset_error": worst_single}
    return _result(2, "FCL identity", {"identity": worst < 1e-10, "single_asset": worst_single < 1e-12}, m)


def criterion_3(seed):
    rng = stream(seed, "c3")
    N, K = 30, 8
    violations, worst_margin = 0, np.inf
    for _ in range(100):
        C = _random_correlation(rng, N)
        lam = np.linalg.eigvalsh(C)[::-1]
        red = constrained_eigen(C, rng.standard_normal((N, K)))
        lt = red.constrained_eigenvalues
        ok_hi = lt <= lam[:K] + 1e-10
        ok_lo = lt >= lam[N - K:] - 1e-10
        violations += int(np.sum(~ok_hi) + np.sum(~ok_lo))
        worst_margin = min(worst_margin, float(np.min(lam[:K] - lt)), float(np.min(lt - lam[N - K:])))
    C = _random_correlation(rng, N)
    full = eigen_decompose(C)
    red = constrained_eigen(C, np.eye(N))
    d_val = float(np.max(np.abs(full.eigenvalues - red.constrained_eigenvalues)))
    d_vec = float(np.max(np.abs(full.eigenvectors - red.constrained_eigenvectors_in_asset_space)))
    m = {"poincare_violations": violations, "min_interlacing_margin": worst_margin,
         "full_rank_eigenvalue_diff": d_val, "full_rank_eigenvector_diff": d_vec}
    checks = {"poincare": violations == 0, "full_rank": d_val < 1e-8 and d_vec < 1e-8}
    return _result(3, "constrained PCA", checks, m)


EPPS_HORIZONS = (10, 20, 30, 60, 120, 300, 600, 1200, 1800, 3600)


def criterion_4(seed):
    N, rho, tau = 50, 0.3, 60.0
    T = 30 * 24 * 360  # 30 days of 24h at 10 s
    lam_inf = 1.0 + (N - 1) * rho
    lagged = equicorrelation_spec(N, rho, T, vol=1e-3, step_seconds=10, lag_tau_seconds=tau)
    curve = eigenvalue_scale_curve(simulate_market(lagged, child_seed(seed, "c4", "lag")), EPPS_HORIZONS, 1)[0]
    fit = fit_lag_law(curve)
    flat = equicorrelation_spec(N, rho, T, vol=1e-3, step_seconds=10)
    c0 = eigenvalue_scale_curve(simulate_market(flat, child_seed(seed, "c4", "flat")), EPPS_HORIZONS, 1)[0]
    z_flat = (c0.values - lam_inf) / c0.standard_errors()
    m = {"lambda_inf_fit": fit.lambda_inf, "lambda_inf_true": lam_inf,
         "tau_fit_seconds": fit.tau_c_seconds, "tau_true_seconds": tau,
         "rms_relative_error": fit.rms_relative_error, "curve": curve.values,
         "flat_curve": c0.values, "flat_max_abs_z": float(np.max(np.abs(z_flat)))}
    checks = {"lambda_inf_10pct": abs(fit.lambda_inf / lam_inf - 1) < 0.10,
              "tau_10pct": abs(fit.tau_c_seconds / tau - 1) < 0.10,
              "rms_below_5pct": fit.rms_relative_error < 0.05,
              "flat_within_3se": m["flat_max_abs_z"] < 3.0}
    return _result(4, "lag law recovery", checks, m)


def rank_law_market(seed, N=300, T=1000, vol=0.01, market_share=0.3, style_share=0.05):
    """Market beta orthogonal to the criterion ranks plus one style factor
    whose loadings are exactly linear in the criterion rank."""
    rng = stream(seed, "rank-law")
    crit = rng.standard_normal(N)
    r = rank_weights(crit)
    u = rng.uniform(-1.0, 1.0, N)
    beta = 1.0 + 0.5 * (u - (u @ r) * r)
    B = np.column_stack([vol * math.sqrt(market_share) * beta, vol * math.sqrt(style_share * N) * r])
    idio = np.sqrt(vol ** 2 - np.sum(B * B, axis=1))
    spec = SyntheticMarketSpec(B, idio, T)
    return simulate_market(spec, child_seed(seed, "rank-law", "returns")), crit, beta


def criterion_5(seed, n_seeds=20):
    r2s, gaps_a, gaps_b = [], [], []
    for s in range(n_seeds):
        panel, crit, beta = rank_law_market(child_seed(seed, "c5", s))
        C = correlation_matrix(panel)
        p = maxvar_optimize(C, crit, betas=beta)
        rw = rank_weights(crit)
        r2s.append(float(np.corrcoef(p.weights, rw)[0, 1] ** 2))
        f_rank = fcl(C, neutralize(rw, beta))
        f_ff = fcl(C, neutralize(fama_french_weights(crit), beta))
        gaps_a.append(p.fcl_value - f_rank)
        gaps_b.append(f_rank - f_ff)
    m = {"r2": r2s, "min_r2": min(r2s), "maxvar_minus_rank": gaps_a, "rank_minus_quintile": gaps_b}
    checks = {"r2_099": min(r2s) >= 0.99, "maxvar_ge_rank": min(gaps_a) >= -1e-10,
              "rank_ge_quintile": min(gaps_b) >= -1e-10}
    return _result(5, "universal rank law", checks, m)


def criterion_6(seed, n_size=500, n_power=100, block_len=5, n_boot=199, alpha=0.05):
    N, T = 100, 250
    w = np.ones(N)
    rej = 0
    for i in range(n_size):
        R = stream(seed, "c6", "size", i).standard_normal((T, N))
        _, p = fcl_significance(R, w, block_len, n_boot, child_seed(seed, "c6", "boot", i))
        rej += p <= alpha
    spec = equicorrelation_spec(N, 2.0 / (N - 1), T)
    power = 0
    fcls = []
    for i in range(n_power):
        panel = simulate_market(spec, child_seed(seed, "c6", "power", i))
        f, p = fcl_significance(panel, w, block_len, n_boot, child_seed(seed, "c6", "pboot", i))
        power += p <= alpha
        fcls.append(f)
    m = {"size": rej / n_size, "power": power / n_power, "mean_fcl_alternative": float(np.mean(fcls)),
         "population_fcl_alternative": 1.0 + (N - 1) * 2.0 / (N - 1)}
    checks = {"size_3_7pct": 0.03 <= m["size"] <= 0.07, "power_090": m["power"] >= 0.9}
    return _result(6, "FCL significance test", checks, m)


def criterion_7(seed, n_seeds=50):
    N, T, rho = 50, 5000, 0.4
    trend = TrendSpec((trend_for_share(0.10, 20.0),), "factor")
    d_trend, d_flat = [], []
    for s in range(n_seeds):
        for spec_kw, out in ((dict(trend=trend), d_trend), ({}, d_flat)):
            spec = equicorrelation_spec(N, rho, T, **spec_kw)
            panel = simulate_market(spec, child_seed(seed, "c7", s))
            c = horizon_eigen_curve(panel, [1, 20], 1)[0]
            out.append(float(c.values[1] - c.values[0]))
    dt, df = np.array(d_trend), np.array(d_flat)
    zt = dt.mean() / (dt.std(ddof=1) / math.sqrt(len(dt)))
    zf = df.mean() / (df.std(ddof=1) / math.sqrt(len(df)))
    m = {"mean_growth_trend": float(dt.mean()), "z_trend": float(zt),
         "mean_growth_control": float(df.mean()), "z_control": float(zf)}
    return _result(7, "long-horizon growth", {"trend_3sigma": zt > 3.0, "control_flat": abs(zf) < 3.0}, m)


def leverage_market(n_assets=30, T=1000, params=LeverageParams(0.25, 0.3, 0.0), structure_seed=1,
                    shares=(0.3, 0.05), market_dispersion=0.5):
    base = factor_market_spec(n_assets, list(shares), T, vol=0.01, market_dispersion=market_dispersion,
                              structure_seed=structure_seed)
    return SyntheticMarketSpec(base.factor_loadings, base.idiosyncratic_vol, T,
                               leverage=LeverageSpec(params))


def criterion_8(seed, n_reps=200, window=250):
    lp = LeverageParams(0.25, 0.3, 0.0)
    spec = leverage_market(params=lp)
    rp = ReactiveParams.from_leverage(lp)
    d, bias_ols, bias_react = [], [], []
    for r in range(n_reps):
        mk = simulate_market_detailed(spec, child_seed(seed, "c8", r))
        tb = mk.true_betas[window:]
        e_ols = np.mean(np.abs(beta_paths(mk.panel, mk.index_returns, "ols", window)[window:-1] - tb))
        e_rea = np.mean(np.abs(beta_paths(mk.panel, mk.index_returns, "reactive", window, rp)[window:-1] - tb))
        d.append(e_ols - e_rea)
        bias_ols.append(bias_test(mk.panel, mk.index_returns, "momentum", "ols", window).residual_beta)
        bias_react.append(bias_test(mk.panel, mk.index_returns, "momentum", "reactive", window, rp).residual_beta)
    d = np.array(d)
    z = d.mean() / (d.std(ddof=1) / math.sqrt(len(d)))
    bo, br = float(np.mean(bias_ols)), float(np.mean(bias_react))
    m = {"mean_error_gap": float(d.mean()), "z_paired": float(z), "share_reactive_better": float(np.mean(d > 0)),
         "momentum_residual_beta_ols": bo, "momentum_residual_beta_reactive": br,
         "bias_reduction": 1.0 - abs(br) / abs(bo) if bo != 0 else 0.0}
    checks = {"dominance_95pct": z > 1.6448536269514722, "bias_halved": abs(br) <= 0.5 * abs(bo)}
    return _result(8, "reactive beta dominance", checks, m)


def criterion_9(seed):
    def run(ls, tag):
        spec = leverage_market(100, 2000, LeverageParams(systematic_slope=ls), structure_seed=2,
                               shares=(0.3, 0.08, 0.05), market_dispersion=0.0)
        mk = simulate_market_detailed(spec, child_seed(seed, "c9", tag))
        return leverage_eigen_test(mk.panel, mk.index_returns, 3, n_boot=500, seed=child_seed(seed, "c9", tag, "b"))
    lev, ctrl = run(0.5, "lev"), run(0.0, "ctrl")
    m = {"leverage": [r._asdict() for r in lev.ratios], "control": [r._asdict() for r in ctrl.ratios],
         "control_all_contain_one": not any(ctrl.excludes_one(k) for k in (1, 2, 3))}
    checks = {"lambda1_excludes_one": lev.ratios[0].ci_low > 1.0,
              "lambda2_contains_one": not lev.excludes_one(2), "lambda3_contains_one": not lev.excludes_one(3)}
    return _result(9, "first-mode-only leverage", checks, m)


def diffusion_setup(seed, n_criteria=13, n_sectors=10, N=240, T=1000):
    """Unit-norm factor portfolios (maxvar per criterion, market, sectors)
    built on a synthetic style market; 13 + 1 + 10 = 24 by default.

    Returns the factor FCLs, the correlation between factor portfolio
    returns and the overlap matrix ``F'F``.
    """
    shares = [0.25] + [0.015] * n_criteria
    spec = factor_market_spec(N, shares, T, vol=0.01, market_dispersion=0.3,
                              structure_seed=child_seed(seed, "diff-structure"))
    panel = simulate_market(spec, child_seed(seed, "diff-returns"))
    rng = stream(seed, "diff-criteria")
    B = np.asarray(spec.factor_loadings)
    crits = [CriterionPanel(["d0"], panel.assets, (B[:, k + 1] + 0.3 * np.std(B[:, k + 1]) * rng.standard_normal(N))[None],
                            name=f"style{k + 1}") for k in range(n_criteria)]
    sectors = np.arange(N) % n_sectors if n_sectors else None
    C = correlation_matrix(panel)
    F = build_factor_set(panel, crits, sectors, C=C)
    SF = F.T @ C.matrix @ F
    base = np.diag(SF).copy()
    R = SF / np.sqrt(np.outer(base, base))
    R = 0.5 * (R + R.T)
    np.fill_diagonal(R, 1.0)
    return base, R, F.T @ F


def matched_wishart(target_std, K, base, tau, seed, window=20, steps=1000):
    n = 1000
    for _ in range(3):
        spec = increment_spectrum(baseline_wishart(K, n, steps, seed, base=base, window=window), tau)
        n = max(window * int(round(n * (spec.std / target_std) ** 2 / window)), window * int(math.ceil(K / window)))
    path = baseline_wishart(K, n, steps, seed, base=base, window=window)
    return increment_spectrum(path, tau), n


def criterion_10(seed, n_steps=5000, window=20):
    base, R, H = diffusion_setup(child_seed(seed, "c10"))
    K = base.shape[0]
    logfcl = simulate_ou(OuParams(60.0, 0.3), 10_000, child_seed(seed, "c10", "fit"))
    fitted = fit_logfcl_ou(np.exp(logfcl))[0]
    ou = OuParams(fitted.relaxation_periods, fitted.stationary_std)
    path = simulate_corr_diffusion(base, ou, R, n_steps, child_seed(seed, "c10", "path"), gram=H)
    tau = window // 2
    spec = increment_spectrum(path, tau)
    trace_err = float(np.max(np.abs(spec.eigenvalues.sum(axis=1))))
    D = path.matrices[tau:] - path.matrices[:-tau]
    trace_direct = float(np.max(np.abs(np.trace(D, axis1=1, axis2=2))))
    mean_state = reduced_correlation(base, R, H)[0]
    wish, dof = matched_wishart(spec.std, K, mean_state, tau, child_seed(seed, "c10", "wishart"), window)
    m = {"K": K, "fitted_relaxation": fitted.relaxation_periods, "fitted_log_fcl_std": fitted.stationary_std,
         "max_trace_eigen_sum": trace_err, "max_trace_direct": trace_direct,
         "kurtosis_fcl": spec.excess_kurtosis, "kurtosis_wishart": wish.excess_kurtosis,
         "kurtosis_semicircle": -1.0, "std_fcl": spec.std, "std_wishart": wish.std, "wishart_dof": dof,
         "ks_fcl": spec.ks_distance, "ks_wishart": wish.ks_distance}
    checks = {"K_24": K == 24, "trace_zero": max(trace_err, trace_direct) < 1e-10,
              "fcl_gt_wishart": spec.excess_kurtosis > wish.excess_kurtosis,
              "wishart_gt_semicircle": wish.excess_kurtosis > -1.0,
              "scale_matched": abs(wish.std / spec.std - 1.0) < 0.1}
    return _result(10, "diffusion tails", checks, m)


CRITERIA = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
            6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10}


def run_criterion(n, seed):
    t0 = time.perf_counter()
    res = CRITERIA[n](seed)
    res.seconds = time.perf_counter() - t0
    return res


def criterion_11(seed, first_run, numbers=None):
    """Replay criteria with the same seed and compare serialized metrics."""
    numbers = sorted(first_run) if numbers is None else numbers
    mismatched = []
    for n in numbers:
        again = CRITERIA[n](seed)
        a = dumps({"passed": first_run[n].passed, "metrics": first_run[n].metrics})
        b = dumps({"passed": again.passed, "metrics": again.metrics})
        if a != b:
            mismatched.append(n)
    m = {"replayed": numbers, "mismatched": mismatched}
    return _result(11, "determinism", {"byte_identical": not mismatched}, m)


def run_all(seed, numbers=None, replay=True, echo=None):
    numbers = sorted(CRITERIA) if numbers is None else sorted(numbers)
    results = {}
    for n in numbers:
        results[n] = run_criterion(n, seed)
        if echo:
            echo(results[n].line())
    if replay:
        t0 = time.perf_counter()
        r11 = criterion_11(seed, results)
        r11.seconds = time.perf_counter() - t0
        results[11] = r11
        if echo:
            echo(r11.line())
    return results
