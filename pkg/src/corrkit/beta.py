"""Beta estimation under leverage effects, bias tests and regime eigenvalues.

Reactive normalization divides the index return by ``sqrt(v_I) L`` and each
asset return by ``sqrt(v_i) L S_i E_i`` (see :mod:`corrkit.leverage`). On
normalized returns the slope is nearly constant; the current beta is that
slope rescaled by ``sqrt(v_i / v_I) S_i E_i``.
"""

from dataclasses import dataclass
from typing import List, NamedTuple

import numpy as np

from .correlation import correlation_from_returns
from .errors import (
    AlignmentError,
    DegenerateIndexError,
    InsufficientDataError,
    ParameterError,
    ValidationError,
)
from .leverage import LeverageParams, leverage_states
from .maxvar import neutralize, rank_weights
from .rng import stream

METHODS = ("ols", "reactive", "trimean_quantile")
STRATEGIES = ("momentum", "low_beta", "size_proxy", "value_proxy", "random")
QR_MAX_ITER = 200
QR_TOL = 1e-8


@dataclass(frozen=True)
class ReactiveParams:
    systematic_leverage_slope: float = 0.0
    specific_leverage_slope: float = 0.0
    elasticity_exponent: float = 0.0
    vol_halflife_periods: float = 120.0
    fast_vol_halflife_periods: float = 20.0
    zscore_halflife_periods: float = 20.0

    def __post_init__(self):
        self.leverage_params()  # validates

    def leverage_params(self):
        return LeverageParams(
            self.systematic_leverage_slope, self.specific_leverage_slope, self.elasticity_exponent,
            self.vol_halflife_periods, self.fast_vol_halflife_periods, self.zscore_halflife_periods,
        )

    @classmethod
    def from_leverage(cls, p):
        return cls(p.systematic_slope, p.specific_slope, p.elasticity,
                   p.vol_halflife, p.fast_vol_halflife, p.zscore_halflife)


@dataclass(frozen=True)
class BetaEstimate:
    asset: str
    beta: float
    method: str
    window_periods: int


def _inputs(panel, index_returns):
    R = panel.returns if hasattr(panel, "returns") else np.asarray(panel, dtype=float)
    x = np.asarray(index_returns, dtype=float)
    if x.ndim != 1 or x.shape[0] != R.shape[0]:
        raise AlignmentError(f"index has {x.shape[0] if x.ndim == 1 else x.shape} periods, panel has {R.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise ValidationError("index returns must be finite")
    if np.ptp(x) == 0:
        raise DegenerateIndexError("index returns have zero variance")
    return R, x


@dataclass(frozen=True, eq=False)
class Normalized:
    index: np.ndarray
    returns: np.ndarray
    scale: np.ndarray  # (T + 1, N) factor turning a normalized slope into a beta


def reactive_normalize_arrays(R, x, params):
    st = leverage_states(x, R, params.leverage_params())
    sI = np.sqrt(st.index_var)
    si = np.sqrt(st.asset_var)
    mod = st.specific * st.elasticity
    nI = x / (sI[:-1] * st.systematic[:-1])
    nR = R / (si[:-1] * st.systematic[:-1, None] * mod[:-1])
    scale = si / sI[:, None] * mod
    return Normalized(nI, nR, scale)


def reactive_normalize(panel, index_returns, params):
    """Panel of reactive-volatility normalized returns.

    With every slope and exponent at zero this is plain EWMA-vol
    standardization.
    """
    R, x = _inputs(panel, index_returns)
    return panel.with_returns(reactive_normalize_arrays(R, x, params).returns)


def _window_slopes(y, x, W):
    """OLS slopes (with intercept) of ``y`` on ``x`` over each trailing window.

    Row ``t`` uses periods ``t - W .. t - 1``; rows ``< W`` are NaN.
    """
    T = x.shape[0]
    if y.ndim == 1:
        y = y[:, None]
    # centre globally first so the cumulative sums stay well conditioned
    x = x - x.mean()
    y = y - y.mean(axis=0)
    cx = np.concatenate([[0.0], np.cumsum(x)])
    cxx = np.concatenate([[0.0], np.cumsum(x * x)])
    cy = np.vstack([np.zeros(y.shape[1]), np.cumsum(y, axis=0)])
    cxy = np.vstack([np.zeros(y.shape[1]), np.cumsum(x[:, None] * y, axis=0)])
    out = np.full((T + 1, y.shape[1]), np.nan)
    e = np.arange(W, T + 1)
    s = e - W
    sx = cx[e] - cx[s]
    sxx = cxx[e] - cxx[s]
    sy = cy[e] - cy[s]
    sxy = cxy[e] - cxy[s]
    vx = sxx - sx * sx / W
    if np.any(vx <= 0):
        raise DegenerateIndexError("index returns have zero variance in a window")
    out[W:] = (sxy - sx[:, None] * sy / W) / vx[:, None]
    return out


def _ols_slope(y, x):
    xc = x - x.mean()
    vx = float(xc @ xc)
    if vx <= 0:
        raise DegenerateIndexError("index returns have zero variance in the window")
    yc = y - y.mean(axis=0)
    return (xc @ yc) / vx


def quantile_slopes(y, x, tau, max_iter=QR_MAX_ITER, tol=QR_TOL):
    """Quantile-regression slopes (with intercept) of each column of ``y`` on
    ``x`` by iteratively reweighted least squares."""
    y = np.atleast_2d(np.asarray(y, dtype=float).T).T
    x = np.asarray(x, dtype=float)
    n, N = y.shape
    scale = np.maximum(np.std(y, axis=0), np.std(x) * 1e-3) + 1e-300
    eps = 1e-9 * scale
    b = _ols_slope(y, x)
    a = y.mean(axis=0) - b * x.mean()
    for _ in range(int(max_iter)):
        r = y - a - np.outer(x, b)
        c = np.where(r >= 0, tau, 1.0 - tau)
        w = c / np.maximum(np.abs(r), eps)
        sw = w.sum(axis=0)
        mx = (w * x[:, None]).sum(axis=0) / sw
        my = (w * y).sum(axis=0) / sw
        dx = x[:, None] - mx
        vx = (w * dx * dx).sum(axis=0)
        if np.any(vx <= 0):
            raise DegenerateIndexError("index returns have zero weighted variance")
        b_new = (w * dx * (y - my)).sum(axis=0) / vx
        a_new = my - b_new * mx
        done = np.max(np.abs(b_new - b) / (1.0 + np.abs(b))) < tol
        a, b = a_new, b_new
        if done:
            break
    return b


def trimean_slopes(y, x):
    return (0.25 * quantile_slopes(y, x, 0.25) + 0.5 * quantile_slopes(y, x, 0.5)
            + 0.25 * quantile_slopes(y, x, 0.75))


def estimate_beta(panel, index_returns, method="ols", window=None, params=None) -> List[BetaEstimate]:
    """Betas at the end of the panel from the last ``window`` periods.

    ``reactive`` regresses reactive-normalized returns and rescales by the
    current volatility ratio and modulations; ``trimean_quantile`` combines
    the 25/50/75% quantile-regression slopes with weights 1/4, 1/2, 1/4.
    """
    R, x = _inputs(panel, index_returns)
    T = R.shape[0]
    W = T if window is None else int(window)
    if not 2 < W <= T:
        raise ParameterError(f"window must lie in (2, T={T}]")
    if method == "ols":
        b = _ols_slope(R[-W:], x[-W:])
    elif method == "trimean_quantile":
        b = trimean_slopes(R[-W:], x[-W:])
    elif method == "reactive":
        nz = reactive_normalize_arrays(R, x, params or ReactiveParams())
        b = _ols_slope(nz.returns[-W:], nz.index[-W:]) * nz.scale[-1]
    else:
        raise ParameterError(f"unknown beta method {method!r}")
    assets = getattr(panel, "assets", None) or [str(i) for i in range(R.shape[1])]
    return [BetaEstimate(a, float(v), method, W) for a, v in zip(assets, b)]


def beta_paths(panel, index_returns, method="ols", window=250, params=None, dates=None):
    """Predictive betas: row ``t`` uses only periods ``< t``.

    Returns a ``(T + 1, N)`` array (NaN before ``window``). For the quantile
    method only the rows in ``dates`` are filled, since each is a full fit.
    """
    R, x = _inputs(panel, index_returns)
    T = R.shape[0]
    W = int(window)
    if not 2 < W <= T:
        raise ParameterError(f"window must lie in (2, T={T}]")
    if method == "ols":
        return _window_slopes(R, x, W)
    if method == "reactive":
        nz = reactive_normalize_arrays(R, x, params or ReactiveParams())
        return _window_slopes(nz.returns, nz.index, W) * nz.scale
    if method == "trimean_quantile":
        out = np.full((T + 1, R.shape[1]), np.nan)
        for t in (range(W, T + 1) if dates is None else dates):
            out[t] = trimean_slopes(R[t - W: t], x[t - W: t])
        return out
    raise ParameterError(f"unknown beta method {method!r}")


class BiasReport(NamedTuple):
    strategy: str
    beta_method: str
    residual_beta: float
    t_stat: float
    n_periods: int


def _regress(p, x):
    n = len(p)
    xc = x - x.mean()
    vx = float(xc @ xc)
    b = float(xc @ (p - p.mean())) / vx
    res = p - p.mean() - b * xc
    se = np.sqrt(float(res @ res) / (n - 2) / vx)
    return b, (b / se if se > 0 else 0.0)


def strategy_weights(strategy, R, t, betas_t, criteria=None, seed=0, lookback=20):
    """Raw rank weights of a strategy at period ``t`` (information ``< t``)."""
    if strategy == "momentum":
        crit = R[max(0, t - lookback): t].sum(axis=0)
    elif strategy == "low_beta":
        crit = -betas_t
    elif strategy in ("size_proxy", "value_proxy"):
        if criteria is None:
            raise ValidationError(f"strategy {strategy!r} needs a criterion panel")
        V = criteria.values
        crit = V[-1] if V.shape[0] == 1 else V[t - 1]
    elif strategy == "random":
        crit = stream(seed, "random-criterion", t).standard_normal(R.shape[1])
    else:
        raise ParameterError(f"unknown strategy {strategy!r}")
    return rank_weights(crit)


def bias_test(panel, index_returns, strategy, beta_method="ols", window=250,
              params=None, criteria=None, seed=0, rebalance=1, lookback=20) -> BiasReport:
    """Residual index exposure of a beta-neutralized rank strategy.

    At every rebalance date ``t`` the rank portfolio is built from data before
    ``t``, made dollar- and beta-neutral with the predictive betas, and held
    until the next rebalance. The realized portfolio returns are regressed on
    the index.
    """
    R, x = _inputs(panel, index_returns)
    T, N = R.shape
    if criteria is not None and criteria.values.shape[0] not in (1, T):
        raise AlignmentError("criterion panel must have 1 row or one row per period")
    start = max(int(window), lookback)
    if T - start < 30:
        raise InsufficientDataError("fewer than 30 out-of-sample periods")
    dates = list(range(start, T, int(rebalance)))
    B = beta_paths(panel, x, beta_method, window, params, dates=dates)
    p = np.empty(T - start)
    w = None
    for t in range(start, T):
        if w is None or (t - start) % rebalance == 0:
            raw = strategy_weights(strategy, R, t, B[t], criteria, seed, lookback)
            w = neutralize(raw, B[t])
        p[t - start] = R[t] @ w
    b, ts = _regress(p, x[start:])
    return BiasReport(strategy, beta_method, b, ts, T - start)


class EigenRatio(NamedTuple):
    k: int
    ratio: float
    ci_low: float
    ci_high: float
    down: float
    up: float


@dataclass(frozen=True)
class LeverageEigenReport:
    ratios: tuple
    n_down: int
    n_up: int
    quantile: float

    def excludes_one(self, k):
        r = self.ratios[k - 1]
        return r.ci_low > 1.0 or r.ci_high < 1.0


def regime_split(index_returns, quantile=0.25, window=20):
    """Indices of the bottom and top ``floor(q T)`` periods ranked by the
    trailing ``window``-period index return (current period included)."""
    x = np.asarray(index_returns, dtype=float)
    T = x.shape[0]
    c = np.concatenate([[0.0], np.cumsum(x)])
    lo = np.maximum(np.arange(1, T + 1) - window, 0)
    signal = c[1:] - c[lo]
    order = np.argsort(signal, kind="mergesort")
    n = int(np.floor(quantile * T))
    return np.sort(order[:n]), np.sort(order[T - n:])


def leverage_eigen_test(panel, index_returns, k_max, quantile=0.25, n_boot=500, seed=0,
                        window=20, min_regime=30) -> LeverageEigenReport:
    """Down/up regime ratios of the top eigenvalues with bootstrap 95% CIs.

    Periods within a regime are resampled with replacement.
    """
    R, x = _inputs(panel, index_returns)
    T = R.shape[0]
    if T < 500:
        raise InsufficientDataError(f"need T >= 500, got {T}")
    if not 0 < quantile <= 0.5:
        raise ParameterError("quantile must lie in (0, 0.5]")
    down, up = regime_split(x, quantile, window)
    if min(len(down), len(up)) < max(min_regime, 2):
        raise InsufficientDataError("too few periods in a regime")

    def top(rows):
        C = correlation_from_returns(R[rows])
        return np.linalg.eigvalsh(C)[::-1][:k_max]

    ld, lu = top(down), top(up)
    rng = stream(seed, "regime-bootstrap")
    boot = np.empty((int(n_boot), k_max))
    for b in range(int(n_boot)):
        bd = down[rng.integers(0, len(down), len(down))]
        bu = up[rng.integers(0, len(up), len(up))]
        boot[b] = top(bd) / top(bu)
    lo, hi = np.percentile(boot, [2.5, 97.5], axis=0)
    ratios = tuple(EigenRatio(k + 1, float(ld[k] / lu[k]), float(lo[k]), float(hi[k]),
                              float(ld[k]), float(lu[k])) for k in range(k_max))
    return LeverageEigenReport(ratios, len(down), len(up), float(quantile))
