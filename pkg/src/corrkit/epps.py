"""Eigenvalue growth with the aggregation horizon and the two-parameter lag law.

Under an exponential impact kernel of relaxation time ``tau`` every
off-diagonal correlation measured on horizon ``T`` is its long-run value times

    g(x) = 1 - (1 - exp(-x)) / x,    x = T / tau,

so each eigenvalue follows ``lambda(T) = 1 + (lambda_inf - 1) g(T / tau)``.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .correlation import correlation_from_returns
from .errors import InsufficientDataError, ParameterError, ValidationError
from .market_data import aggregate_returns

MIN_SAMPLES = 30
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True, eq=False)
class ScaleCurve:
    """Eigenvalue ``k`` (1-based) as a function of the aggregation horizon."""

    horizons_seconds: np.ndarray
    k: int
    values: np.ndarray
    n_samples: np.ndarray

    def __post_init__(self):
        h = np.array(self.horizons_seconds, dtype=float)
        v = np.array(self.values, dtype=float)
        n = np.array(self.n_samples, dtype=np.int64)
        if h.shape != v.shape or h.shape != n.shape or h.ndim != 1:
            raise ValidationError("horizons, values and n_samples must have equal length")
        if np.any(np.diff(h) <= 0):
            raise ValidationError("horizons must be strictly ascending")
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise ValidationError("curve values must be finite and positive")
        for name, a in (("horizons_seconds", h), ("values", v), ("n_samples", n)):
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    def standard_errors(self):
        """Large-sample SE of an isolated eigenvalue: ``lambda * sqrt(2 / n)``."""
        return self.values * np.sqrt(2.0 / self.n_samples)


@dataclass(frozen=True)
class LagLawFit:
    lambda_inf: float
    tau_c_seconds: float
    rms_relative_error: float
    at_lower_bound: bool = False


def lag_kernel_ratio(x):
    """``g(x) = 1 - (1 - exp(-x)) / x`` with a series branch near 0."""
    x = np.asarray(x, dtype=float)
    small = x < 1e-4
    xs = np.where(small, 1.0, x)
    big = 1.0 + np.expm1(-xs) / xs
    series = x / 2.0 - x * x / 6.0 + x ** 3 / 24.0
    return np.where(small, series, big)


def lag_law(T_seconds, lambda_inf, tau_c):
    """``1 + (lambda_inf - 1) g(T / tau_c)``; vectorized in ``T_seconds``."""
    T = np.asarray(T_seconds, dtype=float)
    if np.any(T <= 0) or not tau_c > 0 or not lambda_inf > 0:
        raise ParameterError("lag_law needs T > 0, tau_c > 0 and lambda_inf > 0")
    out = 1.0 + (lambda_inf - 1.0) * lag_kernel_ratio(T / tau_c)
    return float(out) if out.ndim == 0 else out


def eigenvalue_scale_curve(panel, horizons, k_max):
    """Top ``k_max`` eigenvalues of the correlation matrix at each horizon.

    ``horizons`` are in seconds and must be multiples of the panel period.
    Horizons leaving fewer than 30 non-overlapping samples are dropped with
    a warning. Returns one :class:`ScaleCurve` per eigenvalue index.
    """
    k_max = int(k_max)
    if k_max < 1 or k_max > panel.N:
        raise ParameterError(f"k_max must lie in [1, {panel.N}]")
    hs = sorted(set(int(h) for h in horizons))
    if not hs:
        raise ParameterError("no horizons given")
    kept, vals, ns = [], [], []
    for h in hs:
        if h <= 0 or h % panel.period_seconds:
            raise ParameterError(f"horizon {h}s is not a positive multiple of {panel.period_seconds}s")
        m = h // panel.period_seconds
        n = panel.T // m
        if n < MIN_SAMPLES:
            warnings.warn(f"horizon {h}s leaves {n} samples (< {MIN_SAMPLES}); dropped", stacklevel=2)
            continue
        agg = aggregate_returns(panel, m)
        C = correlation_from_returns(agg.returns, agg.assets)
        lam = np.linalg.eigvalsh(C)[::-1][:k_max]
        kept.append(h)
        vals.append(lam)
        ns.append(n)
    if not kept:
        raise InsufficientDataError("every horizon leaves fewer than 30 samples")
    vals = np.array(vals)
    return [ScaleCurve(np.array(kept, float), k + 1, vals[:, k], np.array(ns)) for k in range(k_max)]


def _fit_at(logtau, T, y, w):
    g = lag_kernel_ratio(T / math.exp(logtau))
    # weighted least squares of (y - 1) on g, weights 1 / y^2 (relative errors)
    c = float(np.sum(w * g * (y - 1.0)) / np.sum(w * g * g))
    c = max(c, 0.0)
    r = (y - 1.0 - c * g) / y
    return float(np.mean(r * r)), c


def fit_lag_law(curve, tau_bounds=None, grid=241, tol=1e-10):
    """Least-squares fit of ``(lambda_inf, tau_c)`` in relative error.

    For each ``tau`` the optimal ``lambda_inf`` has a closed form; ``tau`` is
    located on a log grid and refined by golden-section search. The default
    search interval is ``[min(T) / 1000, 1000 max(T)]``.
    """
    T = np.asarray(curve.horizons_seconds, dtype=float)
    y = np.asarray(curve.values, dtype=float)
    if T.size < 4:
        raise InsufficientDataError("need at least 4 horizons")
    if T[-1] < 10.0 * T[0]:
        raise InsufficientDataError("horizons must span at least one decade")
    if tau_bounds is None:
        tau_bounds = (T[0] / 1000.0, T[-1] * 1000.0)
    lo, hi = math.log(tau_bounds[0]), math.log(tau_bounds[1])
    w = 1.0 / (y * y)
    xs = np.linspace(lo, hi, int(grid))
    errs = np.array([_fit_at(x, T, y, w)[0] for x in xs])
    i = int(np.argmin(errs))
    a, b = xs[max(i - 1, 0)], xs[min(i + 1, len(xs) - 1)]
    c, d = b - _GOLDEN * (b - a), a + _GOLDEN * (b - a)
    fc, fd = _fit_at(c, T, y, w)[0], _fit_at(d, T, y, w)[0]
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = _fit_at(c, T, y, w)[0]
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = _fit_at(d, T, y, w)[0]
    x = 0.5 * (a + b)
    candidates = [(errs[i], xs[i]), (_fit_at(x, T, y, w)[0], x)]
    err, x = min(candidates)
    _, cst = _fit_at(x, T, y, w)
    return LagLawFit(1.0 + cst, math.exp(x), math.sqrt(err), at_lower_bound=bool(x <= lo + 1e-9))
