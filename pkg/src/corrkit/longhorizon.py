"""Autocorrelation and eigenvalue growth beyond one day under OU trends."""

from dataclasses import dataclass

import numpy as np

from .epps import eigenvalue_scale_curve
from .errors import ParameterError, ValidationError
from .ou import OuParams, simulate_ou

__all__ = ["AcfProfile", "OuParams", "autocorrelation_profile", "horizon_eigen_curve", "simulate_ou"]

DAY = 86400


@dataclass(frozen=True, eq=False)
class AcfProfile:
    """``acf[k]`` for lags ``0..max_lag`` with Bartlett standard errors."""

    lags: np.ndarray
    acf: np.ndarray
    stderr: np.ndarray


def sample_acf(x, max_lag):
    x = np.asarray(x, dtype=float)
    xc = x - x.mean()
    d = float(xc @ xc)
    if d == 0:
        raise ValidationError("series has zero variance")
    out = np.empty(max_lag + 1)
    out[0] = 1.0
    for k in range(1, max_lag + 1):
        out[k] = float(xc[k:] @ xc[:-k]) / d
    return out


def autocorrelation_profile(panel, w, max_lag):
    """Sample ACF of the portfolio returns ``r_t . w``.

    The Bartlett SE at lag ``k`` is ``sqrt((1 + 2 sum_{j<k} acf_j^2) / T)``.
    """
    R = panel.returns if hasattr(panel, "returns") else np.asarray(panel, dtype=float)
    T = R.shape[0]
    max_lag = int(max_lag)
    if max_lag < 1 or max_lag > T // 10:
        raise ParameterError(f"max_lag must lie in [1, T/10 = {T // 10}]")
    w = np.asarray(w, dtype=float)
    acf = sample_acf(R @ w, max_lag)
    cum = 1.0 + 2.0 * np.concatenate([[0.0], np.cumsum(acf[1:] ** 2)[:-1]])
    se = np.concatenate([[0.0], np.sqrt(cum / T)])
    return AcfProfile(np.arange(max_lag + 1), acf, se)


def horizon_eigen_curve(panel, horizons_days, k_max):
    """:func:`~corrkit.epps.eigenvalue_scale_curve` with horizons in days."""
    return eigenvalue_scale_curve(panel, [int(round(h * DAY)) for h in horizons_days], k_max)
