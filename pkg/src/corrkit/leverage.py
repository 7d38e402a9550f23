"""Leverage state filters shared by the leverage market generator and the
reactive beta estimator.

All states are *predictive*: the value at period ``t`` only uses returns of
periods ``< t``. Three multiplicative modulations are derived from them:

* systematic ``L = 1 + l_s * d`` where ``d`` is the index drawdown z-score
  (positive after the index has fallen),
* specific ``S_i = 1 + l_i * u_i`` where ``u_i`` is the relative
  underperformance z-score of asset ``i`` against the index,
* elasticity ``E_i = relvol_i ** e_v`` where ``relvol_i`` is the fast over
  slow ratio of the asset-to-index volatility ratio.

Each modulation is clipped to ``MOD_BOUNDS``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .errors import ParameterError

MOD_BOUNDS = (0.2, 5.0)


def decay(halflife):
    return 0.5 ** (1.0 / float(halflife))


def zscore_scale(a):
    """Stationary std of an EWMA (decay ``a``) of a unit-variance white series."""
    return np.sqrt((1.0 - a) / (1.0 + a))


@dataclass(frozen=True)
class LeverageParams:
    systematic_slope: float = 0.0
    specific_slope: float = 0.0
    elasticity: float = 0.0
    vol_halflife: float = 120.0
    fast_vol_halflife: float = 20.0
    zscore_halflife: float = 20.0

    def __post_init__(self):
        for name in ("vol_halflife", "fast_vol_halflife", "zscore_halflife"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be > 0")
        if not 0.0 <= self.elasticity <= 2.0:
            raise ParameterError("elasticity exponent must lie in [0, 2]")


def ewma_before(x, a, x0):
    """EWMA states *before* each observation: ``s[0] = x0``,
    ``s[t+1] = a s[t] + (1 - a) x[t]``. Returns ``len(x) + 1`` rows."""
    x = np.asarray(x, dtype=float)
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), x.shape[1:])
    out = np.empty((x.shape[0] + 1,) + x.shape[1:])
    out[0] = x0
    if x.shape[0]:
        out[1:] = _ewma_run(x, a, x0)
    return out


def _ewma_run(x, a, x0):
    # y[t] = a y[t-1] + (1-a) x[t], y[-1] = x0
    zi = (a * x0)[np.newaxis, ...]
    return lfilter([1.0 - a], [1.0, -a], x, axis=0, zi=zi)[0]


def _clip(x):
    return np.clip(x, *MOD_BOUNDS)


@dataclass(frozen=True)
class LeverageStates:
    """Predictive states for periods ``0..T`` (``T + 1`` rows)."""

    index_var: np.ndarray
    asset_var: np.ndarray
    drawdown_z: np.ndarray
    underperformance_z: np.ndarray
    relvol: np.ndarray
    systematic: np.ndarray
    specific: np.ndarray
    elasticity: np.ndarray

    @property
    def asset_modulation(self):
        return self.systematic[:, None] * self.specific * self.elasticity


def leverage_states(index_returns, returns, params, index_var0=None, asset_var0=None):
    """Vectorized predictive leverage states for a whole panel.

    Parameters
    ----------
    index_returns : (T,) array
    returns : (T, N) array
    params : LeverageParams
    index_var0, asset_var0 : optional initial per-period variances. Default is
        the mean squared return over the first ``vol_halflife`` periods.
    """
    rI = np.asarray(index_returns, dtype=float)
    R = np.asarray(returns, dtype=float)
    T = len(rI)
    warm = max(1, min(T, int(round(params.vol_halflife))))
    if index_var0 is None:
        index_var0 = np.mean(rI[:warm] ** 2)
    if asset_var0 is None:
        asset_var0 = np.mean(R[:warm] ** 2, axis=0)
    av, af, az = decay(params.vol_halflife), decay(params.fast_vol_halflife), decay(params.zscore_halflife)

    vI = ewma_before(rI ** 2, av, index_var0)
    v = ewma_before(R ** 2, av, asset_var0)
    fI = ewma_before(rI ** 2, af, index_var0)
    f = ewma_before(R ** 2, af, asset_var0)

    nI = rI / np.sqrt(vI[:-1])
    zbar = ewma_before(nI, az, 0.0)
    e = R / np.sqrt(v[:-1]) - nI[:, None]
    me = ewma_before(e, az, 0.0)
    qe = ewma_before(e ** 2, az, 1.0)
    return _finish(vI, v, fI, f, zbar, me, qe, params, az)


def _finish(vI, v, fI, f, zbar, me, qe, params, az):
    c = zscore_scale(az)
    dd = -zbar / c
    u = -me / (np.sqrt(qe) * c)
    relvol = np.sqrt((f / fI[..., None]) / (v / vI[..., None]))
    systematic = _clip(1.0 + params.systematic_slope * dd)
    specific = _clip(1.0 + params.specific_slope * u)
    elasticity = _clip(relvol ** params.elasticity)
    return LeverageStates(vI, v, dd, u, relvol, systematic, specific, elasticity)


class LeverageFilter:
    """Incremental form of :func:`leverage_states`, used inside generators.

    Call :meth:`current` for the modulations of the next period, then
    :meth:`update` with that period's returns.
    """

    def __init__(self, params, index_var0, asset_var0):
        self.params = params
        self.av = decay(params.vol_halflife)
        self.af = decay(params.fast_vol_halflife)
        self.az = decay(params.zscore_halflife)
        self.vI = float(index_var0)
        self.fI = float(index_var0)
        self.v = np.array(asset_var0, dtype=float)
        self.f = self.v.copy()
        self.zbar = 0.0
        self.me = np.zeros_like(self.v)
        self.qe = np.ones_like(self.v)

    def current(self):
        """Return ``(systematic, specific, elasticity)`` for the next period."""
        st = _finish(
            np.array([self.vI]), self.v[None, :], np.array([self.fI]), self.f[None, :],
            np.array([self.zbar]), self.me[None, :], self.qe[None, :], self.params, self.az,
        )
        return st.systematic[0], st.specific[0], st.elasticity[0]

    def update(self, index_return, returns):
        nI = index_return / np.sqrt(self.vI)
        e = returns / np.sqrt(self.v) - nI
        self.zbar = self.az * self.zbar + (1 - self.az) * nI
        self.me = self.az * self.me + (1 - self.az) * e
        self.qe = self.az * self.qe + (1 - self.az) * e * e
        self.vI = self.av * self.vI + (1 - self.av) * index_return ** 2
        self.fI = self.af * self.fI + (1 - self.af) * index_return ** 2
        r2 = returns * returns
        self.v = self.av * self.v + (1 - self.av) * r2
        self.f = self.af * self.f + (1 - self.af) * r2
