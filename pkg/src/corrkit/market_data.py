"""Return panels, criterion panels and synthetic ground-truth markets.

Synthetic markets follow a linear factor structure

    r_i(t) = sum_k B[i, k] F_k(t) + sigma_i eps_i(t)

with unit-variance factor innovations, so the loadings and idiosyncratic vols
are in return units per step. Three optional mechanisms give the structures
studied elsewhere in the package (they are mutually exclusive):

* ``lag_tau_seconds``: each asset absorbs factor innovations through an
  exponential impact kernel, plus an own-flow transient relaxing at the same
  rate. The aggregated covariance between assets is then the long-run one
  times ``g(T / tau) = 1 - (tau / T)(1 - exp(-T / tau))`` while variances
  stay exactly proportional to the horizon.
* ``trend``: factor (or idiosyncratic) returns gain an Ornstein-Uhlenbeck
  drift.
* ``leverage``: index volatility, market share of variance and betas are
  modulated by the predictive states of :mod:`corrkit.leverage`.
"""

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.signal import lfilter

from .errors import (
    InsufficientDataError,
    ParameterError,
    ParseError,
    RankabilityError,
    SpacingError,
    ValidationError,
)
from .leverage import LeverageFilter, LeverageParams, MOD_BOUNDS
from .ou import OuParams, ou_filter
from .rng import stream

MISSING_DROP_THRESHOLD = 0.10


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ReturnPanel:
    """T x N arithmetic returns on a uniform time grid."""

    timestamps: np.ndarray
    period_seconds: int
    assets: tuple
    returns: np.ndarray

    def __post_init__(self):
        ts = _frozen(self.timestamps, dtype=np.int64)
        R = _frozen(self.returns)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "returns", R)
        object.__setattr__(self, "assets", tuple(str(a) for a in self.assets))
        object.__setattr__(self, "period_seconds", int(self.period_seconds))
        if R.ndim != 2:
            raise ValidationError("returns must be a T x N matrix")
        T, N = R.shape
        if T < 2 or N < 2:
            raise InsufficientDataError(f"panel needs T >= 2 and N >= 2, got T={T}, N={N}")
        if len(ts) != T or len(self.assets) != N:
            raise ValidationError("timestamps/assets do not match the returns shape")
        if self.period_seconds <= 0:
            raise ParameterError("period_seconds must be positive")
        if len(set(self.assets)) != N:
            raise ValidationError("asset identifiers must be unique")
        steps = np.diff(ts)
        if np.any(steps != self.period_seconds):
            bad = int(np.flatnonzero(steps != self.period_seconds)[0]) + 1
            raise SpacingError(f"timestamps not spaced by {self.period_seconds}s at index {bad}")
        if not np.all(np.isfinite(R)):
            raise ValidationError("returns contain NaN or Inf")

    @property
    def T(self):
        return self.returns.shape[0]

    @property
    def N(self):
        return self.returns.shape[1]

    def __eq__(self, other):
        if not isinstance(other, ReturnPanel):
            return NotImplemented
        return (
            self.period_seconds == other.period_seconds
            and self.assets == other.assets
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.returns, other.returns)
        )

    def with_returns(self, returns):
        return replace(self, returns=returns)

    def select(self, columns):
        columns = list(columns)
        return ReturnPanel(self.timestamps, self.period_seconds,
                           [self.assets[j] for j in columns], self.returns[:, columns])


@dataclass(frozen=True, eq=False)
class CriterionPanel:
    """D x N raw values of one financial criterion (e.g. book-to-market)."""

    dates: tuple
    assets: tuple
    values: np.ndarray
    name: str = "criterion"

    def __post_init__(self):
        V = _frozen(self.values)
        object.__setattr__(self, "values", V)
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "assets", tuple(str(a) for a in self.assets))
        if V.ndim != 2 or V.shape != (len(self.dates), len(self.assets)):
            raise ValidationError("values must be a D x N matrix matching dates and assets")
        for d, row in enumerate(V):
            finite = row[np.isfinite(row)]
            if np.unique(finite).size < 2:
                raise RankabilityError(f"criterion {self.name!r} date {self.dates[d]!r} has fewer than 2 distinct finite values")

    def row(self, date_index=-1):
        return self.values[date_index]


# ---------------------------------------------------------------- file loading

def _read_csv(path, first_col):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError("empty file", row=1)
    header = [h.strip() for h in rows[0]]
    if len(header) < 2 or header[0] != first_col:
        raise ParseError(f"header must start with {first_col!r}", row=1)
    body = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", row=lineno)
        body.append((lineno, row))
    if not body:
        raise ParseError("no data rows", row=2)
    return header, body


def _parse_value(text, lineno):
    text = text.strip()
    if text == "" or text.lower() in ("nan", "na"):
        return math.nan
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"not a number: {text!r}", row=lineno) from None


def load_return_panel(path, missing_policy="drop_asset"):
    """Read ``timestamp,asset_1,...,asset_N`` into a :class:`ReturnPanel`.

    Blank or ``nan`` cells are missing. Under ``drop_asset`` any asset with more
    than 10% missing entries is dropped and the few remaining gaps are set to 0;
    under ``zero_fill`` every gap is set to 0.
    """
    if missing_policy not in ("drop_asset", "zero_fill"):
        raise ParameterError(f"unknown missing_policy {missing_policy!r}")
    header, body = _read_csv(path, "timestamp")
    ts, vals = [], []
    for lineno, row in body:
        try:
            ts.append(int(row[0].strip()))
        except ValueError:
            raise ParseError(f"timestamp is not an integer: {row[0]!r}", row=lineno) from None
        vals.append([_parse_value(c, lineno) for c in row[1:]])
    ts = np.array(ts, dtype=np.int64)
    R = np.array(vals, dtype=float)
    if len(ts) < 2:
        raise InsufficientDataError("need at least 2 rows")
    steps = np.diff(ts)
    if steps[0] <= 0 or np.any(steps != steps[0]):
        bad = int(np.flatnonzero(steps != steps[0])[0]) + 1 if np.any(steps != steps[0]) else 1
        raise SpacingError(f"non-uniform timestamp spacing near data row {bad + 1}")
    if np.any(np.isinf(R)):
        raise ParseError("infinite return value")
    assets = header[1:]
    missing = np.isnan(R)
    if missing_policy == "drop_asset":
        keep = missing.mean(axis=0) <= MISSING_DROP_THRESHOLD
        R = R[:, keep]
        assets = [a for a, k in zip(assets, keep) if k]
    R = np.where(np.isnan(R), 0.0, R)
    return ReturnPanel(ts, int(steps[0]), assets, R)


def load_criteria(path, name=None):
    """Read ``date,asset_1,...,asset_N`` into a :class:`CriterionPanel`."""
    header, body = _read_csv(path, "date")
    dates = [row[0].strip() for _, row in body]
    vals = [[_parse_value(c, lineno) for c in row[1:]] for lineno, row in body]
    if name is None:
        name = str(path).rsplit("/", 1)[-1].rsplit(".", 1)[0]
    return CriterionPanel(dates, header[1:], np.array(vals, dtype=float), name=name)


def write_return_panel(panel, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", *panel.assets])
        for t, row in zip(panel.timestamps, panel.returns):
            w.writerow([int(t), *(repr(float(x)) for x in row)])


# ------------------------------------------------------------------ aggregation

def aggregate_returns(panel, factor):
    """Compound returns over non-overlapping blocks of ``factor`` periods.

    Each block return is ``prod(1 + r) - 1``, stamped with the timestamp of
    the block's last period; a trailing partial block is dropped.
    """
    m = int(factor)
    if m < 1 or m != factor:
        raise ParameterError("aggregation factor must be a positive integer")
    if m == 1:
        return panel
    T = panel.T
    if m > T:
        raise InsufficientDataError(f"aggregation factor {m} exceeds T={T}")
    nb = T // m
    if nb < 2:
        raise InsufficientDataError(f"aggregation by {m} leaves {nb} period(s)")
    blocks = 1.0 + panel.returns[: nb * m].reshape(nb, m, panel.N)
    R = np.prod(blocks, axis=1) - 1.0
    ts = panel.timestamps[m - 1: nb * m: m]
    return ReturnPanel(ts, panel.period_seconds * m, panel.assets, R)


# ----------------------------------------------------------- synthetic markets

@dataclass(frozen=True)
class TrendSpec:
    """OU drift added to factor returns (``mode='factor'``, one OuParams per
    factor) or to every asset's idiosyncratic return (``mode='idiosyncratic'``,
    a single OuParams in units of the idiosyncratic vol)."""

    ou: tuple
    mode: str = "factor"

    def __post_init__(self):
        object.__setattr__(self, "ou", tuple(self.ou))
        if self.mode not in ("factor", "idiosyncratic"):
            raise ParameterError("trend mode must be 'factor' or 'idiosyncratic'")
        if not self.ou:
            raise ParameterError("trend needs at least one OuParams")


def trend_for_share(share, relaxation_periods):
    """OuParams whose drift carries ``share`` of a unit-innovation factor's
    one-period variance."""
    if not 0.0 <= share < 1.0:
        raise ParameterError("trend variance share must lie in [0, 1)")
    return OuParams(relaxation_periods, math.sqrt(share / (1.0 - share)))


@dataclass(frozen=True)
class LeverageSpec:
    """Leverage mechanisms of the generator.

    ``market_factor`` indexes the factor used as the market index. The index
    return is that factor scaled by the mean absolute market loading, so the
    average true beta is about one. ``max_absorb`` bounds the fraction of the
    idiosyncratic variance that a rising index volatility may take over,
    which keeps total asset variance constant under systematic leverage.
    """

    params: LeverageParams = field(default_factory=LeverageParams)
    market_factor: int = 0
    max_absorb: float = 0.9
    idio_vol_of_vol: float = 0.0
    idio_vol_relaxation: float = 20.0

    def __post_init__(self):
        if not 0.0 <= self.max_absorb < 1.0:
            raise ParameterError("max_absorb must lie in [0, 1)")
        if self.idio_vol_of_vol < 0 or self.idio_vol_relaxation <= 0:
            raise ParameterError("invalid idiosyncratic vol-of-vol settings")


@dataclass(frozen=True, eq=False)
class SyntheticMarketSpec:
    factor_loadings: np.ndarray
    idiosyncratic_vol: np.ndarray
    horizon_steps: int
    step_seconds: int = 86400
    lag_tau_seconds: Optional[float] = None
    trend: Optional[TrendSpec] = None
    leverage: Optional[LeverageSpec] = None
    start_timestamp: int = 0

    def __post_init__(self):
        B = _frozen(np.atleast_2d(self.factor_loadings))
        s = _frozen(np.atleast_1d(self.idiosyncratic_vol))
        object.__setattr__(self, "factor_loadings", B)
        object.__setattr__(self, "idiosyncratic_vol", s)
        N, K = B.shape
        if K < 1 or N < 2:
            raise ValidationError("need N >= 2 assets and K >= 1 factors")
        if s.shape != (N,):
            raise ValidationError("idiosyncratic_vol must have one entry per asset")
        if not np.all(np.isfinite(B)):
            raise ValidationError("factor loadings must be finite")
        if not np.all(s > 0):
            raise ValidationError("idiosyncratic vols must be > 0")
        if int(self.horizon_steps) < 2 or int(self.step_seconds) <= 0:
            raise ValidationError("horizon_steps >= 2 and step_seconds > 0 required")
        if self.lag_tau_seconds is not None and not self.lag_tau_seconds > 0:
            raise ValidationError("lag relaxation time must be > 0")
        features = [self.lag_tau_seconds is not None, self.trend is not None, self.leverage is not None]
        if sum(features) > 1:
            raise ValidationError("lag, trend and leverage mechanisms are mutually exclusive")
        if self.trend is not None and self.trend.mode == "factor" and len(self.trend.ou) not in (1, K):
            raise ValidationError("factor trend needs one OuParams per factor (or one shared)")
        if self.leverage is not None and not 0 <= self.leverage.market_factor < K:
            raise ValidationError("leverage market_factor out of range")

    @property
    def n_assets(self):
        return self.factor_loadings.shape[0]

    @property
    def n_factors(self):
        return self.factor_loadings.shape[1]

    def population_covariance(self):
        """Per-step covariance ignoring lag, trend and leverage."""
        B = self.factor_loadings
        return B @ B.T + np.diag(self.idiosyncratic_vol ** 2)

    def population_correlation(self):
        S = self.population_covariance()
        d = np.sqrt(np.diag(S))
        C = S / np.outer(d, d)
        np.fill_diagonal(C, 1.0)
        return C


def equicorrelation_spec(n_assets, rho, horizon_steps, vol=0.01, step_seconds=86400, **kwargs):
    """One-factor market with identical loadings: pairwise correlation ``rho``."""
    if not 0.0 <= rho < 1.0:
        raise ParameterError("rho must lie in [0, 1)")
    B = np.full((n_assets, 1), vol * math.sqrt(rho))
    s = np.full(n_assets, vol * math.sqrt(1.0 - rho))
    return SyntheticMarketSpec(B, s, horizon_steps, step_seconds, **kwargs)


def factor_market_spec(n_assets, shares, horizon_steps, step_seconds=86400, vol=0.01,
                       market_dispersion=0.0, structure_seed=0, **kwargs):
    """Market factor plus balanced long/short style factors.

    ``shares[0]`` is the average variance share of the market factor (loading
    ``vol * sqrt(share) * (1 + market_dispersion * u_i)`` with ``u_i`` uniform
    on [-1, 1]); every later factor has zero-mean, unit-RMS random loadings so
    it carries ``shares[k]`` of the variance on average. Idiosyncratic vol
    fills each asset up to total variance ``vol**2``.
    """
    shares = np.asarray(shares, dtype=float)
    if shares.ndim != 1 or shares.size < 1 or np.any(shares < 0):
        raise ParameterError("shares must be a non-empty list of non-negative numbers")
    rng = stream(structure_seed, "structure")
    N, K = int(n_assets), shares.size
    B = np.empty((N, K))
    u = rng.uniform(-1.0, 1.0, N)
    B[:, 0] = vol * math.sqrt(shares[0]) * (1.0 + market_dispersion * u)
    for k in range(1, K):
        z = rng.standard_normal(N)
        z -= z.mean()
        z /= math.sqrt(np.mean(z * z))
        B[:, k] = vol * math.sqrt(shares[k]) * z
    idio2 = vol ** 2 - np.sum(B * B, axis=1)
    if np.any(idio2 <= 0.01 * vol ** 2):
        raise ParameterError("factor shares leave no idiosyncratic variance for some assets")
    return SyntheticMarketSpec(B, np.sqrt(idio2), horizon_steps, step_seconds, **kwargs)


@dataclass(frozen=True, eq=False)
class SimulatedMarket:
    """Generator output with the latent ground truth kept alongside the panel."""

    panel: ReturnPanel
    factor_returns: np.ndarray
    index_returns: Optional[np.ndarray] = None
    true_betas: Optional[np.ndarray] = None


def _asset_normals(seed, tag, T, N):
    out = np.empty((T, N))
    for i in range(N):
        out[:, i] = stream(seed, tag, i).standard_normal(T)
    return out


def _factor_normals(seed, tag, T, K):
    return np.column_stack([stream(seed, tag, k).standard_normal(T) for k in range(K)])


def simulate_market(spec, seed):
    """Simulate a :class:`ReturnPanel` from ``spec``; a pure function of (spec, seed)."""
    return simulate_market_detailed(spec, seed).panel


def simulate_market_detailed(spec, seed):
    T, N, K = int(spec.horizon_steps), spec.n_assets, spec.n_factors
    B = np.asarray(spec.factor_loadings)
    sig = np.asarray(spec.idiosyncratic_vol)
    index_returns = true_betas = None

    if spec.leverage is not None:
        R, F, index_returns, true_betas = _simulate_leverage(spec, seed)
    else:
        xi = _factor_normals(seed, "factor", T, K)
        R = _asset_normals(seed, "idio", T, N)
        R *= sig
        if spec.lag_tau_seconds is not None:
            tau = spec.lag_tau_seconds / spec.step_seconds
            F, lagged = _lagged_factors(xi, tau, seed)
            R += lagged @ B.T
            transient = _transients(seed, T, N, tau)
            R += transient * np.sqrt(np.sum(B * B, axis=1))
        else:
            F = xi
            if spec.trend is not None and spec.trend.mode == "factor":
                drift = np.empty((T, K))
                for k in range(K):
                    p = spec.trend.ou[k if len(spec.trend.ou) == K else 0]
                    drift[:, k] = ou_filter(stream(seed, "trend", k).standard_normal(T), p)
                F = xi + drift
            R += F @ B.T
            if spec.trend is not None and spec.trend.mode == "idiosyncratic":
                p = spec.trend.ou[0]
                R += ou_filter(_asset_normals(seed, "trend-idio", T, N), p) * sig
    ts = spec.start_timestamp + spec.step_seconds * (np.arange(T, dtype=np.int64) + 1)
    names = [f"A{i:04d}" for i in range(N)]
    panel = ReturnPanel(ts, spec.step_seconds, names, R)
    return SimulatedMarket(panel, F, index_returns, true_betas)


def _lagged_factors(xi, tau, seed):
    """Exact one-step discretization of a factor W and its lagged response
    ``W - Y``, where Y is the OU (relaxation ``tau`` steps) driven by W."""
    T, K = xi.shape
    a = math.exp(-1.0 / tau)
    var_i = 0.5 * tau * (1.0 - a * a)
    cov = tau * (1.0 - a)
    # Cholesky of the joint law of (dW, int_0^1 e^{-(1-s)/tau} dW(s)), Var(dW) = 1
    l22 = math.sqrt(max(var_i - cov * cov, 0.0))
    eta = _factor_normals(seed, "lag", T + 1, K)
    inc = cov * xi + l22 * eta[1:]
    y0 = math.sqrt(0.5 * tau) * eta[0]
    Y = np.empty((T + 1, K))
    Y[0] = y0
    Y[1:] = lfilter([1.0], [1.0, -a], inc, axis=0, zi=(a * y0)[np.newaxis, :])[0]
    return xi, xi - np.diff(Y, axis=0)


def _transients(seed, T, N, tau):
    """Increments of independent stationary OU processes with variance tau/2;
    over m steps their variance is ``tau (1 - e^{-m / tau})``."""
    p = OuParams(tau, math.sqrt(0.5 * tau))
    Y = ou_filter(_asset_normals(seed, "transient", T + 1, N), p)
    return np.diff(Y, axis=0)


def _simulate_leverage(spec, seed):
    lev = spec.leverage
    p = lev.params
    B = np.asarray(spec.factor_loadings)
    sig = np.asarray(spec.idiosyncratic_vol)
    T, N, K = int(spec.horizon_steps), spec.n_assets, spec.n_factors
    m = lev.market_factor
    bm = B[:, m]
    s_index = float(np.mean(np.abs(bm)))
    if s_index <= 0:
        raise ValidationError("market factor has zero loadings")
    xi = _factor_normals(seed, "factor", T, K)
    eps = _asset_normals(seed, "idio", T, N)
    if lev.idio_vol_of_vol > 0:
        h = ou_filter(_asset_normals(seed, "idiovol", T, N),
                      OuParams(lev.idio_vol_relaxation, lev.idio_vol_of_vol))
        # E[exp(2h - 2 s^2)] = 1 keeps the average idiosyncratic variance
        eps *= np.exp(h - lev.idio_vol_of_vol ** 2)
    others = [k for k in range(K) if k != m]
    other = xi[:, others] @ B[:, others].T if others else np.zeros((T, N))
    with np.errstate(divide="ignore"):
        room = np.where(bm != 0, sig ** 2 / np.where(bm != 0, bm, 1.0) ** 2, np.inf)
    l_cap = min(math.sqrt(1.0 + lev.max_absorb * float(np.min(room))), MOD_BOUNDS[1])

    filt = LeverageFilter(p, s_index ** 2, np.sum(B * B, axis=1) + sig ** 2)
    R = np.empty((T, N))
    rI = np.empty(T)
    betas = np.empty((T, N))
    for t in range(T):
        L, S, E = filt.current()
        L = min(float(L), l_cap)
        x = xi[t, m]
        rI[t] = s_index * L * x
        load = bm * S * E
        idio = np.sqrt(sig ** 2 - bm ** 2 * (L * L - 1.0))
        R[t] = load * L * x + other[t] + idio * eps[t]
        betas[t] = load / s_index
        filt.update(rI[t], R[t])
    return R, xi, rI, betas
