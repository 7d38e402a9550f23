"""Correlation-matrix paths: log-FCL OU diffusion and two baselines.

In the FCL diffusion each factor portfolio's FCL follows a log-OU while the
correlations between factor portfolios stay fixed. The factor portfolios are
not orthogonal: with ``F' F = L' L`` (``L`` upper triangular), the matrix
seen in the orthonormalized factor basis is ``L^{-T} D R D L^{-1}`` with
``D = diag(sqrt(FCL))``, so moving vols rotate its eigenvectors.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy import stats
from scipy.linalg import cholesky, solve_triangular

from .errors import (
    InsufficientDataError,
    NonStationarySeriesError,
    ParameterError,
    PSDError,
    ValidationError,
)
from .ou import OuParams, ou_filter
from .rng import stream

PSD_TOL = 1e-10


def _check_correlations(M, what="matrix"):
    if M.ndim != 3 or M.shape[1] != M.shape[2]:
        raise ValidationError(f"{what}: expected a stack of square matrices")
    if not np.all(np.isfinite(M)):
        raise PSDError(f"{what}: non-finite entries")
    if np.max(np.abs(M - np.swapaxes(M, 1, 2)), initial=0.0) > 1e-12:
        raise PSDError(f"{what}: not symmetric")
    if np.max(np.abs(np.diagonal(M, axis1=1, axis2=2) - 1.0), initial=0.0) > 1e-12:
        raise PSDError(f"{what}: diagonal is not 1")
    lam_min = np.min(np.linalg.eigvalsh(M)[:, 0])
    if lam_min < -PSD_TOL:
        raise PSDError(f"{what}: not PSD (min eigenvalue {lam_min:.3g})")


@dataclass(frozen=True, eq=False)
class CorrPath:
    """Sequence of K x K correlation matrices indexed by period."""

    times: np.ndarray
    matrices: np.ndarray
    bases: Optional[np.ndarray] = None

    def __post_init__(self):
        M = np.array(self.matrices, dtype=float)
        t = np.array(self.times, dtype=np.int64)
        if t.shape != (M.shape[0],) or np.any(np.diff(t) <= 0):
            raise ValidationError("times must be increasing, one per matrix")
        _check_correlations(M, "path")
        for name, a in (("times", t), ("matrices", M)):
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def K(self):
        return self.matrices.shape[1]

    def __len__(self):
        return self.matrices.shape[0]


def _normalize_stack(S):
    d = np.sqrt(np.diagonal(S, axis1=1, axis2=2))
    C = S / (d[:, :, None] * d[:, None, :])
    C = 0.5 * (C + np.swapaxes(C, 1, 2))
    idx = np.arange(S.shape[1])
    C[:, idx, idx] = 1.0
    return C


# ------------------------------------------------------------------ OU fitting

def fit_logfcl_ou(fcl_series, relaxation_guess=None):
    """Fit an OU to ``log(FCL)`` of each series by lag-1 regression.

    With ``y[t+1] = c + phi y[t] + e`` the exact discretization gives
    relaxation ``-1 / ln(phi)``, mean ``c / (1 - phi)`` and stationary std
    ``std(e) / sqrt(1 - phi^2)``.

    Parameters
    ----------
    fcl_series : (T,) or (T, K) array of positive values
    relaxation_guess : optional; series shorter than 10 times it are rejected.

    Returns
    -------
    list of OuParams, one per column.
    """
    X = np.asarray(fcl_series, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    T = X.shape[0]
    if T < 10 or (relaxation_guess is not None and T < 10 * relaxation_guess):
        raise InsufficientDataError(f"series of length {T} is too short")
    if not np.all(np.isfinite(X)) or np.any(X <= 0):
        raise ValidationError("FCL series must be positive and finite")
    Y = np.log(X)
    out = []
    for k in range(Y.shape[1]):
        y0, y1 = Y[:-1, k], Y[1:, k]
        d0 = y0 - y0.mean()
        v = float(d0 @ d0)
        if v <= 1e-300 * max(1.0, float(y0 @ y0)) or np.ptp(y0) == 0:
            raise NonStationarySeriesError(f"series {k} is constant; slope undefined")
        phi = float(d0 @ (y1 - y1.mean())) / v
        if not 0.0 < phi < 1.0:
            raise NonStationarySeriesError(f"series {k}: lag-1 slope {phi:.4g} outside (0, 1)")
        c = y1.mean() - phi * y0.mean()
        e = y1 - c - phi * y0
        sd = math.sqrt(float(e @ e) / (len(e) - 2) / (1.0 - phi * phi))
        out.append(OuParams(-1.0 / math.log(phi), sd, c / (1.0 - phi)))
    return out


# ----------------------------------------------------------- FCL diffusion

def reduced_correlation(fcls, fixed_factor_corr, gram):
    """Unit-diagonal form of ``L^{-T} D R D L^{-1}`` for a stack of FCL states.

    ``fcls`` is (n, K), ``gram`` the K x K matrix ``F'F`` of unit-norm factor
    portfolios, ``fixed_factor_corr`` the correlation R between them.
    """
    fcls = np.atleast_2d(np.asarray(fcls, dtype=float))
    R = np.asarray(fixed_factor_corr, dtype=float)
    L = cholesky(np.asarray(gram, dtype=float), lower=False)
    Linv = solve_triangular(L, np.eye(L.shape[0]), lower=False)
    d = np.sqrt(fcls)
    S = d[:, :, None] * R[None] * d[:, None, :]
    S = Linv.T[None] @ S @ Linv[None]
    return _normalize_stack(S)


def _gram(factor_weights, K):
    if factor_weights is None:
        return np.eye(K)
    F = np.asarray(factor_weights, dtype=float)
    if F.ndim != 2 or F.shape[1] != K:
        raise ValidationError("factor_weights must be N x K")
    F = F / np.linalg.norm(F, axis=0)
    G = F.T @ F
    if np.linalg.eigvalsh(G)[0] <= 1e-10:
        raise ValidationError("factor portfolios are linearly dependent")
    return G


def simulate_corr_diffusion(base, ou, fixed_factor_corr, n_steps, seed,
                            factor_weights=None, gram=None):
    """Reduced correlation path driven by log-OU FCLs.

    Parameters
    ----------
    base : (K,) positive FCL levels; ``log FCL_k = log base_k + Y_k``
    ou : OuParams or one per factor; drives ``Y_k`` (stationary start)
    fixed_factor_corr : K x K correlation between factor portfolio returns
    n_steps : path length
    factor_weights : optional N x K factor portfolios defining the overlaps
    gram : optional K x K overlap matrix ``F'F`` (used if weights not given)
    """
    base = np.asarray(base, dtype=float)
    K = base.shape[0]
    if K < 2:
        raise ValidationError("need K >= 2 factors")
    if np.any(base <= 0) or not np.all(np.isfinite(base)):
        raise ValidationError("base FCLs must be positive")
    R = np.asarray(fixed_factor_corr, dtype=float)
    if R.shape != (K, K):
        raise ValidationError("fixed_factor_corr must be K x K")
    _check_correlations(R[None], "fixed_factor_corr")
    if isinstance(ou, OuParams):
        ou = [ou] * K
    ou = list(ou)
    if len(ou) != K:
        raise ValidationError("need one OuParams per factor")
    n = int(n_steps)
    if n < 1:
        raise ParameterError("n_steps must be >= 1")
    H = _gram(factor_weights, K) if factor_weights is not None else (
        np.eye(K) if gram is None else np.asarray(gram, dtype=float))
    Y = np.empty((n, K))
    for k in range(K):
        Y[:, k] = ou_filter(stream(seed, "logfcl", k).standard_normal(n), ou[k])
    fcls = base * np.exp(Y)
    return CorrPath(np.arange(n), reduced_correlation(fcls, R, H))


# ------------------------------------------------------------------- baselines

def baseline_wishart(K, dof, steps, seed, base=None, window=20):
    """Normalized sliding-window Wishart path around ``base``.

    Step ``t`` uses draws ``t*s .. t*s + n - 1`` of ``N(0, base)`` with
    ``s = dof // window`` so the sample fully renews over ``window`` steps;
    the effective degrees of freedom are ``n = s * window``.
    """
    K, W = int(K), int(window)
    if W < 1:
        raise ParameterError("window must be >= 1")
    s = max(1, int(dof) // W)
    n = s * W
    if n <= K - 1:
        raise ParameterError(f"degenerate degrees of freedom: n={n} <= K-1={K - 1}")
    B = np.eye(K) if base is None else np.asarray(base, dtype=float)
    _check_correlations(B[None], "base")
    Lb = np.linalg.cholesky(B + 1e-14 * np.eye(K))
    steps = int(steps)
    n_chunks = W + steps - 1
    rng = stream(seed, "wishart")
    Q = np.empty((n_chunks, K, K))
    for c in range(n_chunks):
        z = rng.standard_normal((s, K)) @ Lb.T
        Q[c] = z.T @ z
    cum = np.concatenate([np.zeros((1, K, K)), np.cumsum(Q, axis=0)])
    S = (cum[W: W + steps] - cum[:steps]) / n
    return CorrPath(np.arange(steps), _normalize_stack(S))


def _polar(A):
    U, _, Vt = np.linalg.svd(A)
    return U @ Vt


def baseline_kac_walk(K, step_angle, mean_reversion, steps, seed, eigenvalues=None, basis=None):
    """Eigenbasis diffused by random Givens rotations, spectrum held fixed.

    Each step rotates a uniformly chosen coordinate plane by an angle drawn
    from ``N(0, step_angle^2)``; with ``mean_reversion = k > 0`` the basis is
    then pulled back to the polar factor of ``(1 - k) Q + k Q0``.
    """
    K = int(K)
    if K < 2:
        raise ParameterError("need K >= 2")
    if step_angle < 0 or not np.isfinite(step_angle):
        raise ParameterError("step_angle must be >= 0")
    if not 0.0 <= mean_reversion <= 1.0:
        raise ParameterError("mean_reversion must lie in [0, 1]")
    if eigenvalues is None:
        lam = 0.7 ** np.arange(K)
        lam = K * lam / lam.sum()
    else:
        lam = np.asarray(eigenvalues, dtype=float)
        if lam.shape != (K,) or np.any(lam < 0):
            raise ValidationError("eigenvalues must be K non-negative values")
    Q0 = np.eye(K) if basis is None else np.asarray(basis, dtype=float)
    if np.max(np.abs(Q0.T @ Q0 - np.eye(K))) > 1e-12:
        raise ValidationError("basis must be orthogonal")
    steps = int(steps)
    rng = stream(seed, "kac")
    planes = rng.integers(0, K * (K - 1) // 2, size=steps)
    angles = rng.standard_normal(steps) * step_angle
    iu, ju = np.triu_indices(K, 1)
    Q = Q0.copy()
    Qs = np.empty((steps, K, K))
    for t in range(steps):
        if t > 0:
            i, j = iu[planes[t]], ju[planes[t]]
            c, s = math.cos(angles[t]), math.sin(angles[t])
            qi, qj = Q[:, i].copy(), Q[:, j].copy()
            Q[:, i] = c * qi - s * qj
            Q[:, j] = s * qi + c * qj
            if mean_reversion > 0:
                Q = _polar((1.0 - mean_reversion) * Q + mean_reversion * Q0)
        Qs[t] = Q
    S = (Qs * lam[None, None, :]) @ np.swapaxes(Qs, 1, 2)
    return CorrPath(np.arange(steps), _normalize_stack(S), bases=Qs)


# ------------------------------------------------------------------ diagnostics

@dataclass(frozen=True, eq=False)
class IncrementSpectrum:
    tau: int
    eigenvalues: np.ndarray  # (n_increments, K)
    std: float
    excess_kurtosis: float
    ks_distance: float

    @property
    def pooled(self):
        return self.eigenvalues.ravel()


def semicircle_cdf(x, radius):
    x = np.clip(np.asarray(x, dtype=float) / radius, -1.0, 1.0)
    return 0.5 + (x * np.sqrt(1.0 - x * x) + np.arcsin(x)) / np.pi


def increment_spectrum(path, tau):
    """Pooled eigenvalues of ``C(t + tau) - C(t)`` over every valid ``t``.

    The semicircle reference has radius ``2 sqrt(m2)`` where ``m2`` is the
    pooled second moment, so both share the same variance.
    """
    tau = int(tau)
    if tau <= 0:
        raise ParameterError("tau must be > 0")
    M = path.matrices
    if len(M) <= tau:
        raise InsufficientDataError("path is not longer than tau")
    D = M[tau:] - M[:-tau]
    ev = np.linalg.eigvalsh(D)
    pooled = ev.ravel()
    m2 = float(np.mean(pooled * pooled))
    if m2 <= 1e-30:
        return IncrementSpectrum(tau, ev, 0.0, math.nan, math.nan)
    kurt = float(np.mean(pooled ** 4) / (m2 * m2) - 3.0)
    radius = 2.0 * math.sqrt(m2)
    ks = float(stats.kstest(pooled, lambda x: semicircle_cdf(x, radius)).statistic)
    return IncrementSpectrum(tau, ev, math.sqrt(m2), kurt, ks)


class OverlapReport(NamedTuple):
    taus: np.ndarray
    fcl_drift: np.ndarray  # (len(taus), K): mean fcl(C(t + tau), v_k(t))
    overlap: np.ndarray  # (len(taus), K): mean (v_k(t) . v_k(t + tau))^2


def eigvec_overlap_decay(path, taus, k_max=None):
    M = path.matrices
    n, K = M.shape[0], M.shape[1]
    k_max = K if k_max is None else int(k_max)
    taus = np.array(sorted(int(t) for t in taus), dtype=np.int64)
    if taus.size == 0 or taus[0] < 0:
        raise ParameterError("taus must be non-negative")
    if taus[-1] >= n:
        raise InsufficientDataError("path too short for the largest tau")
    lam, V = np.linalg.eigh(M)
    V = V[:, :, ::-1][:, :, :k_max]
    drift = np.empty((len(taus), k_max))
    over = np.empty((len(taus), k_max))
    for i, tau in enumerate(taus):
        Va, Vb = V[: n - tau], V[tau:]
        CV = M[tau:] @ Va
        drift[i] = np.mean(np.sum(Va * CV, axis=1), axis=0)
        over[i] = np.mean(np.sum(Va * Vb, axis=1) ** 2, axis=0)
    return OverlapReport(taus, drift, over)
