"""Correlation estimation, eigen-systems, clipping, FCL and constrained PCA."""

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import (
    DegenerateAssetError,
    InsufficientDataError,
    NumericalError,
    ParameterError,
    PSDError,
    RankError,
    ValidationError,
)
from .rng import stream

SYM_TOL = 1e-12
PSD_TOL = 1e-10
RANK_TOL = 1e-10
DEFAULT_HALFLIFE = 60.0


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CorrelationModel:
    """Validated correlation matrix with the metadata of its estimation."""

    matrix: np.ndarray
    estimator: str = "pearson"
    halflife: Optional[float] = None
    sample_T: Optional[int] = None
    period_seconds: Optional[int] = None

    def __post_init__(self):
        M = _frozen(self.matrix)
        object.__setattr__(self, "matrix", M)
        if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 1:
            raise ValidationError("correlation matrix must be square")
        if not np.all(np.isfinite(M)):
            raise PSDError("correlation matrix has non-finite entries")
        if np.max(np.abs(M - M.T)) > SYM_TOL:
            raise PSDError("correlation matrix is not symmetric")
        if np.max(np.abs(np.diag(M) - 1.0)) > SYM_TOL:
            raise PSDError("correlation matrix diagonal is not 1")
        lam_min = np.linalg.eigvalsh(M)[0]
        if lam_min < -PSD_TOL:
            raise PSDError(f"correlation matrix is not PSD (min eigenvalue {lam_min:.3g})")
        if self.estimator not in ("pearson", "ewma", "clipped", "given"):
            raise ValidationError(f"unknown estimator {self.estimator!r}")

    @property
    def N(self):
        return self.matrix.shape[0]


def as_matrix(C):
    return C.matrix if isinstance(C, CorrelationModel) else np.asarray(C, dtype=float)


def to_correlation(S):
    """Rescale a covariance-like matrix to unit diagonal, exactly symmetric."""
    S = np.asarray(S, dtype=float)
    d = np.sqrt(np.diag(S))
    if np.any(d <= 0) or not np.all(np.isfinite(d)):
        raise NumericalError("matrix has a non-positive diagonal entry")
    C = S / np.outer(d, d)
    C = 0.5 * (C + C.T)
    np.fill_diagonal(C, 1.0)
    return C


def standardize(R, assets=None):
    """Columns of ``R`` with zero mean and unit (population) variance."""
    R = np.asarray(R, dtype=float)
    if R.shape[0] < 2:
        raise InsufficientDataError("need T >= 2 observations")
    flat = np.ptp(R, axis=0) == 0
    if np.any(flat):
        j = int(np.flatnonzero(flat)[0])
        raise DegenerateAssetError(assets[j] if assets is not None else j)
    X = R - R.mean(axis=0)
    X /= np.sqrt(np.mean(X * X, axis=0))
    return X


def correlation_from_returns(R, assets=None):
    X = standardize(R, assets)
    C = X.T @ X / X.shape[0]
    C = 0.5 * (C + C.T)
    np.fill_diagonal(C, 1.0)
    return C


def correlation_matrix(panel, estimator="pearson", halflife=DEFAULT_HALFLIFE):
    """Estimate the correlation matrix of a :class:`ReturnPanel`.

    Parameters
    ----------
    panel : ReturnPanel
    estimator : {"pearson", "ewma"}
        Pearson uses equal weights. EWMA weights period ``t`` by
        ``0.5 ** ((T - 1 - t) / halflife)`` for both means and covariances.
    halflife : float
        EWMA half-life in periods.
    """
    R = panel.returns
    T = R.shape[0]
    if estimator == "pearson":
        C = correlation_from_returns(R, panel.assets)
        return CorrelationModel(C, "pearson", None, T, panel.period_seconds)
    if estimator != "ewma":
        raise ParameterError(f"unknown estimator {estimator!r}")
    if not halflife > 0:
        raise ParameterError("halflife must be > 0")
    standardize(R, panel.assets)  # degenerate-asset check
    w = 0.5 ** ((T - 1 - np.arange(T)) / float(halflife))
    w /= w.sum()
    X = R - w @ R
    S = (X * w[:, None]).T @ X
    d = np.diag(S)
    if np.any(d <= 0):
        j = int(np.flatnonzero(d <= 0)[0])
        raise DegenerateAssetError(panel.assets[j])
    return CorrelationModel(to_correlation(S), "ewma", float(halflife), T, panel.period_seconds)


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Eigenvalues in descending order; eigenvectors as columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self):
        V = self.eigenvectors
        return (V * self.eigenvalues) @ V.T


def fix_signs(V):
    """Flip columns so each one's largest-magnitude entry is positive."""
    V = np.array(V, dtype=float)
    idx = np.argmax(np.abs(V), axis=0)
    s = np.sign(V[idx, np.arange(V.shape[1])])
    s[s == 0] = 1.0
    return V * s


def sym_eigh(M):
    """Descending eigen-decomposition of a symmetric matrix."""
    M = np.asarray(M, dtype=float)
    try:
        lam, V = np.linalg.eigh(0.5 * (M + M.T))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigen-decomposition did not converge: {exc}") from exc
    return lam[::-1].copy(), fix_signs(V[:, ::-1])


def eigen_decompose(C):
    lam, V = sym_eigh(as_matrix(C))
    return EigenSystem(_frozen(lam), _frozen(V))


def mp_clip(C, q):
    """Replace eigenvalues below the Marchenko-Pastur edge ``(1 + 1/sqrt(q))**2``
    by their average and renormalize to unit diagonal."""
    if not np.isfinite(q) or q <= 1:
        raise ParameterError(f"invalid ratio q={q}; clipping needs q = T/N > 1")
    M = as_matrix(C)
    lam, V = sym_eigh(M)
    edge = (1.0 + 1.0 / np.sqrt(q)) ** 2
    noise = lam < edge
    if np.any(noise):
        lam = lam.copy()
        lam[noise] = lam[noise].mean()
    S = (V * lam) @ V.T
    out = to_correlation(S)
    meta = {}
    if isinstance(C, CorrelationModel):
        meta = dict(halflife=C.halflife, sample_T=C.sample_T, period_seconds=C.period_seconds)
    return CorrelationModel(out, "clipped", **meta)


def fcl(C, w):
    """Factor correlation level ``w' C w / w' w`` of standardized weights ``w``."""
    w = np.asarray(w, dtype=float)
    M = as_matrix(C)
    if w.shape != (M.shape[0],):
        raise ValidationError("weight vector length does not match the matrix")
    ww = float(w @ w)
    if not np.isfinite(ww) or ww == 0.0:
        raise ParameterError("invalid weight vector: zero or non-finite")
    return float(w @ M @ w) / ww


@dataclass(frozen=True, eq=False)
class ReducedEigenSystem:
    """Spectrum of a correlation matrix restricted to a factor subspace.

    ``basis`` is the orthonormalized factor basis G (columns in pivot order,
    see ``pivot_order``); ``reduced_matrix`` is ``G' C G``.
    """

    factor_weights: np.ndarray
    basis: np.ndarray
    pivot_order: tuple
    reduced_matrix: np.ndarray
    constrained_eigenvalues: np.ndarray
    reduced_eigenvectors: np.ndarray
    constrained_eigenvectors_in_asset_space: np.ndarray

    @property
    def K(self):
        return self.basis.shape[1]


def pivoted_gram_schmidt(A, tol=RANK_TOL):
    """Orthonormalize the columns of ``A`` choosing the largest residual first.

    Returns ``(G, order)``. A column whose residual norm falls below ``tol``
    times its original norm raises :class:`RankError` naming that column.
    """
    A = np.array(A, dtype=float)
    if A.ndim != 2 or A.shape[1] < 1:
        raise ValidationError("factor matrix must be N x K with K >= 1")
    N, K = A.shape
    if K > N:
        raise RankError(N, f"K={K} factors exceed N={N} assets")
    norms = np.linalg.norm(A, axis=0)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise RankError(int(zero[0]), f"factor column {int(zero[0])} is zero")
    Rres = A / norms
    remaining = list(range(K))
    G = np.empty((N, K))
    order = []
    for j in range(K):
        res = np.linalg.norm(Rres[:, remaining], axis=0)
        p = int(np.argmax(res))
        if res[p] < tol:
            raise RankError(min(remaining))
        col = remaining.pop(p)
        g = Rres[:, col] / res[p]
        # second pass keeps orthogonality at machine precision
        g -= G[:, :j] @ (G[:, :j].T @ g)
        g /= np.linalg.norm(g)
        G[:, j] = g
        order.append(col)
        if remaining:
            Rres[:, remaining] -= np.outer(g, g @ Rres[:, remaining])
    return G, tuple(order)


def constrained_eigen(C, factors):
    """Diagonalize ``C`` inside the span of the factor portfolios."""
    M = as_matrix(C)
    F = np.asarray(factors, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    if F.shape[0] != M.shape[0]:
        raise ValidationError("factor matrix rows must match the number of assets")
    G, order = pivoted_gram_schmidt(F)
    H = G.T @ M @ G
    H = 0.5 * (H + H.T)
    lam, U = sym_eigh(H)
    Va = fix_signs(G @ U)
    # keep the reduced vectors consistent with the sign-fixed asset-space ones
    U = G.T @ Va
    return ReducedEigenSystem(
        _frozen(F / np.linalg.norm(F, axis=0)), _frozen(G), order, _frozen(H),
        _frozen(lam), _frozen(U), _frozen(Va),
    )


class FclTest(NamedTuple):
    fcl: float
    p_value: float


def fcl_bootstrap_null(X, w, block_len, n_boot, seed, chunk=64):
    """Bootstrap FCLs of standardized returns ``X`` under independence.

    Each asset is resampled by a circular block bootstrap with its own block
    starts, which removes cross-asset dependence while keeping each series'
    short-range autocorrelation. Every replicate is re-standardized.
    """
    T, N = X.shape
    w = np.asarray(w, dtype=float)
    ww = float(w @ w)
    L = int(block_len)
    nb = -(-T // L)
    rng = stream(seed, "fcl-bootstrap")
    starts = rng.integers(0, T, size=(n_boot, nb, N))
    offs = np.arange(L)
    cols = np.arange(N)
    out = np.empty(n_boot)
    for b0 in range(0, n_boot, chunk):
        s = starts[b0: b0 + chunk]
        idx = (s[:, :, None, :] + offs[None, None, :, None]) % T
        idx = idx.reshape(s.shape[0], nb * L, N)[:, :T]
        Xb = X[idx, cols]
        Xb -= Xb.mean(axis=1, keepdims=True)
        sd = np.sqrt(np.mean(Xb * Xb, axis=1, keepdims=True))
        Xb /= np.where(sd > 0, sd, 1.0)
        p = Xb @ w
        out[b0: b0 + chunk] = np.sum(p * p, axis=1) / (T * ww)
    return out


def fcl_significance(panel, w, block_len, n_boot, seed):
    """Test FCL > 1 against the independent-assets null.

    Returns ``(fcl_hat, p_value)`` with ``p_value`` the fraction of bootstrap
    FCLs at least as large as the observed one.
    """
    if int(n_boot) != n_boot or n_boot < 100:
        raise ParameterError("n_boot must be an integer >= 100")
    if int(block_len) != block_len or block_len < 1:
        raise ParameterError("block_len must be an integer >= 1")
    R = panel.returns if hasattr(panel, "returns") else np.asarray(panel, dtype=float)
    T = R.shape[0]
    if T < 2 * block_len:
        raise InsufficientDataError(f"T={T} < 2 * block_len={2 * block_len}")
    X = standardize(R, getattr(panel, "assets", None))
    w = np.asarray(w, dtype=float)
    if w.shape != (X.shape[1],):
        raise ValidationError("weight vector length does not match the panel")
    ww = float(w @ w)
    if ww == 0.0 or not np.isfinite(ww):
        raise ParameterError("invalid weight vector: zero or non-finite")
    p = X @ w
    fcl_hat = float(p @ p) / (T * ww)
    null = fcl_bootstrap_null(X, w, int(block_len), int(n_boot), seed)
    return FclTest(fcl_hat, float(np.mean(null >= fcl_hat)))
