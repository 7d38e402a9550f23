"""Rank-based factor portfolios and FCL maximization over monotone rank functions."""

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import rankdata

from .correlation import as_matrix, correlation_matrix, fcl
from .errors import (
    AlignmentError,
    DegeneracyError,
    DegenerateIndexError,
    ParameterError,
    RankabilityError,
    ValidationError,
)


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class FactorPortfolio:
    """Weights on volatility-standardized positions."""

    weights: np.ndarray
    criterion_name: str = ""
    market_neutral: bool = False
    beta_neutral: bool = False
    sector_neutral: bool = False
    fcl_value: Optional[float] = None
    coefficients: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "weights", _frozen(self.weights))
        if self.coefficients is not None:
            object.__setattr__(self, "coefficients", _frozen(self.coefficients))


@dataclass(frozen=True)
class MonotoneRankBasis:
    """Piecewise-linear functions of the rank quantile ``u`` in [0, 1].

    ``f(u) = c + sum_j a_j ramp_j(u)`` with ``ramp_j`` rising from 0 to 1
    between consecutive knots; ``f`` is nondecreasing iff every ``a_j >= 0``.
    The constant ``c`` is removed by dollar neutrality.
    """

    n_knots: int = 5

    def __post_init__(self):
        if int(self.n_knots) != self.n_knots or self.n_knots < 3:
            raise ParameterError("need at least 3 knots (basis rank >= 2)")

    @property
    def knots(self):
        return np.linspace(0.0, 1.0, self.n_knots)

    @property
    def rank(self):
        return self.n_knots - 1

    def design(self, u):
        """``len(u) x (n_knots - 1)`` matrix of ramp values."""
        k = self.knots
        u = np.asarray(u, dtype=float)[:, None]
        return np.clip((u - k[None, :-1]) / np.diff(k)[None, :], 0.0, 1.0)

    def evaluate(self, u, coefficients):
        return self.design(u) @ np.asarray(coefficients, dtype=float)


def _finite_ranks(row, name="criterion"):
    row = np.asarray(row, dtype=float)
    ok = np.isfinite(row)
    if np.unique(row[ok]).size < 2:
        raise RankabilityError(f"{name} row has fewer than 2 distinct finite values")
    ranks = np.full(row.shape, np.nan)
    ranks[ok] = rankdata(row[ok], method="average")
    return ranks, ok


def rank_weights(criterion_row):
    """Centered ranks ``rank_i - (n + 1) / 2`` scaled to unit norm.

    Ties get average ranks; non-finite entries get weight 0.
    """
    ranks, ok = _finite_ranks(criterion_row)
    w = np.zeros(ranks.shape)
    w[ok] = ranks[ok] - (ok.sum() + 1) / 2.0
    nrm = np.linalg.norm(w)
    if nrm == 0:
        raise RankabilityError("criterion ranks are all tied")
    return w / nrm


def rank_quantiles(criterion_row):
    """``(rank - 1) / (n - 1)`` on finite entries; non-finite entries get 0.5."""
    ranks, ok = _finite_ranks(criterion_row)
    n = ok.sum()
    u = np.full(ranks.shape, 0.5)
    u[ok] = (ranks[ok] - 1.0) / (n - 1.0)
    return u


def fama_french_weights(criterion_row, quantile=0.2):
    """Equal-weight long the top ``quantile`` and short the bottom one, unit norm."""
    if not 0.0 < quantile <= 0.5:
        raise ParameterError("quantile must lie in (0, 0.5]")
    row = np.asarray(criterion_row, dtype=float)
    ok = np.flatnonzero(np.isfinite(row))
    n = ok.size
    if np.unique(row[ok]).size < 2:
        raise RankabilityError("criterion row has fewer than 2 distinct finite values")
    m = int(np.floor(n * quantile + 1e-9))
    if m < 1:
        raise ParameterError(f"N * quantile = {n * quantile:.3g} < 1")
    order = ok[np.argsort(row[ok], kind="mergesort")]
    w = np.zeros(row.shape)
    w[order[-m:]] = 1.0 / m
    w[order[:m]] = -1.0 / m
    return w / np.linalg.norm(w)


def _sector_matrix(sector_labels, N):
    labels = np.asarray(sector_labels)
    if labels.shape != (N,):
        raise ValidationError("one sector label per asset required")
    uniq, counts = np.unique(labels, return_counts=True)
    if np.any(counts < 2):
        bad = uniq[counts < 2][0]
        raise DegeneracyError(f"sector {bad!r} has fewer than 2 members")
    return (labels[:, None] == uniq[None, :]).astype(float)


def constraint_basis(N, betas=None, sector_labels=None, tol=1e-10):
    """Orthonormal basis of the span of the neutrality constraints."""
    cols = [np.ones(N)]
    if betas is not None:
        b = np.asarray(betas, dtype=float)
        if b.shape != (N,) or not np.all(np.isfinite(b)):
            raise ValidationError("betas must be N finite values")
        cols.append(b)
    if sector_labels is not None:
        cols.extend(_sector_matrix(sector_labels, N).T)
    A = np.column_stack(cols)
    A = A / np.linalg.norm(A, axis=0)
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    r = int(np.sum(s > tol * s[0]))
    if r >= N:
        raise DegeneracyError(f"{r} independent constraints leave no feasible direction for N={N}")
    return U[:, :r]


def project_out(X, Q):
    X = np.asarray(X, dtype=float)
    return X - Q @ (Q.T @ X)


def neutralize(w, betas=None, sector_labels=None):
    """Project ``w`` onto ``{x : sum x = 0, x'beta = 0, sector sums 0}`` and
    rescale to unit norm."""
    w = np.asarray(w, dtype=float)
    N = w.shape[0]
    Q = constraint_basis(N, betas, sector_labels)
    x = project_out(w, Q)
    nrm = np.linalg.norm(x)
    if not nrm > 1e-12 * max(np.linalg.norm(w), 1e-300):
        raise DegeneracyError("weights lie entirely in the constraint span")
    return x / nrm


def maxvar_optimize(C, criterion_row, betas=None, sector_labels=None,
                    basis=MonotoneRankBasis(), criterion_name="criterion"):
    """Neutral portfolio of maximal FCL among monotone functions of the rank.

    Every face of the cone ``a >= 0`` is solved as a symmetric eigenproblem
    on an orthonormal basis of its neutralized ramps; an eigenvector whose
    coefficients share one sign is a stationary point inside that face, and
    the global maximum over the cone is the best such point.
    """
    M = as_matrix(C)
    N = M.shape[0]
    u = rank_quantiles(criterion_row)
    if u.shape != (N,):
        raise ValidationError("criterion row length does not match the matrix")
    Phi = basis.design(u)
    ok = np.isfinite(np.asarray(criterion_row, dtype=float))
    Phi[~ok] = Phi[ok].mean(axis=0)
    Q = constraint_basis(N, betas, sector_labels)
    P = project_out(Phi, Q)
    if np.max(np.linalg.norm(P, axis=0)) < 1e-12:
        raise DegeneracyError("no rank direction survives neutralization")
    scale = np.max(np.linalg.norm(P, axis=0))
    best = None
    J = P.shape[1]
    for size in range(1, J + 1):
        for face in itertools.combinations(range(J), size):
            Pf = P[:, face]
            U, s, Vt = np.linalg.svd(Pf, full_matrices=False)
            if s[-1] < 1e-9 * scale:
                continue
            H = U.T @ M @ U
            lam, Z = np.linalg.eigh(0.5 * (H + H.T))
            A = Vt.T @ (Z / s[:, None])
            for j in range(len(lam)):
                a = A[:, j]
                if np.all(a < 0):
                    a = -a
                if not np.all(a > 0):
                    continue
                if best is None or lam[j] > best[0] + 1e-14:
                    coef = np.zeros(J)
                    coef[list(face)] = a
                    best = (float(lam[j]), coef)
    if best is None:
        raise DegeneracyError("no feasible monotone portfolio")
    coef = best[1] / np.sum(best[1])
    w = P @ coef
    w /= np.linalg.norm(w)
    return FactorPortfolio(
        w, criterion_name, market_neutral=True, beta_neutral=betas is not None,
        sector_neutral=sector_labels is not None, fcl_value=fcl(M, w), coefficients=coef,
    )


def ols_betas(returns, index_returns):
    R = np.asarray(returns, dtype=float)
    x = np.asarray(index_returns, dtype=float)
    xc = x - x.mean()
    vx = float(xc @ xc)
    if vx <= 0:
        raise DegenerateIndexError("index returns have zero variance")
    return (xc @ (R - R.mean(axis=0))) / vx


def build_factor_set(panel, criteria, sector_labels=None, betas=None, C=None,
                     basis=MonotoneRankBasis()):
    """Columns: one maxvar portfolio per criterion (latest row), the uniform
    market portfolio, then one beta-neutral long/short portfolio per sector.

    Sector columns are ``1_s - (1_s'beta / beta'beta) beta`` so that, together
    with the market column, they stay linearly independent. Betas default to
    OLS betas on the equal-weight index.
    """
    if C is None:
        C = correlation_matrix(panel)
    R = panel.returns
    N = R.shape[1]
    if betas is None:
        betas = ols_betas(R, R.mean(axis=1))
    betas = np.asarray(betas, dtype=float)
    cols = []
    for crit in criteria:
        if tuple(crit.assets) != tuple(panel.assets):
            raise AlignmentError(f"criterion {crit.name!r} assets do not match the panel")
        p = maxvar_optimize(C, crit.row(-1), betas, sector_labels, basis, crit.name)
        cols.append(p.weights)
    cols.append(np.ones(N) / np.sqrt(N))
    if sector_labels is not None:
        for s in _sector_matrix(sector_labels, N).T:
            v = s - (s @ betas) / (betas @ betas) * betas
            cols.append(v / np.linalg.norm(v))
    return np.column_stack(cols)


def factor_names(criteria, sector_labels=None):
    """Column labels matching :func:`build_factor_set`."""
    names = [c.name for c in criteria] + ["market"]
    if sector_labels is not None:
        names += [f"sector:{lab}" for lab in np.unique(np.asarray(sector_labels))]
    return names
