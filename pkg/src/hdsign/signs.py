"""Spatial signs, the spatial median and sign summary statistics."""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import DomainError, check_data

__all__ = [
    "spatial_sign",
    "spatial_signs",
    "MedianResult",
    "spatial_median",
    "SpatialMedian",
    "SpatialSignTransformer",
    "SignSummary",
    "sign_summary",
    "trace2_estimator",
    "trace2_from_gram",
    "pairwise_sum",
]

_COINCIDE = 1e-12


def spatial_sign(x):
    """``x / ||x||`` for nonzero ``x``; the zero vector maps to itself."""
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x)
    if r == 0.0:
        return np.zeros_like(x)
    return x / r


def spatial_signs(X):
    """Row-wise spatial signs of an ``(n, p)`` array.

    Returns the sign matrix and a boolean mask of rows that were exactly zero.
    """
    X = np.asarray(X, dtype=float)
    r = np.linalg.norm(X, axis=1)
    zero = r == 0.0
    with np.errstate(invalid="ignore", divide="ignore"):
        U = X / r[:, None]
    if zero.any():
        U[zero] = 0.0
    return U, zero


@dataclass(frozen=True, eq=False)
class MedianResult:
    mu_hat: np.ndarray
    iterations: int
    converged: bool
    final_step: float
    objective_path: np.ndarray = field(repr=False, default=None)


def spatial_median(X, tol=1e-8, max_iter=500):
    """Spatial (geometric) median by the modified Weiszfeld iteration.

    When an iterate lands on a data point the Vardi-Zhang step is used: the
    ordinary Weiszfeld target over the remaining points is blended with the
    current point according to the size of the residual pull, which keeps the
    objective monotone and lets the iteration leave a non-optimal data point.

    Parameters
    ----------
    X : array_like of shape (n, p)
    tol : float
        Stop when ``||mu_new - mu|| / (1 + ||mu_new||) <= tol``.
    max_iter : int

    Returns
    -------
    MedianResult
    """
    X = np.asarray(getattr(X, "X", X), dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] == 0:
        raise DomainError("spatial median of an empty sample is undefined")
    if not tol > 0:
        raise DomainError(f"tol must be positive, got {tol!r}")

    mu = np.median(X, axis=0)
    D = X - mu
    r = np.sqrt(np.einsum("ij,ij->i", D, D))
    path = [r.sum()]
    step = np.inf
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        hit = r <= _COINCIDE
        if hit.all():
            step = 0.0
            converged = True
            break
        eta = hit.sum()
        if eta:
            w = 1.0 / r[~hit]
            Xo = X[~hit]
        else:
            w = 1.0 / r
            Xo = X
        target = (w @ Xo) / w.sum()
        if eta:
            pull = np.linalg.norm(w @ (Xo - mu))
            if pull <= eta:
                # mu is a data point satisfying the optimality condition
                step = 0.0
                converged = True
                break
            frac = eta / pull
            new = (1.0 - frac) * target + frac * mu
        else:
            new = target
        step = np.linalg.norm(new - mu) / (1.0 + np.linalg.norm(new))
        mu = new
        D = X - mu
        r = np.sqrt(np.einsum("ij,ij->i", D, D))
        path.append(r.sum())
        if step <= tol:
            converged = True
            break
    return MedianResult(mu, it, converged, float(step), np.asarray(path))


class SpatialMedian(BaseEstimator):
    """Spatial median estimator.

    Parameters
    ----------
    tol : float, default=1e-8
        Relative step size at which the Weiszfeld iteration stops.
    max_iter : int, default=500

    Attributes
    ----------
    location_ : ndarray of shape (n_features,)
    n_iter_ : int
    converged_ : bool
    """

    def __init__(self, tol=1e-8, max_iter=500):
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y=None):
        X = check_data(X)
        res = spatial_median(X, tol=self.tol, max_iter=self.max_iter)
        self.location_ = res.mu_hat
        self.n_iter_ = res.iterations
        self.converged_ = res.converged
        self.n_features_in_ = X.shape[1]
        return self


class SpatialSignTransformer(TransformerMixin, BaseEstimator):
    """Map observations to spatial signs around a center.

    ``center=None`` uses the origin; ``center="spatial_median"`` learns the
    spatial median in ``fit``; an array is used as given.
    """

    def __init__(self, center=None, tol=1e-8, max_iter=500):
        self.center = center
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y=None):
        X = check_data(X)
        if self.center is None:
            self.center_ = np.zeros(X.shape[1])
        elif isinstance(self.center, str):
            if self.center != "spatial_median":
                raise DomainError(f"unknown center {self.center!r}")
            self.center_ = spatial_median(X, self.tol, self.max_iter).mu_hat
        else:
            self.center_ = np.asarray(self.center, dtype=float)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "center_")
        X = check_data(X)
        return spatial_signs(X - self.center_)[0]


def pairwise_sum(U):
    """``sum_{i<j} U_i'U_j`` via ``(||sum U_i||^2 - sum ||U_i||^2) / 2``."""
    s = U.sum(axis=0)
    return 0.5 * (s @ s - np.einsum("ij,ij->", U, U))


def trace2_estimator(U):
    """Leave-two-out estimate of ``tr(Sigma_U^2)`` from an ``(n, p)`` sign matrix.

    Averages ``(U_j - Ubar_jk)'U_k * (U_k - Ubar_jk)'U_j`` over ordered pairs
    ``j != k``, where ``Ubar_jk`` is the mean of the other ``n - 2`` rows.
    Runs in ``O(n^2 p)`` through the Gram matrix. The value may be negative in
    degenerate samples and is returned unchanged.
    """
    U = np.asarray(U, dtype=float)
    if U.shape[0] < 4:
        raise DomainError(f"trace estimator needs n >= 4, got n={U.shape[0]}")
    return trace2_from_gram(U @ U.T)


def trace2_from_gram(G):
    """:func:`trace2_estimator` evaluated from the Gram matrix ``G = U U'``."""
    n = G.shape[0]
    s = G.sum(axis=0)  # s[k] = (sum_i U_i)'U_k
    d = np.diag(G)
    # A[j, k] = (U_j - Ubar_jk)'U_k
    A = G - (s[None, :] - G - d[None, :]) / (n - 2)
    M = A * A.T
    np.fill_diagonal(M, 0.0)
    return float(M.sum() / (n * (n - 1)))


@dataclass(frozen=True, eq=False)
class SignSummary:
    U: np.ndarray
    Ubar: np.ndarray
    Sn: float
    trace2_hat: float
    centered: bool
    zero_rows: np.ndarray

    @property
    def n(self):
        return self.U.shape[0]

    @cached_property
    def sigmaU_hat(self):
        """Empirical sign scatter ``(1/n) sum U_i U_i'``."""
        return (self.U.T @ self.U) / self.n

    @property
    def has_zero_rows(self):
        return bool(self.zero_rows.any())


def sign_summary(X, center=None):
    """Sign statistics of a sample, uncentered or around ``center``.

    ``trace2_hat`` is ``nan`` when ``n < 4``.
    """
    X = np.asarray(getattr(X, "X", X), dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if center is not None:
        center = np.asarray(center, dtype=float)
        if center.shape != (X.shape[1],):
            raise DomainError(f"center has shape {center.shape}, data have p={X.shape[1]}")
        X = X - center
    U, zero = spatial_signs(X)
    n = U.shape[0]
    return SignSummary(
        U=U,
        Ubar=U.mean(axis=0),
        Sn=float(pairwise_sum(U)),
        trace2_hat=trace2_estimator(U) if n >= 4 else float("nan"),
        centered=center is not None,
        zero_rows=zero,
    )
