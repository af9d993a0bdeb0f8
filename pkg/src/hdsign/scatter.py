"""Scatter matrices and elliptical samplers.

Two scatter forms are supported: the equicorrelated matrix
``sigma2 * ((1 - rho) I + rho 11')`` with an O(p) square root, and a general
symmetric positive semidefinite matrix.  Observations are drawn from the
Gaussian, multivariate t and two-component scale-mixture normal families.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ._validation import DomainError, check_positive_int

__all__ = [
    "EquicorrelatedScatter",
    "GeneralScatter",
    "DistributionModel",
    "Dataset",
    "build_equicorrelated",
    "general_scatter",
    "sample",
    "model_covariance_factor",
    "power_shift_delta",
]


@dataclass(frozen=True)
class EquicorrelatedScatter:
    p: int
    rho: float
    sigma2: float = 1.0

    def dense(self):
        S = np.full((self.p, self.p), self.sigma2 * self.rho)
        np.fill_diagonal(S, self.sigma2)
        return S

    def eigenvalues(self):
        """Eigenvalues in descending order when ``rho >= 0``."""
        lam = np.full(self.p, self.sigma2 * (1.0 - self.rho))
        lam[0] = self.sigma2 * (1.0 - self.rho + self.p * self.rho)
        return lam

    def trace_sq(self):
        p, rho = self.p, self.rho
        return self.sigma2**2 * (p + p * (p - 1) * rho**2)

    def apply_sqrt(self, Z):
        """Rows of ``Z`` mapped through the symmetric square root."""
        p, rho = self.p, self.rho
        a = np.sqrt(1.0 - rho)
        b = (np.sqrt(1.0 - rho + p * rho) - a) / p
        return np.sqrt(self.sigma2) * (a * Z + b * Z.sum(axis=1, keepdims=True))


@dataclass(frozen=True, eq=False)
class GeneralScatter:
    matrix: np.ndarray

    @property
    def p(self):
        return self.matrix.shape[0]

    def dense(self):
        return self.matrix.copy()

    @cached_property
    def _eig(self):
        lam, V = np.linalg.eigh(self.matrix)
        return lam[::-1], V[:, ::-1]

    def eigenvalues(self):
        return self._eig[0].copy()

    def trace_sq(self):
        return float(np.sum(self.matrix * self.matrix))

    @cached_property
    def _root(self):
        lam, V = self._eig
        lam = np.where(lam < 1e-12 * lam[0], 0.0, lam)
        return (V * np.sqrt(lam)) @ V.T

    def apply_sqrt(self, Z):
        return Z @ self._root


def build_equicorrelated(p, rho, sigma2=1.0):
    """Equicorrelated scatter ``sigma2 * ((1 - rho) I + rho 11')``.

    Negative ``rho`` is allowed down to the positive-definiteness bound
    ``-1/(p-1)``.
    """
    p = check_positive_int(p, "p")
    lower = -1.0 / (p - 1) if p > 1 else -np.inf
    if not (lower < rho < 1.0):
        raise DomainError(f"rho must lie in the open interval ({lower:.6g}, 1), got {rho!r}")
    if not sigma2 > 0:
        raise DomainError(f"sigma2 must be positive, got {sigma2!r}")
    return EquicorrelatedScatter(p, float(rho), float(sigma2))


def general_scatter(matrix):
    M = np.array(matrix, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DomainError(f"scatter must be a square matrix, got shape {M.shape}")
    scale = max(np.max(np.abs(M)), np.finfo(float).tiny)
    if np.max(np.abs(M - M.T)) > 1e-12 * scale:
        raise DomainError("scatter matrix is not symmetric")
    M = 0.5 * (M + M.T)
    lam = np.linalg.eigvalsh(M)
    if lam[-1] <= 0 or lam[0] < -1e-10 * lam[-1]:
        raise DomainError(f"scatter matrix is not positive semidefinite (min eigenvalue {lam[0]:.3g})")
    return GeneralScatter(M)


@dataclass(frozen=True, eq=False)
class DistributionModel:
    """Elliptical family with location.

    ``family`` is one of ``"normal"``, ``"t"`` (uses ``nu``) or ``"mixture"``
    (uses ``weight`` and ``scale2``: with probability ``weight`` the draw
    comes from ``N(mu, scale2 * Sigma)``).
    """

    family: str = "normal"
    nu: float = 3.0
    weight: float = 0.2
    scale2: float = 9.0
    location: np.ndarray | None = None

    def __post_init__(self):
        if self.family not in ("normal", "t", "mixture"):
            raise DomainError(f"unknown family {self.family!r}")
        if self.family == "t" and not self.nu > 2:
            raise DomainError(f"t family needs nu > 2 for a finite covariance, got {self.nu!r}")
        if self.family == "mixture":
            if not 0.0 <= self.weight <= 1.0:
                raise DomainError(f"mixture weight must lie in [0, 1], got {self.weight!r}")
            if not self.scale2 > 0:
                raise DomainError(f"mixture scale2 must be positive, got {self.scale2!r}")

    def with_location(self, location):
        return DistributionModel(self.family, self.nu, self.weight, self.scale2,
                                 np.asarray(location, dtype=float))


@dataclass(eq=False)
class Dataset:
    X: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]


def _chisquare(rng, nu, size):
    if float(nu).is_integer() and nu <= 10:
        return np.sum(rng.standard_normal((size, int(nu))) ** 2, axis=1)
    return rng.chisquare(nu, size)


def sample(model, scatter, n, rng):
    """Draw ``n`` i.i.d. rows from ``model`` with scatter ``scatter``."""
    n = check_positive_int(n, "n")
    p = scatter.p
    if model.location is not None and np.shape(model.location) != (p,):
        raise DomainError(f"location has shape {np.shape(model.location)}, scatter dimension is {p}")
    X = scatter.apply_sqrt(rng.standard_normal((n, p)))
    if model.family == "t":
        s = _chisquare(rng, model.nu, n)
        X /= np.sqrt(s / model.nu)[:, None]
    elif model.family == "mixture":
        inflated = rng.random(n) < model.weight
        X[inflated] *= np.sqrt(model.scale2)
    if model.location is not None:
        X += model.location
    return Dataset(X, {"model": model, "scatter": scatter})


def model_covariance_factor(model):
    """Scalar ``c`` with ``Cov(X) = c * Sigma``."""
    if model.family == "normal":
        return 1.0
    if model.family == "t":
        if not model.nu > 2:
            raise DomainError(f"t family needs nu > 2, got {model.nu!r}")
        return model.nu / (model.nu - 2.0)
    return (1.0 - model.weight) + model.weight * model.scale2


def power_shift_delta(n, p, scatter, model):
    """Per-coordinate shift ``delta`` of the power alternative ``mu = delta * 1``.

    ``delta = 2 * sqrt(sqrt(tr(C^2)) / (n p))`` where ``C = c * Sigma`` is the
    covariance of the model.
    """
    if scatter.p != p:
        raise DomainError(f"scatter dimension {scatter.p} does not match p={p}")
    c = model_covariance_factor(model)
    tr_c2 = c * c * scatter.trace_sq()
    return 2.0 * np.sqrt(np.sqrt(tr_c2) / (n * p))
