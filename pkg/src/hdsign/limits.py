"""Limit laws of the standardized pairwise sign statistic.

Under the null, ``T_n = S_n / sqrt(C(n,2) tau)`` with ``tau = tr(Sigma_U^2)``
behaves like the Gaussian quadratic form

    Q_p = (xi' Sigma_U xi - 1) / sqrt(2 tau),   xi ~ N(0, I_p),

which equals in law the mixture ``T_inf = sqrt(1 - sum a_i^2) Z_0 +
sum a_i (Z_i^2 - 1) / sqrt(2)`` with ``a_i = lambda_i / sqrt(tau)``.  This
module samples both laws and computes the fourth-moment ratio
``kappa4 = E[(U_1'U_2)^4] / tau^2`` that governs how fast the universality
approximation kicks in.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from ._validation import DomainError, check_positive_int
from .rng import as_generator
from .scatter import EquicorrelatedScatter, sample
from .signs import spatial_signs

__all__ = [
    "SpectralWeights",
    "spectral_weights",
    "weights_from_eigenvalues",
    "sample_T_infinity",
    "sample_Qp",
    "clt_gate",
    "Kappa4Report",
    "kappa4_spherical",
    "kappa4_compound_symmetric",
    "kappa4_mc",
    "sign_pairs",
]

_CHUNK_ELEMS = 2_000_000


@dataclass(frozen=True, eq=False)
class SpectralWeights:
    lam: np.ndarray
    alpha: np.ndarray
    tau: float

    @property
    def p(self):
        return self.lam.size


def weights_from_eigenvalues(eigenvalues):
    """Spectral weights from a vector of nonnegative eigenvalues (any order)."""
    lam = np.sort(np.asarray(eigenvalues, dtype=float))[::-1]
    if lam.size and lam[-1] < 0:
        if lam[-1] < -1e-10 * max(lam[0], 0.0) or lam[0] <= 0:
            raise DomainError(f"eigenvalues must be nonnegative, got minimum {lam[-1]:.3g}")
        lam = np.clip(lam, 0.0, None)
    tau = float(np.sum(lam * lam))
    if not tau > 0:
        raise DomainError("tau = tr(Sigma_U^2) must be positive")
    return SpectralWeights(lam, lam / np.sqrt(tau), tau)


def spectral_weights(sigmaU):
    """Descending eigenvalues, normalized weights and ``tau`` of a PSD matrix."""
    S = np.asarray(sigmaU, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DomainError(f"sigmaU must be square, got shape {S.shape}")
    return weights_from_eigenvalues(np.linalg.eigvalsh(0.5 * (S + S.T)))


def _alpha_of(weights):
    if isinstance(weights, SpectralWeights):
        return weights.alpha
    a = np.asarray(weights, dtype=float)
    if a.ndim != 1:
        raise DomainError("weights must be a SpectralWeights or a 1-d array of alphas")
    return a


def _chunks(count, width):
    rows = max(1, _CHUNK_ELEMS // max(width, 1))
    for start in range(0, count, rows):
        yield start, min(count, start + rows)


def sample_T_infinity(weights, count, rng=None):
    """Draws of ``sqrt(1 - sum a_i^2) Z_0 + sum a_i (Z_i^2 - 1) / sqrt(2)``.

    ``weights`` is a :class:`SpectralWeights` or a (possibly truncated) array
    of normalized weights; with a full finite spectrum the Gaussian
    coefficient is zero.
    """
    a = _alpha_of(weights)
    count = check_positive_int(count, "count")
    ss = float(np.sum(a * a))
    if ss > 1.0 + 1e-8:
        raise DomainError(f"sum of squared weights is {ss:.10g} > 1")
    if np.any(a < 0):
        raise DomainError("weights must be nonnegative")
    g = np.sqrt(max(0.0, 1.0 - ss))
    rng = as_generator(rng)
    a = a[a > 0]
    out = np.empty(count)
    for lo, hi in _chunks(count, a.size + 1):
        Z = rng.standard_normal((hi - lo, a.size + 1))
        out[lo:hi] = g * Z[:, 0] + ((Z[:, 1:] ** 2 - 1.0) @ a) / np.sqrt(2.0)
    return out


def sample_Qp(weights, count, rng=None):
    """Draws of ``(xi' Sigma_U xi - tr Sigma_U) / sqrt(2 tr Sigma_U^2)``.

    ``weights`` is a :class:`SpectralWeights` or an array of eigenvalues. If
    the eigenvalues do not sum to one they are rescaled, with a warning; the
    standardized form is unaffected by the rescaling.
    """
    lam = weights.lam if isinstance(weights, SpectralWeights) else np.asarray(weights, dtype=float)
    count = check_positive_int(count, "count")
    total = float(lam.sum())
    if not total > 0:
        raise DomainError("eigenvalues must have a positive sum")
    if abs(total - 1.0) > 1e-6:
        warnings.warn(f"eigenvalues sum to {total:.6g}; rescaled to unit trace", stacklevel=2)
        lam = lam / total
    lam = lam[lam > 0]
    tau = float(np.sum(lam * lam))
    rng = as_generator(rng)
    out = np.empty(count)
    for lo, hi in _chunks(count, lam.size):
        xi = rng.standard_normal((hi - lo, lam.size))
        out[lo:hi] = (xi**2 @ lam - lam.sum()) / np.sqrt(2.0 * tau)
    return out


def clt_gate(sigmaU):
    """``tr(Sigma_U^4) / tr(Sigma_U^2)^2``; small values mean a normal limit."""
    w = spectral_weights(sigmaU)
    return float(np.sum(w.alpha**4))


@dataclass(frozen=True)
class Kappa4Report:
    value: float
    method: str
    stderr: float | None = None
    tau: float | None = None


def kappa4_spherical(p):
    """``3p / (p + 2)`` for signs uniform on the sphere."""
    p = check_positive_int(p, "p")
    return 3.0 * p / (p + 2.0)


def _beta_moment(p, gamma, k):
    """``E[((1+g)T / (1+gT))^k]`` for ``T ~ Beta(1/2, (p-1)/2)``.

    With ``t = s^2`` the Beta density becomes ``2 (1 - s^2)^b / B(1/2, (p-1)/2)``
    on ``[0, 1]``, ``b = (p-3)/2``, which is bounded at the origin. For
    ``p = 2`` the ``(1-s)^{-1/2}`` endpoint singularity is passed to QUADPACK
    as an algebraic weight.
    """
    b = (p - 3) / 2.0
    log_norm = np.log(2.0) - special.betaln(0.5, (p - 1) / 2.0)

    def a2k(s):
        t = s * s
        return ((1.0 + gamma) * t / (1.0 + gamma * t)) ** k

    opts = dict(epsabs=1e-13, epsrel=1e-12, limit=200, full_output=1)
    if b < 0:
        def f(s):
            return np.exp(log_norm + b * np.log1p(s)) * a2k(s)
        pieces = [integrate.quad(f, 0.0, 1.0, weight="alg", wvar=(0.0, b), **opts)[:2]]
    else:
        def f(s):
            return np.exp(log_norm + b * np.log1p(-s * s)) * a2k(s)
        # the density lives on s of order p^{-1/2}
        cut = min(1.0, 12.0 / np.sqrt(p))
        edges = [0.0, cut / 4, cut / 2, cut] + ([1.0] if cut < 1.0 else [])
        pieces = [integrate.quad(f, lo, hi, **opts)[:2] for lo, hi in zip(edges, edges[1:])]
    val = sum(v for v, _ in pieces)
    err = sum(e for _, e in pieces)
    if err > 1e-10:
        raise ArithmeticError(
            f"quadrature for E[A^{2 * k}] did not reach 1e-10 (estimated error {err:.3g})")
    return val


def kappa4_compound_symmetric(p, rho):
    """Exact ``kappa4`` for angular central Gaussian signs with equicorrelated scatter.

    The squared projection ``A^2`` of a sign on ``1/sqrt(p)`` equals
    ``(1+g)T / (1+gT)`` with ``g = rho p / (1 - rho)`` and
    ``T ~ Beta(1/2, (p-1)/2)``. From ``m2 = E A^2`` and ``m4 = E A^4``:

        E V^2 = m2^2 + (1 - m2)^2 / (p - 1)
        E V^4 = m4^2 + 6 (m2 - m4)^2 / (p - 1) + 3 (1 - 2 m2 + m4)^2 / ((p - 1)(p + 1))

    for ``V = U_1'U_2``.
    """
    p = check_positive_int(p, "p", minimum=2)
    if not (-1.0 / (p - 1) < rho < 1.0):
        raise DomainError(f"rho must lie in ({-1.0 / (p - 1):.6g}, 1), got {rho!r}")
    gamma = rho * p / (1.0 - rho)
    m2 = _beta_moment(p, gamma, 1)
    m4 = _beta_moment(p, gamma, 2)
    ev2 = m2**2 + (1.0 - m2) ** 2 / (p - 1)
    ev4 = (m4**2 + 6.0 * (m2 - m4) ** 2 / (p - 1)
           + 3.0 * (1.0 - 2.0 * m2 + m4) ** 2 / ((p - 1) * (p + 1)))
    return Kappa4Report(ev4 / ev2**2, "CompoundSymmetricExact", None, ev2)


def sign_pairs(model, scatter, pairs, rng=None):
    """Inner products ``U_1'U_2`` of ``pairs`` independent sign pairs."""
    pairs = check_positive_int(pairs, "pairs")
    rng = as_generator(rng)
    out = np.empty(pairs)
    for lo, hi in _chunks(pairs, 2 * scatter.p):
        m = hi - lo
        U, _ = spatial_signs(sample(model, scatter, 2 * m, rng).X)
        out[lo:hi] = np.einsum("ij,ij->i", U[:m], U[m:])
    return out


def kappa4_mc(model, scatter, pairs, rng=None):
    """Monte Carlo ``kappa4`` with a delta-method standard error."""
    if pairs < 10_000:
        raise DomainError(f"kappa4_mc needs at least 10^4 pairs, got {pairs}")
    V2 = sign_pairs(model, scatter, pairs, rng) ** 2
    V4 = V2 * V2
    m2, m4 = V2.mean(), V4.mean()
    value = m4 / m2**2
    grad = np.array([-2.0 * m4 / m2**3, 1.0 / m2**2])
    cov = np.cov(np.vstack([V2, V4])) / pairs
    stderr = float(np.sqrt(grad @ cov @ grad))
    return Kappa4Report(float(value), "MonteCarlo", stderr, float(m2))


def kappa4_report(scatter):
    """Closed-form ``kappa4`` for spherical or equicorrelated scatter."""
    if isinstance(scatter, EquicorrelatedScatter):
        if scatter.rho == 0.0 or scatter.p == 1:
            return Kappa4Report(kappa4_spherical(scatter.p), "SphericalClosedForm", None,
                                1.0 / scatter.p)
        return kappa4_compound_symmetric(scatter.p, scatter.rho)
    raise DomainError("closed form available only for equicorrelated scatter")
