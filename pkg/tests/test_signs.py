import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.optimize import minimize

from hdsign import DomainError
from hdsign.signs import (
    SpatialMedian,
    SpatialSignTransformer,
    sign_summary,
    spatial_median,
    spatial_sign,
    spatial_signs,
    trace2_estimator,
)


def unit_rows(rng, n, p):
    Z = rng.standard_normal((n, p))
    return Z / np.linalg.norm(Z, axis=1, keepdims=True)


def pairwise_loop(U):
    n = len(U)
    return sum(U[i] @ U[j] for i in range(n) for j in range(i + 1, n))


def trace2_literal(U):
    """The leave-two-out display written as explicit loops over j, k and i."""
    n, p = U.shape
    total = 0.0
    for j in range(n):
        for k in range(n):
            if j == k:
                continue
            ubar = np.zeros(p)
            for i in range(n):
                if i != j and i != k:
                    ubar += U[i]
            ubar /= n - 2
            total += ((U[j] - ubar) @ U[k]) * ((U[k] - ubar) @ U[j])
    return total / (n * (n - 1))


# ----------------------------------------------------------------- spatial sign

def test_spatial_sign_345():
    np.testing.assert_allclose(spatial_sign([3.0, 4.0]), [0.6, 0.8])


def test_spatial_sign_zero():
    np.testing.assert_array_equal(spatial_sign([0.0, 0.0, 0.0]), [0.0, 0.0, 0.0])


@given(x=arrays(np.float64, st.integers(1, 8), elements=st.floats(-1e3, 1e3)),
       c=st.floats(1e-3, 1e3))
@settings(max_examples=100, deadline=None)
def test_sign_unit_norm_and_scale_invariance(x, c):
    if np.linalg.norm(x) < 1e-6:
        return
    u = spatial_sign(x)
    assert np.linalg.norm(u) == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(spatial_sign(c * x), u, atol=1e-12)


def test_zero_rows_flagged():
    X = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 2.0]])
    U, zero = spatial_signs(X)
    assert zero.tolist() == [False, True, False]
    np.testing.assert_array_equal(U[1], 0.0)


# ----------------------------------------------------------------- spatial median

def test_median_symmetric_cross():
    X = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    res = spatial_median(X)
    np.testing.assert_allclose(res.mu_hat, [0.0, 0.0], atol=1e-12)
    assert res.converged


def test_median_one_dimensional():
    res = spatial_median(np.array([[0.0], [1.0], [10.0]]))
    assert res.mu_hat[0] == pytest.approx(1.0, abs=1e-10)
    assert res.converged


def test_median_empty_sample():
    with pytest.raises(DomainError):
        spatial_median(np.empty((0, 3)))


def test_median_matches_derivative_free_minimizer():
    rng = np.random.default_rng(11)
    X = rng.standard_normal((50, 5)) * [1, 2, 3, 1, 0.5] + 1.0
    res = spatial_median(X)

    def objective(mu):
        return np.linalg.norm(X - mu, axis=1).sum()

    oracle = minimize(objective, X.mean(axis=0), method="Nelder-Mead",
                      options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 200_000,
                               "maxfev": 200_000})
    np.testing.assert_allclose(res.mu_hat, oracle.x, atol=1e-4)
    assert objective(res.mu_hat) <= oracle.fun + 1e-9


def test_median_leaves_coincident_start():
    # the coordinatewise median starts on the point (0, 0), which is not optimal
    X = np.array([[0.0, 0.0], [5.0, 0.1], [5.0, -0.1], [5.2, 0.0], [4.9, 0.05]])
    res = spatial_median(X)

    def grad_norm(mu):
        D = X - mu
        r = np.linalg.norm(D, axis=1)
        return np.linalg.norm((D / r[:, None]).sum(axis=0))

    assert not np.allclose(res.mu_hat, 0.0)
    assert res.converged
    assert grad_norm(res.mu_hat) < 1e-5


def test_median_stops_at_optimal_data_point():
    # the central point of a symmetric star is itself the spatial median
    X = np.array([[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0], [0.0, 0.0]])
    res = spatial_median(X)
    np.testing.assert_array_equal(res.mu_hat, [0.0, 0.0])
    assert res.converged and res.final_step == 0.0


@given(seed=st.integers(0, 10_000), n=st.integers(2, 30), p=st.integers(1, 6))
@settings(max_examples=60, deadline=None)
def test_median_objective_monotone(seed, n, p):
    rng = np.random.default_rng(seed)
    X = rng.standard_t(2, size=(n, p))
    path = spatial_median(X).objective_path
    assert np.all(np.diff(path) <= 1e-10 * path[0])


@given(seed=st.integers(0, 10_000), s=st.floats(0.01, 100))
@settings(max_examples=40, deadline=None)
def test_median_equivariance(seed, s):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((25, 4))
    c = rng.standard_normal(4) * 10
    base = spatial_median(X).mu_hat
    shifted = spatial_median(X + c).mu_hat
    scaled = spatial_median(s * X).mu_hat
    np.testing.assert_allclose(shifted, base + c, atol=1e-6 * (1 + np.abs(c).max()))
    np.testing.assert_allclose(scaled, s * base, atol=1e-6 * max(1.0, s))


def test_converged_implies_small_step():
    rng = np.random.default_rng(3)
    res = spatial_median(rng.standard_normal((30, 3)), tol=1e-10)
    assert res.converged and res.final_step <= 1e-10
    res = spatial_median(rng.standard_normal((30, 3)), tol=1e-14, max_iter=2)
    assert not res.converged and res.iterations == 2


# ----------------------------------------------------------------- summaries

def test_summary_identical_signs():
    s = sign_summary(np.array([[1.0, 0.0], [3.0, 0.0]]))
    assert s.Sn == pytest.approx(1.0)
    np.testing.assert_allclose(s.Ubar, [1.0, 0.0])
    assert np.isnan(s.trace2_hat)


def test_summary_orthogonal_signs():
    s = sign_summary(np.eye(3) * [1.0, 2.0, 5.0])
    assert s.Sn == pytest.approx(0.0, abs=1e-15)


def test_summary_center():
    X = np.array([[2.0, 1.0], [1.0, 2.0], [0.0, 1.0], [1.0, 0.0]])
    s = sign_summary(X, center=[1.0, 1.0])
    assert s.centered
    np.testing.assert_allclose(s.U, [[1, 0], [0, 1], [-1, 0], [0, -1]], atol=1e-15)
    assert s.Sn == pytest.approx(-2.0)
    with pytest.raises(DomainError):
        sign_summary(X, center=[1.0])


def test_summary_zero_row_contributes_nothing():
    X = np.array([[1.0, 0.0], [0.0, 0.0], [1.0, 1.0], [0.0, 2.0]])
    s = sign_summary(X)
    assert s.has_zero_rows
    U, _ = spatial_signs(X)
    assert s.Sn == pytest.approx(pairwise_loop(U))


@pytest.mark.parametrize("seed", range(5))
def test_sn_identity_random(seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((20, 10))
    s = sign_summary(X)
    assert s.Sn == pytest.approx(pairwise_loop(s.U), rel=1e-10)


def test_sn_identity_many_datasets():
    rng = np.random.default_rng(99)
    for _ in range(200):
        n, p = rng.integers(2, 15), rng.integers(1, 9)
        s = sign_summary(rng.standard_normal((n, p)))
        loop = pairwise_loop(s.U)
        assert s.Sn == pytest.approx(loop, rel=1e-9, abs=1e-12)
        total = s.U.sum(axis=0)
        assert s.Sn == pytest.approx(0.5 * total @ total - n / 2, rel=1e-9, abs=1e-12)


@given(seed=st.integers(0, 10_000), n=st.integers(2, 20), p=st.integers(1, 12))
@settings(max_examples=50, deadline=None)
def test_sign_scatter_trace_and_psd(seed, n, p):
    s = sign_summary(np.random.default_rng(seed).standard_normal((n, p)))
    S = s.sigmaU_hat
    assert np.trace(S) == pytest.approx(1.0, abs=1e-10)
    np.testing.assert_allclose(S, S.T, atol=1e-15)
    assert np.linalg.eigvalsh(S).min() > -1e-12


# ----------------------------------------------------------------- trace estimator

def test_trace2_degenerate_direction():
    U = np.tile([1.0, 0.0, 0.0], (6, 1))
    assert trace2_estimator(U) == pytest.approx(0.0, abs=1e-15)


def test_trace2_needs_four_rows():
    with pytest.raises(DomainError):
        trace2_estimator(np.eye(3))


def test_trace2_matches_literal_loop():
    U = unit_rows(np.random.default_rng(12), 12, 6)
    assert trace2_estimator(U) == pytest.approx(trace2_literal(U), rel=1e-10)


@pytest.mark.parametrize("n,p", [(4, 1), (5, 3), (9, 2), (15, 8)])
def test_trace2_literal_small_shapes(n, p):
    U = unit_rows(np.random.default_rng(n * p), n, p)
    assert trace2_estimator(U) == pytest.approx(trace2_literal(U), rel=1e-10, abs=1e-14)


def test_trace2_uniform_sphere_mean():
    rng = np.random.default_rng(13)
    p, n = 50, 100
    vals = [trace2_estimator(unit_rows(rng, n, p)) for _ in range(500)]
    assert abs(np.mean(vals) - 1 / p) < 0.1 / p


def test_trace2_unbiased_on_exact_enumeration():
    # signs uniform on {+-e_1, +-e_2}: Sigma_U = I/2, tr(Sigma_U^2) = 1/2.
    # Average the estimator over every sample of size 4 from the 4 atoms.
    atoms = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    vals = [trace2_estimator(atoms[list(idx)])
            for idx in itertools.product(range(4), repeat=4)]
    assert np.mean(vals) == pytest.approx(0.5, abs=1e-12)


# ----------------------------------------------------------------- estimators

def test_spatial_median_estimator_api():
    est = SpatialMedian(tol=1e-10)
    assert est.get_params() == {"tol": 1e-10, "max_iter": 500}
    X = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    est.fit(X + 2.0)
    np.testing.assert_allclose(est.location_, [2.0, 2.0], atol=1e-10)
    assert est.converged_ and est.n_features_in_ == 2


def test_sign_transformer():
    X = np.random.default_rng(4).standard_normal((30, 3)) + 5.0
    U = SpatialSignTransformer().fit_transform(X)
    np.testing.assert_allclose(np.linalg.norm(U, axis=1), 1.0)
    tr = SpatialSignTransformer(center="spatial_median").fit(X)
    Uc = tr.transform(X)
    np.testing.assert_allclose(Uc.sum(axis=0), 0.0, atol=1e-5)
    with pytest.raises(DomainError):
        SpatialSignTransformer(center="mean").fit(X)
