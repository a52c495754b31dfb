import numpy as np
import pytest

from dll.errors import RankDeficientError, SampleTooSmallError
from dll.linear import (
    kkt_check,
    lasso_coordinate_descent,
    ols_projection,
    scaled_lasso,
    sigma_floor,
)


def orthonormal_design(rng, n, p):
    q = np.linalg.qr(rng.normal(size=(n, p)))[0]
    return q * np.sqrt(n)


def scaled_lasso_bisection_oracle(x, y, a_const):
    """Independent scalar fixed point: soft-threshold solution at each
    noise level, residual norm solved by bisection."""
    n, p = x.shape
    lam0 = np.sqrt(2 * a_const * np.log(p) / n)
    z = x.T @ y / n

    def resid_norm(sig):
        g = np.sign(z) * np.maximum(np.abs(z) - sig * lam0, 0)
        rss = y @ y / n - 2 * g @ z + g @ g
        return np.sqrt(max(rss, 0.0))

    lo, hi = 1e-10, float(np.linalg.norm(y) / np.sqrt(n))
    for _ in range(200):
        mid = (lo + hi) / 2
        if resid_norm(mid) > mid:
            lo = mid
        else:
            hi = mid
    sig = (lo + hi) / 2
    gamma = np.sign(z) * np.maximum(np.abs(z) - sig * lam0, 0)
    return gamma, sig


def test_ols_exact_interpolation():
    rng = np.random.default_rng(0)
    x2 = rng.normal(size=(50, 3))
    gamma = np.array([1.0, -2.0, 0.5])
    fit = ols_projection(x2, x2 @ gamma)
    np.testing.assert_allclose(fit.gamma, gamma, atol=1e-10)
    assert fit.sigma2 == pytest.approx(sigma_floor(x2 @ gamma))


def test_ols_intercept_only():
    rng = np.random.default_rng(1)
    x1 = rng.normal(size=40)
    fit = ols_projection(np.ones((40, 1)), x1)
    assert fit.gamma[0] == pytest.approx(np.mean(x1))


def test_ols_matches_normal_equations():
    rng = np.random.default_rng(2)
    x2 = rng.normal(size=(500, 3))
    x1 = rng.normal(size=500)
    fit = ols_projection(x2, x1)
    oracle = np.linalg.solve(x2.T @ x2, x2.T @ x1)
    np.testing.assert_allclose(fit.gamma, oracle, atol=1e-8)
    rss = np.sum((x1 - x2 @ oracle) ** 2)
    assert fit.sigma2 == pytest.approx(np.sqrt(rss / (500 - 3)), rel=1e-10)


def test_ols_rank_and_size_errors():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(30, 2))
    with pytest.raises(RankDeficientError):
        ols_projection(np.column_stack([x, x[:, 0]]), rng.normal(size=30))
    with pytest.raises(SampleTooSmallError):
        ols_projection(rng.normal(size=(4, 3)), rng.normal(size=4))


def test_cd_lasso_unpenalized_limit():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(6, 6)) + 3 * np.eye(6)
    y = rng.normal(size=6)
    beta = lasso_coordinate_descent(x, y, 0.0)
    np.testing.assert_allclose(beta, np.linalg.solve(x, y), atol=1e-6)


def test_cd_lasso_full_shrinkage():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(80, 10))
    y = rng.normal(size=80)
    lam = np.max(np.abs(x.T @ y)) / 80 * 1.0001
    assert np.all(lasso_coordinate_descent(x, y, lam) == 0)


def test_cd_lasso_orthonormal_soft_threshold():
    rng = np.random.default_rng(6)
    x = orthonormal_design(rng, 100, 7)
    y = rng.normal(size=100)
    lam = 0.12
    z = x.T @ y / 100
    oracle = np.sign(z) * np.maximum(np.abs(z) - lam, 0)
    np.testing.assert_allclose(lasso_coordinate_descent(x, y, lam), oracle, atol=1e-9)


def test_kkt_check_behaviour():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(120, 15))
    y = x[:, 0] * 2 + rng.normal(size=120)
    lam = 0.1
    beta = lasso_coordinate_descent(x, y, lam)
    assert kkt_check(x, y, lam, beta) <= 1e-8
    assert kkt_check(x, y, 1e9, np.zeros(15)) == 0.0
    perturbed = beta.copy()
    perturbed[0] += 0.05
    assert kkt_check(x, y, lam, perturbed) > 1e-4


def test_scaled_lasso_zero_response():
    rng = np.random.default_rng(8)
    x2 = rng.normal(size=(50, 5))
    fit = scaled_lasso(x2, np.zeros(50))
    assert np.all(fit.gamma == 0)
    assert fit.sigma2 == pytest.approx(sigma_floor(np.zeros(50)))


def test_scaled_lasso_matches_bisection_oracle():
    rng = np.random.default_rng(9)
    x = orthonormal_design(rng, 150, 9)
    gamma = np.zeros(9)
    gamma[:3] = [2.0, -1.5, 1.0]
    y = x @ gamma + rng.normal(0, 1.0, 150)
    fit = scaled_lasso(x, y, 1.01)
    g_oracle, s_oracle = scaled_lasso_bisection_oracle(x, y, 1.01)
    assert fit.sigma2 == pytest.approx(s_oracle, abs=1e-6)
    np.testing.assert_allclose(fit.gamma, g_oracle, atol=1e-6)
    assert fit.kkt_residual <= 1e-8
    assert fit.converged


def test_scaled_lasso_requires_a_above_one():
    rng = np.random.default_rng(10)
    with pytest.raises(ValueError):
        scaled_lasso(rng.normal(size=(20, 2)), rng.normal(size=20), a_const=1.0)


def test_scaled_lasso_objective_monotone():
    rng = np.random.default_rng(11)
    x = rng.normal(size=(100, 40))
    y = x[:, 0] - x[:, 3] + rng.normal(size=100)
    fit = scaled_lasso(x, y)
    trace = fit.objective_trace
    assert all(b <= a + 1e-12 for a, b in zip(trace, trace[1:]))


def test_scaled_lasso_sigma_fixed_point():
    rng = np.random.default_rng(12)
    x = rng.normal(size=(120, 60))
    y = 2 * x[:, 5] + rng.normal(size=120)
    fit = scaled_lasso(x, y)
    scale = np.sqrt(np.einsum("ij,ij->j", x, x) / 120)
    resid = y - (x / scale) @ (fit.gamma * scale)
    assert fit.sigma2 == pytest.approx(np.linalg.norm(resid) / np.sqrt(120), rel=1e-8)


def test_scaled_lasso_l1_monotone_in_penalty_constant():
    rng = np.random.default_rng(13)
    x = rng.normal(size=(90, 30))
    y = x[:, 0] - 0.5 * x[:, 1] + rng.normal(0, 0.5, 90)
    norms = [
        np.abs(scaled_lasso(x, y, a).gamma).sum() for a in (1.01, 1.5, 2.5, 4.0, 8.0)
    ]
    for bigger_penalty, smaller_penalty in zip(norms[1:], norms):
        assert bigger_penalty <= smaller_penalty + 1e-10


def test_scaled_lasso_sparse_recovery_monte_carlo():
    hits_support, hits_sigma = 0, 0
    for s in range(20):
        rng = np.random.default_rng(1000 + s)
        x = rng.normal(size=(200, 400))
        gamma = np.zeros(400)
        gamma[[5, 50, 200]] = [2.0, -2.0, 2.0]
        x1 = x @ gamma + rng.normal(0, 1.0, 200)
        fit = scaled_lasso(x, x1)
        if {5, 50, 200} <= set(np.flatnonzero(fit.gamma)):
            hits_support += 1
        if abs(fit.sigma2 - 1.0) <= 0.2:
            hits_sigma += 1
    assert hits_support >= 18
    assert hits_sigma >= 18


def test_projection_intercept_flag():
    rng = np.random.default_rng(14)
    x2 = rng.normal(size=(200, 2))
    x1 = x2 @ np.array([1.0, -0.5]) + 3.0 + rng.normal(0, 0.1, 200)
    fit = ols_projection(x2, x1, intercept=True)
    assert fit.gamma.shape == (3,)
    assert fit.gamma[-1] == pytest.approx(3.0, abs=0.05)
    lasso_fit = scaled_lasso(x2, x1, intercept=True)
    assert lasso_fit.gamma.shape == (3,)


def test_cd_lasso_max_iterations_error():
    from dll.errors import ConvergenceError

    rng = np.random.default_rng(15)
    base = rng.normal(size=(100, 1))
    x = base + 0.001 * rng.normal(size=(100, 30))  # heavy collinearity
    y = rng.normal(size=100)
    with pytest.raises(ConvergenceError):
        lasso_coordinate_descent(x, y, 1e-6, max_sweeps=2)
