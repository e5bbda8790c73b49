import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from efm.exceptions import BadDamping, BoundaryError
from efm.families import GAUSSIAN_IDENTITY
from efm.smoother import KernelSpec
from efm.solver import (
    EFMConfig,
    efm_score_F,
    fixed_point_step,
    information_matrix,
    jacobian_J,
    normalize_index,
    profile_score_G,
    quasi_likelihood_value,
    solve,
)
from conftest import single_index_data
from efm.simulation import SimDesign, generate


def _unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


class TestJacobian:
    def test_axis(self):
        J = jacobian_J(np.array([1.0, 0.0, 0.0]))
        np.testing.assert_array_equal(J, [[0, 0], [1, 0], [0, 1]])

    def test_example(self):
        J = jacobian_J(_unit([2.0, 1.0, 0.0]))
        np.testing.assert_allclose(J[0], [-0.5, 0.0], atol=1e-15)
        np.testing.assert_array_equal(J[1:], np.eye(2))

    def test_boundary(self):
        with pytest.raises(BoundaryError):
            jacobian_J(np.array([0.0, 1.0]))

    def test_orthogonal_to_beta(self):
        beta = _unit(np.random.default_rng(0).uniform(0.1, 1, 7))
        np.testing.assert_allclose(beta @ jacobian_J(beta), 0.0, atol=1e-15)

    def test_matches_numerical_derivative(self):
        beta = _unit([0.8, -0.3, 0.5])
        free = beta[1:]

        def full(f):
            return np.concatenate([[np.sqrt(1 - f @ f)], f])

        step = 1e-7
        num = np.column_stack([
            (full(free + step * e) - full(free - step * e)) / (2 * step) for e in np.eye(2)
        ])
        np.testing.assert_allclose(jacobian_J(beta), num, atol=1e-7)


class TestNormalize:
    def test_sign_and_norm(self):
        b = normalize_index([-3.0, 4.0])
        np.testing.assert_allclose(b, [0.6, -0.8])

    def test_boundary_nudge(self):
        b = normalize_index([0.0, 1.0, 1.0])
        assert b[0] > 0 and np.linalg.norm(b) == pytest.approx(1.0, abs=1e-15)


class TestFixedPointStep:
    def test_parallel_score_is_fixed_point(self):
        beta = _unit([2.0, 1.0, 1.0])
        np.testing.assert_allclose(fixed_point_step(beta, 3.0 * beta, 1.0), beta, atol=1e-14)

    def test_zero_score_returns_input(self):
        beta = _unit([1.0, 1.0])
        np.testing.assert_array_equal(fixed_point_step(beta, np.zeros(2), 1.0), beta)

    def test_hand_evaluated(self):
        F = _unit([1.0, 1.0])
        # denominator 1/sqrt2 + 1; raw update (1, 0) + (1/sqrt2) F, then renormalise
        raw = np.array([1.0, 0.0]) + F / np.sqrt(2)
        out = fixed_point_step(np.array([1.0, 0.0]), F, 1.0)
        np.testing.assert_allclose(out, raw / np.linalg.norm(raw), atol=1e-15)
        assert out[0] > 0 and np.linalg.norm(out) == pytest.approx(1.0, abs=1e-15)

    def test_bad_damping(self):
        with pytest.raises(BadDamping):
            fixed_point_step(np.array([1.0, 0.0]), np.array([-1.0, 0.0]), 1.0)

    def test_sign_enforced(self):
        out = fixed_point_step(_unit([0.1, 1.0]), np.array([-1.0, -5.0]), 0.5)
        assert out[0] > 0


class TestScores:
    def test_axis_beta_drops_first_coordinate(self, smooth_data):
        X, y, _ = smooth_data
        beta = np.array([1.0, 0.0, 0.0])
        spec = KernelSpec(0.3)
        F = efm_score_F(beta, X, y, GAUSSIAN_IDENTITY, spec)
        np.testing.assert_allclose(profile_score_G(beta, X, y, GAUSSIAN_IDENTITY, spec), F[1:])

    def test_G_is_J_transpose_F(self, smooth_data):
        X, y, beta = smooth_data
        b = _unit(beta + [0.0, 0.1, -0.2])
        spec = KernelSpec(0.3)
        F = efm_score_F(b, X, y, GAUSSIAN_IDENTITY, spec)
        G = profile_score_G(b, X, y, GAUSSIAN_IDENTITY, spec)
        np.testing.assert_allclose(G, jacobian_J(b).T @ F, rtol=1e-12)

    def test_score_orthogonal_to_beta(self, smooth_data):
        X, y, beta = smooth_data
        b = _unit(beta + [0.0, 0.2, 0.1])
        F = efm_score_F(b, X, y, GAUSSIAN_IDENTITY, KernelSpec(0.3))
        assert abs(b @ F) <= 1e-8 * np.abs(F).sum()

    def test_small_at_truth_noiseless(self):
        rng = np.random.default_rng(0)
        X = 2.0 + rng.standard_normal((300, 3))
        beta = _unit([2.0, 1.0, 0.0])
        y = (X @ beta) ** 2
        F = efm_score_F(beta, X, y, GAUSSIAN_IDENTITY, KernelSpec(1.0))
        assert np.linalg.norm(F) / 300 <= 0.05

    def test_zero_with_oracle_residuals(self, smooth_data):
        X, _, beta = smooth_data
        t = X @ beta
        from efm.smoother import fit_curve

        curve = fit_curve(t, np.sin(2 * t) + t**2, X, GAUSSIAN_IDENTITY, KernelSpec(0.3))
        curve.g_hat = np.sin(2 * t) + t**2
        from efm.solver import _score_from_curve

        F = _score_from_curve(curve, X, np.sin(2 * t) + t**2, GAUSSIAN_IDENTITY)
        np.testing.assert_allclose(F, 0.0, atol=1e-12)


class TestQuasiLikelihoodValue:
    def test_affine_truth_is_zero(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(100, 3))
        beta = _unit([1.0, 2.0, -1.0])
        y = X @ beta
        assert quasi_likelihood_value(beta, X, y, GAUSSIAN_IDENTITY, KernelSpec(1.0)) == \
            pytest.approx(0.0, abs=1e-18)

    def test_nonpositive(self, smooth_data):
        X, y, _ = smooth_data
        assert quasi_likelihood_value(_unit([1, 1, 1]), X, y, GAUSSIAN_IDENTITY,
                                      KernelSpec(0.3)) <= 0.0

    def test_local_maximum(self, ex1a_small):
        X, y = ex1a_small.X, ex1a_small.y
        fit = solve(X, y, GAUSSIAN_IDENTITY, EFMConfig(M=1.0, tol=1e-6, max_iter=1000))
        spec = KernelSpec(fit.bandwidth_used)
        q0 = quasi_likelihood_value(fit.beta_hat, X, y, GAUSSIAN_IDENTITY, spec)
        rng = np.random.default_rng(9)
        wins = 0
        for _ in range(50):
            u = rng.standard_normal(X.shape[1])
            u -= (u @ fit.beta_hat) * fit.beta_hat
            b = normalize_index(fit.beta_hat + 0.05 * u / np.linalg.norm(u))
            wins += q0 >= quasi_likelihood_value(b, X, y, GAUSSIAN_IDENTITY, spec)
        assert wins >= 45


class TestSolve:
    def test_noiseless_affine(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(200, 3))
        beta = _unit([1.0, 0.5, -0.7])
        fit = solve(X, X @ beta, GAUSSIAN_IDENTITY, EFMConfig(M=1.0, bandwidth=1.0, tol=1e-8,
                                                               max_iter=2000))
        assert fit.converged
        np.testing.assert_allclose(fit.beta_hat, beta, atol=1e-3)

    def test_iterates_stay_in_parameter_space(self, ex1a_small):
        fit = solve(ex1a_small.X, ex1a_small.y, GAUSSIAN_IDENTITY, EFMConfig(M=1.0))
        b = fit.beta_hat
        assert np.linalg.norm(b) == pytest.approx(1.0, abs=1e-12)
        assert b[0] > 0
        assert fit.converged
        assert fit.final_score_norm < 1e-2

    def test_score_norm_bound(self, ex1a_small):
        X, y = ex1a_small.X, ex1a_small.y
        fit = solve(X, y, GAUSSIAN_IDENTITY, EFMConfig(M=1.0))
        omega = information_matrix(fit.curve, X, GAUSSIAN_IDENTITY) / X.shape[0]
        assert fit.final_score_norm <= 10 * 1e-4 * np.linalg.norm(omega, 2)

    def test_reports_non_convergence(self, smooth_data):
        X, y, _ = smooth_data
        fit = solve(X, y, GAUSSIAN_IDENTITY, EFMConfig(M=1.0, max_iter=2, tol=1e-12))
        assert not fit.converged and fit.iterations == 2
        assert len(fit.history) == 2

    def test_fixed_bandwidth_echoed(self, smooth_data):
        X, y, _ = smooth_data
        assert solve(X, y, "gaussian-identity", EFMConfig(M=1.0, bandwidth=0.25)).bandwidth_used == 0.25

    def test_scale_equivariance(self, smooth_data):
        X, y, _ = smooth_data
        cfg = dict(M=1.0, tol=1e-9, max_iter=3000)
        a = solve(X, y, GAUSSIAN_IDENTITY, EFMConfig(bandwidth=0.3, **cfg))
        b = solve(3.0 * X, y, GAUSSIAN_IDENTITY, EFMConfig(bandwidth=0.9, **cfg))
        np.testing.assert_allclose(a.beta_hat, b.beta_hat, atol=1e-6)

    def test_restarts_keep_best(self, smooth_data):
        X, y, _ = smooth_data
        fit = solve(X, y, GAUSSIAN_IDENTITY, EFMConfig(M=1.0, bandwidth=0.3, restarts=3))
        plain = solve(X, y, GAUSSIAN_IDENTITY, EFMConfig(M=1.0, bandwidth=0.3))
        assert fit.quasi_loglik >= plain.quasi_loglik - 1e-9

    def test_config_validation(self):
        for bad in (dict(tol=0), dict(max_iter=0), dict(M=-1.0), dict(M="fast"),
                    dict(bandwidth=0.0), dict(bandwidth="gcv"), dict(cv_folds=1)):
            with pytest.raises(ValueError):
                EFMConfig(**bad)

    def test_bernoulli_design(self):
        data = generate(SimDesign("Ex2C", d=4, n=500, seed=1))
        fit = solve(data.X, data.y, "bernoulli-logit", EFMConfig(M=1.0))
        assert fit.converged
        assert np.abs(fit.beta_hat - data.beta).sum() < 0.5


def _angle_fit(seed, h=0.3):
    rng = np.random.default_rng(seed)
    n = 300
    X = rng.uniform(-1, 1, (n, 2))
    b = np.array([np.cos(0.6), np.sin(0.6)])
    t = X @ b
    y = np.sin(2 * t) + t**2 + 0.1 * rng.standard_normal(n)
    return X, y


class TestTwoDimensionalBruteForce:
    @pytest.mark.parametrize("seed", range(5))
    def test_matches_angle_maximiser(self, seed):
        X, y = _angle_fit(seed)
        h = 0.3
        fit = solve(X, y, GAUSSIAN_IDENTITY, EFMConfig(M=1.0, bandwidth=h, tol=1e-7,
                                                       max_iter=2000))
        theta = np.arctan2(fit.beta_hat[1], fit.beta_hat[0])

        def negq(a):
            b = np.array([np.cos(a), np.sin(a)])
            return -quasi_likelihood_value(b, X, y, GAUSSIAN_IDENTITY, KernelSpec(h))

        grid = np.linspace(-np.pi / 2 + 0.01, np.pi / 2 - 0.01, 315)
        a0 = grid[np.argmin([negq(a) for a in grid])]
        best = minimize_scalar(negq, bracket=(a0 - 0.01, a0, a0 + 0.01), tol=1e-10).x
        assert abs(theta - best) < 1e-2

    def test_sign_change_brackets_root(self):
        X, y = _angle_fit(0)
        spec = KernelSpec(0.3)
        fit = solve(X, y, GAUSSIAN_IDENTITY, EFMConfig(M=1.0, bandwidth=0.3, tol=1e-7,
                                                       max_iter=2000))
        theta = np.arctan2(fit.beta_hat[1], fit.beta_hat[0])

        def G(a):
            return profile_score_G(np.array([np.cos(a), np.sin(a)]), X, y, GAUSSIAN_IDENTITY,
                                   spec)[0]

        assert G(theta - 0.02) * G(theta + 0.02) < 0
