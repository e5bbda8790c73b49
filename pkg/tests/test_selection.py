import numpy as np
import pytest

from efm.exceptions import NoFeasibleBandwidth, NoFeasibleDamping
from efm.families import GAUSSIAN_IDENTITY
from efm.selection import (
    bandwidth_scores,
    cv_bandwidth,
    cv_damping_M,
    damping_scores,
    default_bandwidth_grid,
    default_damping_grid,
    make_plan,
)
from efm.simulation import SimDesign, generate
from efm.solver import EFMConfig


class TestPlan:
    def test_partition(self):
        plan = make_plan(103, 5, seed=4)
        assert set(plan.fold_assignment) == {1, 2, 3, 4, 5}
        seen = np.zeros(103, dtype=int)
        for train, val in plan.folds():
            assert val.any() and train.any()
            assert not np.any(train & val)
            seen += val
        np.testing.assert_array_equal(seen, 1)

    def test_deterministic(self):
        a, b = make_plan(50, 4, 7), make_plan(50, 4, 7)
        np.testing.assert_array_equal(a.fold_assignment, b.fold_assignment)
        assert not np.array_equal(a.fold_assignment, make_plan(50, 4, 8).fold_assignment)

    def test_balanced(self):
        counts = np.bincount(make_plan(52, 5).fold_assignment)[1:]
        assert counts.max() - counts.min() <= 1

    def test_invalid(self):
        with pytest.raises(ValueError):
            make_plan(10, 1)
        with pytest.raises(ValueError):
            make_plan(3, 5)


class TestBandwidthGrid:
    def test_normal_rule(self):
        idx = np.random.default_rng(0).standard_normal(400)
        grid = default_bandwidth_grid(idx)
        h0 = 1.06 * 400 ** -0.2
        assert grid.size == 10 and np.all(np.diff(grid) > 0)
        assert np.sqrt(grid[0] * grid[-1]) == pytest.approx(h0, rel=0.1)
        assert grid[-1] / grid[0] == pytest.approx(10.0)

    def test_constant_index(self):
        with pytest.raises(ValueError):
            default_bandwidth_grid(np.ones(20))

    def test_too_small(self):
        with pytest.raises(ValueError):
            default_bandwidth_grid(np.arange(5.0))


class TestCVBandwidth:
    def test_single_element(self, smooth_data):
        X, y, beta = smooth_data
        assert cv_bandwidth(X, y, GAUSSIAN_IDENTITY, beta, [0.37], make_plan(len(y))) == 0.37

    def test_affine_ties_go_to_largest(self):
        rng = np.random.default_rng(1)
        X = rng.uniform(-1, 1, (120, 2))
        beta = np.array([1.0, 0.0])
        y = 3 * X[:, 0] - 1
        grid = [0.5, 0.8, 1.2]
        plan = make_plan(120)
        scores = bandwidth_scores(X, y, GAUSSIAN_IDENTITY, beta, grid, plan)
        np.testing.assert_allclose(scores, 0.0, atol=1e-18)
        assert cv_bandwidth(X, y, GAUSSIAN_IDENTITY, beta, grid, plan) == 1.2

    def test_selects_grid_optimum(self):
        data = generate(SimDesign("Ex1A", d=10, n=400, seed=0))
        grid = default_bandwidth_grid(data.X @ data.beta)
        plan = make_plan(400)
        scores = bandwidth_scores(data.X, data.y, GAUSSIAN_IDENTITY, data.beta, grid, plan)
        h = cv_bandwidth(data.X, data.y, GAUSSIAN_IDENTITY, data.beta, grid, plan)
        best = np.nanmax(scores[np.isfinite(scores)])
        assert scores[list(grid).index(h)] >= best - 0.05 * abs(best)

    def test_infeasible(self):
        X = np.column_stack([np.arange(20.0) * 10, np.zeros(20)])
        y = np.arange(20.0)
        with pytest.raises(NoFeasibleBandwidth):
            cv_bandwidth(X, y, GAUSSIAN_IDENTITY, np.array([1.0, 0.0]), [0.1, 0.5],
                         make_plan(20))

    def test_permutation_invariance(self, smooth_data):
        X, y, beta = smooth_data
        plan = make_plan(len(y), 5, 3)
        perm = np.random.default_rng(0).permutation(len(y))
        from efm.selection import CVPlan

        plan_p = CVPlan(K=5, fold_assignment=plan.fold_assignment[perm], seed=3)
        grid = [0.2, 0.3, 0.5]
        a = bandwidth_scores(X, y, GAUSSIAN_IDENTITY, beta, grid, plan)
        b = bandwidth_scores(X[perm], y[perm], GAUSSIAN_IDENTITY, beta, grid, plan_p)
        np.testing.assert_allclose(a, b, rtol=1e-12)

    def test_invalid_grid(self, smooth_data):
        X, y, beta = smooth_data
        with pytest.raises(ValueError):
            cv_bandwidth(X, y, GAUSSIAN_IDENTITY, beta, [], make_plan(len(y)))
        with pytest.raises(ValueError):
            cv_bandwidth(X, y, GAUSSIAN_IDENTITY, beta, [0.1, -1.0], make_plan(len(y)))


class TestDamping:
    def test_default_grid_endpoints(self):
        grid = default_damping_grid(16)
        assert grid[0] == pytest.approx(0.5) and grid[-1] == pytest.approx(8.0)
        assert grid.size == 6 and np.all(np.diff(grid) > 0)

    def test_small_d_endpoints_sorted(self):
        grid = default_damping_grid(2)
        assert grid[0] == pytest.approx(1.0) and grid[-1] == pytest.approx(np.sqrt(2))

    def test_single_element(self, smooth_data):
        X, y, _ = smooth_data
        assert cv_damping_M(X, y, GAUSSIAN_IDENTITY, EFMConfig(), [1.7], make_plan(len(y))) == 1.7

    def test_selects_minimum(self):
        data = generate(SimDesign("Ex3Homo", d=10, n=100, seed=0))
        cfg = EFMConfig()
        grid = default_damping_grid(10)
        plan = make_plan(100)
        errs = damping_scores(data.X, data.y, GAUSSIAN_IDENTITY, cfg, grid, plan)
        M = cv_damping_M(data.X, data.y, GAUSSIAN_IDENTITY, cfg, grid, plan)
        assert np.any(np.isfinite(errs))
        assert errs[list(grid).index(M)] <= 1.1 * np.min(errs)

    def test_all_fail(self, smooth_data):
        X, y, _ = smooth_data
        cfg = EFMConfig(max_iter=1, tol=1e-12)
        with pytest.raises(NoFeasibleDamping):
            cv_damping_M(X, y, GAUSSIAN_IDENTITY, cfg, [0.5, 1.0], make_plan(len(y)))
