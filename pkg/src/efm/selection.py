"""K-fold cross-validation of the smoothing bandwidth and the damping constant."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .exceptions import (
    EFMError,
    NoFeasibleBandwidth,
    NoFeasibleDamping,
)
from .families import get_family
from .smoother import smooth_link

__all__ = [
    "CVPlan",
    "make_plan",
    "default_bandwidth_grid",
    "default_damping_grid",
    "bandwidth_scores",
    "cv_bandwidth",
    "damping_scores",
    "cv_damping_M",
]


@dataclass(frozen=True)
class CVPlan:
    K: int
    fold_assignment: np.ndarray
    seed: int

    def folds(self):
        for k in range(1, self.K + 1):
            val = self.fold_assignment == k
            yield ~val, val


def make_plan(n, K=5, seed=0):
    """Seeded shuffle, then round-robin labels ``1..K``."""
    if K < 2:
        raise ValueError("need at least two folds")
    if n < K:
        raise ValueError(f"cannot split {n} observations into {K} folds")
    perm = np.random.default_rng(seed).permutation(n)
    labels = np.empty(n, dtype=int)
    labels[perm] = np.arange(n) % K + 1
    return CVPlan(K=K, fold_assignment=labels, seed=seed)


def default_bandwidth_grid(index):
    """Ten geometric steps over ``[0.3, 3] * 1.06 sd(index) n^(-1/5)``."""
    index = np.asarray(index, dtype=float)
    n = index.size
    if n < 10:
        raise ValueError("default bandwidth grid needs n >= 10")
    sd = np.std(index, ddof=1)
    if not sd > 0:
        raise ValueError("index has zero variance")
    h0 = 1.06 * sd * n ** (-0.2)
    return np.geomspace(0.3 * h0, 3.0 * h0, 10)


def default_damping_grid(d, size=6):
    lo, hi = sorted((2.0 / np.sqrt(d), d / 2.0))
    return np.geomspace(lo, hi, size)


def _heldout_loglik(index, y, family, h, plan):
    total = 0.0
    for train, val in plan.folds():
        try:
            g, _ = smooth_link(index[train], y[train], family, h, index[val])
        except EFMError:
            return -np.inf
        q = family.quasi_loglik(g, y[val]) if np.all(np.isfinite(g)) else -np.inf
        total += float(np.sum(q))
    return total if np.isfinite(total) else -np.inf


def bandwidth_scores(X, y, family, beta, grid, plan):
    """Held-out quasi-likelihood for each bandwidth, beta held fixed."""
    family = get_family(family)
    index = np.asarray(X, dtype=float) @ np.asarray(beta, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.array([_heldout_loglik(index, y, family, float(h), plan) for h in grid])


def _argbest(grid, scores, sign):
    """Best grid value; near-ties go to the larger grid value."""
    scores = sign * np.asarray(scores, dtype=float)
    best = np.max(scores)
    tied = scores >= best - 1e-12 * (1.0 + abs(best))
    return float(np.max(np.asarray(grid, dtype=float)[tied]))


def cv_bandwidth(X, y, family, beta, grid, plan):
    """Bandwidth maximising the held-out quasi-likelihood."""
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0 or np.any(grid <= 0):
        raise ValueError("bandwidth grid must be nonempty and positive")
    if grid.size == 1:
        return float(grid[0])
    scores = bandwidth_scores(X, y, family, beta, grid, plan)
    if not np.any(np.isfinite(scores)):
        raise NoFeasibleBandwidth("no bandwidth on the grid supports every held-out point")
    return _argbest(grid, scores, +1.0)


def damping_scores(X, y, family, config, grid, plan):
    """Held-out prediction error ``-2 sum Q`` for each damping constant.

    Held-out index values outside the training windows are predicted with a
    locally widened bandwidth instead of disqualifying the whole fold.

    For the Gaussian family this is the squared error; for the others it is
    the deviance up to a term that depends on ``y`` only.
    """
    from .solver import solve

    family = get_family(family)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    out = []
    for M in grid:
        cfg = replace(config, M=float(M), restarts=0)
        err = 0.0
        for train, val in plan.folds():
            try:
                fit = solve(X[train], y[train], family, cfg)
                if not fit.converged:
                    raise EFMError("no convergence")
                g, _ = smooth_link(
                    X[train] @ fit.beta_hat, y[train], family,
                    fit.bandwidth_used, X[val] @ fit.beta_hat, widen=True,
                )
                err += -2.0 * float(np.sum(family.quasi_loglik(g, y[val])))
            except EFMError:
                err = np.inf
                break
        out.append(err)
    return np.array(out)


def cv_damping_M(X, y, family, config, grid, plan):
    """Damping constant with the smallest held-out prediction error."""
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0 or np.any(grid <= 0):
        raise ValueError("damping grid must be nonempty and positive")
    if grid.size == 1:
        return float(grid[0])
    scores = damping_scores(X, y, family, config, grid, plan)
    if not np.any(np.isfinite(scores)):
        raise NoFeasibleDamping("the solver failed for every damping constant")
    return _argbest(grid, scores, -1.0)
