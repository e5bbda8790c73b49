"""Fixed-point estimation of the unit-norm index vector.

The estimator solves ``G(beta) = J(beta)' F(beta) = 0`` where ``F`` is the
quasi-score vector built from the local-linear link estimates and ``J`` is
the Jacobian of ``beta`` with respect to its last ``d - 1`` coordinates.

Because the local-linear conditional mean satisfies ``beta' h(t) = t``
exactly, ``beta' F(beta)`` is identically zero.  Fed to the damped update
as is, ``F`` then only contributes its direction and the iteration takes
steps of fixed length.  The solver therefore passes ``F + lam * beta`` to
the update, with ``lam`` the largest eigenvalue of the current information
matrix.  ``J' beta = 0``, so the shift leaves ``G`` and its roots untouched,
while the update becomes a contraction towards the root.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from .exceptions import (
    BadDamping,
    BoundaryError,
    EFMError,
    InsufficientLocalData,
    NoFeasibleBandwidth,
    NoLocalConvergence,
)
from .families import get_family
from .smoother import WIDEN_FACTOR, WIDEN_MAX, KernelSpec, LinkCurveFit, fit_curve

__all__ = [
    "EFMConfig",
    "EFMFit",
    "normalize_index",
    "check_index_vector",
    "jacobian_J",
    "efm_score_F",
    "profile_score_G",
    "fixed_point_step",
    "quasi_likelihood_value",
    "information_matrix",
    "solve",
]

log = logging.getLogger(__name__)

BOUNDARY_EPS = 1e-8
BOUNDARY_NUDGE = 1e-6


@dataclass(frozen=True)
class EFMConfig:
    """Solver settings.

    ``M`` is a positive damping constant or ``"auto"`` (cross-validated once
    before the main solve); ``bandwidth`` is a positive number or ``"cv"``
    (re-selected at iteration 1 and every ``refresh_every``-th iteration).
    """

    tol: float = 1e-4
    max_iter: int = 200
    M: Union[float, str] = "auto"
    bandwidth: Union[float, str] = "cv"
    cv_folds: int = 5
    seed: int = 0
    refresh_every: int = 10
    bandwidth_grid: Optional[tuple] = None
    damping_grid: Optional[tuple] = None
    restarts: int = 0

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.cv_folds < 2:
            raise ValueError("cv_folds must be at least 2")
        if isinstance(self.M, str):
            if self.M != "auto":
                raise ValueError("M must be a positive number or 'auto'")
        elif not self.M > 0:
            raise ValueError("M must be positive")
        if isinstance(self.bandwidth, str):
            if self.bandwidth != "cv":
                raise ValueError("bandwidth must be a positive number or 'cv'")
        elif not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")


@dataclass
class EFMFit:
    beta_hat: np.ndarray
    curve: LinkCurveFit
    iterations: int
    converged: bool
    final_score_norm: float
    bandwidth_used: float
    M_used: float
    quasi_loglik: float
    family: str = "gaussian-identity"
    history: list = field(default_factory=list, repr=False)

    @property
    def d(self):
        return self.beta_hat.size


def normalize_index(beta):
    """Scale to unit length and flip the sign so the first entry is positive."""
    beta = np.asarray(beta, dtype=float)
    norm = np.linalg.norm(beta)
    if not norm > 0:
        raise BoundaryError("cannot normalise a zero vector")
    beta = beta / norm
    if beta[0] < 0:
        beta = -beta
    if beta[0] < BOUNDARY_EPS:
        beta = beta.copy()
        beta[0] = BOUNDARY_NUDGE
        beta = beta / np.linalg.norm(beta)
    return beta


def check_index_vector(beta, atol=1e-12):
    beta = np.asarray(beta, dtype=float)
    if beta.ndim != 1 or beta.size < 2:
        raise ValueError("index vector must be 1-d with at least two entries")
    if abs(np.linalg.norm(beta) - 1.0) > atol:
        raise ValueError("index vector must have unit norm")
    if not beta[0] > 0:
        raise BoundaryError("first entry of the index vector must be positive")
    return beta


def jacobian_J(beta):
    """``d x (d-1)`` Jacobian of ``beta`` in its free coordinates ``beta[1:]``."""
    beta = np.asarray(beta, dtype=float)
    if not beta[0] > 0:
        raise BoundaryError("Jacobian undefined for beta_1 <= 0")
    d = beta.size
    J = np.empty((d, d - 1))
    J[0] = -beta[1:] / beta[0]
    J[1:] = np.eye(d - 1)
    return J


def _curve(beta, X, y, family, bandwidth, widen=False):
    spec = bandwidth if isinstance(bandwidth, KernelSpec) else KernelSpec(float(bandwidth))
    return fit_curve(X @ beta, y, X, family, spec, widen=widen)


def _score_from_curve(curve, X, y, family):
    g = curve.g_hat
    w = family.rho(1, g) * curve.g_prime_hat * (y - family.mu(g))
    return (X - curve.h_hat).T @ w


def information_matrix(curve, X, family):
    """``sum_i rho_2(g_i) g'_i^2 (X_i - h_i)(X_i - h_i)'`` (no dispersion)."""
    R = X - curve.h_hat
    w = family.rho(2, curve.g_hat) * curve.g_prime_hat**2
    return (R * w[:, None]).T @ R


def efm_score_F(beta, X, y, family, spec):
    """The ``d``-vector quasi-score with the link and E(X|index) smoothed out."""
    family = get_family(family)
    X = np.asarray(X, dtype=float)
    y = family.check_response(y)
    curve = _curve(np.asarray(beta, dtype=float), X, y, family, spec)
    return _score_from_curve(curve, X, y, family)


def profile_score_G(beta, X, y, family, spec):
    beta = np.asarray(beta, dtype=float)
    return jacobian_J(beta).T @ efm_score_F(beta, X, y, family, spec)


def quasi_likelihood_value(beta, X, y, family, spec):
    """``sum_i Q(g_hat(beta'X_i), Y_i)``."""
    family = get_family(family)
    X = np.asarray(X, dtype=float)
    y = family.check_response(y)
    curve = _curve(np.asarray(beta, dtype=float), X, y, family, spec)
    return float(np.sum(family.quasi_loglik(curve.g_hat, y)))


def fixed_point_step(beta_old, F, M):
    """One damped update followed by renormalisation onto the half-sphere.

    Returns ``beta_old`` unchanged when ``F`` is zero (already stationary).
    """
    beta_old = np.asarray(beta_old, dtype=float)
    F = np.asarray(F, dtype=float)
    norm = np.linalg.norm(F)
    if norm == 0.0:
        return beta_old.copy()
    denom = F[0] / norm + M
    if abs(denom) < 1e-10:
        raise BadDamping(f"F_1/|F| + M = {denom:.3g} is numerically zero; change M")
    beta_new = (M / denom) * beta_old + (abs(F[0]) / norm**2 / denom) * F
    return normalize_index(beta_new)


def _step(beta, curve, X, y, family, M):
    F = _score_from_curve(curve, X, y, family)
    lam = np.linalg.eigvalsh(information_matrix(curve, X, family))[-1]
    if not lam > 0:
        return beta.copy(), F
    return fixed_point_step(beta, F + lam * beta, M), F


GRID_EXTEND_MAX = 10


def _select_bandwidth(beta, X, y, family, config):
    """CV bandwidth at the current iterate.

    The default grid is open at its upper end: past its top value it keeps
    stepping up while the held-out criterion improves.  Far from the
    solution the index carries little signal and the best fit is close to
    a global line, which a grid centred on the rule-of-thumb width misses
    when ``d`` is comparable to ``n``.
    """
    from .selection import _argbest, bandwidth_scores, default_bandwidth_grid, make_plan

    user_grid = config.bandwidth_grid is not None
    grid = np.asarray(
        config.bandwidth_grid if user_grid else default_bandwidth_grid(X @ beta), dtype=float
    )
    if grid.size == 0 or np.any(grid <= 0):
        raise ValueError("bandwidth grid must be nonempty and positive")
    if grid.size == 1:
        return float(grid[0])
    plan = make_plan(len(y), config.cv_folds, config.seed)
    for attempt in range(WIDEN_MAX + 1):
        scores = bandwidth_scores(X, y, family, beta, grid, plan)
        if np.any(np.isfinite(scores)):
            break
        if attempt == WIDEN_MAX:
            raise NoFeasibleBandwidth("no bandwidth on the grid supports every held-out point")
        # isolated held-out index values far from the start; shift the grid up
        grid = grid * WIDEN_FACTOR
    if not user_grid:
        ratio = grid[1] / grid[0]
        for _ in range(GRID_EXTEND_MAX):
            top = grid[-1] * ratio
            s = bandwidth_scores(X, y, family, beta, [top], plan)[0]
            grid = np.append(grid, top)
            scores = np.append(scores, s)
            if not s > scores[-2]:
                break
    return _argbest(grid, scores, +1.0)


def _resolve_M(X, y, family, config):
    if config.M != "auto":
        return float(config.M)
    from .selection import cv_damping_M, default_damping_grid, make_plan

    grid = config.damping_grid or default_damping_grid(X.shape[1])
    plan = make_plan(len(y), config.cv_folds, config.seed)
    return cv_damping_M(X, y, family, config, grid, plan)


def solve(X, y, family="gaussian-identity", config=None, beta0=None):
    """Estimate the index vector by the damped fixed-point iteration.

    Parameters
    ----------
    X : (n, d) array
    y : (n,) array
    family : str or LinkFamily
    config : EFMConfig, optional
    beta0 : array, optional
        Starting value; defaults to ``(1, ..., 1) / sqrt(d)``.

    Returns
    -------
    EFMFit
        ``converged`` is False when ``max_iter`` was hit; the last iterate
        and its diagnostics are still returned.
    """
    family = get_family(family)
    config = config or EFMConfig()
    X = np.asarray(X, dtype=float)
    y = family.check_response(y)
    n, d = X.shape
    if d < 2:
        raise ValueError("need at least two covariates")
    if n != y.size:
        raise ValueError("X and y have different numbers of rows")

    M = _resolve_M(X, y, family, config)
    if config.restarts > 0:
        return _solve_with_restarts(X, y, family, replace(config, M=M), beta0)

    beta = normalize_index(np.ones(d) if beta0 is None else beta0)
    auto_h = config.bandwidth == "cv"
    h = None if auto_h else float(config.bandwidth)
    converged = False
    history = []
    it = 0
    for it in range(1, config.max_iter + 1):
        if auto_h and (it == 1 or it % config.refresh_every == 0):
            h = _select_bandwidth(beta, X, y, family, config)
        try:
            curve = _curve(beta, X, y, family, h, widen=True)
        except (InsufficientLocalData, NoLocalConvergence) as exc:
            t = X @ beta
            raise type(exc)(
                f"{exc} (iteration {it}, index range [{t.min():.4g}, {t.max():.4g}])"
            ) from exc
        beta_new, F = _step(beta, curve, X, y, family, M)
        change = float(np.max(np.abs(beta_new - beta)))
        history.append(change)
        beta = beta_new
        if change <= config.tol:
            converged = True
            break

    curve = _curve(beta, X, y, family, h, widen=True)
    G = jacobian_J(beta).T @ _score_from_curve(curve, X, y, family)
    qval = float(np.sum(family.quasi_loglik(curve.g_hat, y)))
    if not converged:
        log.info("fixed-point iteration stopped at max_iter=%d", config.max_iter)
    return EFMFit(
        beta_hat=beta,
        curve=curve,
        iterations=it,
        converged=converged,
        final_score_norm=float(np.linalg.norm(G) / n),
        bandwidth_used=float(h),
        M_used=float(M),
        quasi_loglik=qval,
        family=family.name,
        history=history,
    )


def _solve_with_restarts(X, y, family, config, beta0):
    """Keep the candidate root with the largest quasi-likelihood."""
    base = replace(config, restarts=0)
    best = solve(X, y, family, base, beta0)
    rng = np.random.default_rng(config.seed)
    for _ in range(config.restarts):
        start = normalize_index(rng.standard_normal(X.shape[1]))
        try:
            fit = solve(X, y, family, base, start)
        except EFMError:
            continue
        if fit.converged and (not best.converged or fit.quasi_loglik > best.quasi_loglik):
            best = fit
    return best
