"""Local-linear kernel estimates of the link (with its slope) and of E(X | index).

All evaluations are vectorised over evaluation points: for ``m`` points and
``n`` observations the work is a handful of ``m x n`` array operations, which
is what keeps the fixed-point solver cheap for ``n`` in the hundreds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InsufficientLocalData, NoLocalConvergence
from .families import LinkFamily, get_family

__all__ = [
    "KernelSpec",
    "LinkCurveFit",
    "kernel_weight",
    "local_link_fit",
    "conditional_mean",
    "smooth_link",
    "fit_curve",
]

NEWTON_MAX_ITER = 50
NEWTON_MAX_HALVINGS = 20
WIDEN_FACTOR = 1.5
WIDEN_MAX = 5


def kernel_weight(u):
    """Epanechnikov kernel ``0.75 (1 - u^2)`` on ``|u| <= 1``."""
    u = np.asarray(u, dtype=float)
    w = np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)
    return float(w) if w.ndim == 0 else w


@dataclass(frozen=True)
class KernelSpec:
    bandwidth: float

    def __post_init__(self):
        if not (np.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth!r}")


@dataclass
class LinkCurveFit:
    """Pointwise smoother output aligned with the observation order."""

    eval_points: np.ndarray
    g_hat: np.ndarray
    g_prime_hat: np.ndarray
    h_hat: np.ndarray
    bandwidths: np.ndarray


class _Window:
    """Kernel weights of every observation around every evaluation point."""

    def __init__(self, index, eval_points, h):
        index = np.asarray(index, dtype=float)
        eval_points = np.atleast_1d(np.asarray(eval_points, dtype=float))
        h = np.broadcast_to(np.asarray(h, dtype=float), eval_points.shape)
        self.D = index[None, :] - eval_points[:, None]
        self.W = kernel_weight(self.D / h[:, None]) / h[:, None]
        WD = self.W * self.D
        self.S0 = self.W.sum(axis=1)
        self.S1 = WD.sum(axis=1)
        self.S2 = (WD * self.D).sum(axis=1)
        self.det = self.S0 * self.S2 - self.S1**2
        inside = self.W > 0
        lo = np.where(inside, self.D, np.inf).min(axis=1)
        hi = np.where(inside, self.D, -np.inf).max(axis=1)
        self.bad = ~(hi > lo) | ~(self.det > 1e-12 * self.S0 * self.S2)

    def raise_if_bad(self, eval_points):
        if self.bad.any():
            pts = np.atleast_1d(eval_points)[self.bad]
            raise InsufficientLocalData(
                f"fewer than two distinct index values in the kernel window at "
                f"{pts.size} point(s), e.g. t={pts[0]:.6g}",
                points=pts,
            )

    def linear(self, v):
        """Weighted least-squares local-linear fit of ``v`` (vector or matrix)."""
        T0 = self.W @ v
        T1 = (self.W * self.D) @ v
        if np.ndim(v) == 1:
            a0 = (self.S2 * T0 - self.S1 * T1) / self.det
            a1 = (self.S0 * T1 - self.S1 * T0) / self.det
        else:
            a0 = (self.S2[:, None] * T0 - self.S1[:, None] * T1) / self.det[:, None]
            a1 = (self.S0[:, None] * T1 - self.S1[:, None] * T0) / self.det[:, None]
        return a0, a1


def _newton(win, y, family, a0, a1):
    n = y.size
    W, D = win.W, win.D
    tol = 1e-10 * n

    def merit(b0, b1):
        z = b0[:, None] + b1[:, None] * D
        with np.errstate(over="ignore", invalid="ignore"):
            val = (W * family.loglik(z, y[None, :])).sum(axis=1)
        return np.where(np.isfinite(val), val, -np.inf)

    current = merit(a0, a1)
    for _ in range(NEWTON_MAX_ITER):
        z = a0[:, None] + a1[:, None] * D
        q = W * family.quasi_score(z, y[None, :])
        e0 = q.sum(axis=1)
        e1 = (q * D).sum(axis=1)
        if np.max(np.maximum(np.abs(e0), np.abs(e1))) <= tol:
            return a0, a1
        s = W * family.score_slope(z, y[None, :])
        H00 = s.sum(axis=1)
        H01 = (s * D).sum(axis=1)
        H11 = (s * D * D).sum(axis=1)
        det = H00 * H11 - H01**2
        with np.errstate(divide="ignore", invalid="ignore"):
            d0 = -(H11 * e0 - H01 * e1) / det
            d1 = -(H00 * e1 - H01 * e0) / det
        d0 = np.where(np.isfinite(d0), d0, 0.0)
        d1 = np.where(np.isfinite(d1), d1, 0.0)
        lam = np.ones_like(a0)
        pending = np.ones(a0.shape, dtype=bool)
        for _ in range(NEWTON_MAX_HALVINGS + 1):
            trial = merit(a0 + lam * d0, a1 + lam * d1)
            # near the root the merit only moves at rounding level
            pending = trial < current - 1e-12 * (1.0 + np.abs(current))
            if not pending.any():
                break
            lam = np.where(pending, lam / 2.0, lam)
        lam = np.where(pending, 0.0, lam)
        a0 = a0 + lam * d0
        a1 = a1 + lam * d1
        current = merit(a0, a1)
        if not np.all(np.isfinite(current)):
            break
    z = a0[:, None] + a1[:, None] * D
    q = W * family.quasi_score(z, y[None, :])
    resid = np.maximum(np.abs(q.sum(axis=1)), np.abs((q * D).sum(axis=1)))
    if np.all(resid <= tol):
        return a0, a1
    raise NoLocalConvergence(
        f"local quasi-score equations unsolved at {(resid > tol).sum()} point(s); "
        f"max residual {np.nanmax(resid):.3g}"
    )


def _link_at(win, y, family):
    if family.is_identity:
        return win.linear(y)
    a0, a1 = win.linear(family.working_response(y))
    return _newton(win, y, family, a0, a1)


def smooth_link(index, y, family, bandwidth, eval_points, widen=False):
    """Solve the local estimating equations at each of ``eval_points``.

    Returns ``(g_hat, g_prime_hat)`` arrays.  ``bandwidth`` may be a scalar
    or one value per evaluation point; ``widen`` enlarges it where the
    window is too sparse, as in :func:`fit_curve`.
    """
    family = get_family(family)
    y = family.check_response(y)
    eval_points = np.atleast_1d(np.asarray(eval_points, dtype=float))
    h = np.broadcast_to(np.asarray(bandwidth, dtype=float), eval_points.shape).copy()
    for attempt in range(WIDEN_MAX + 1):
        win = _Window(index, eval_points, h)
        if win.bad.any() and widen and attempt < WIDEN_MAX:
            h = np.where(win.bad, h * WIDEN_FACTOR, h)
            continue
        break
    win.raise_if_bad(eval_points)
    return _link_at(win, y, family)


def local_link_fit(index, y, family, spec, t):
    """Estimate ``(g(t), g'(t))`` from observations ``(index, y)``."""
    g, gp = smooth_link(index, y, family, spec.bandwidth, [t])
    return float(g[0]), float(gp[0])


def conditional_mean(index, X, spec, t):
    """Local-linear estimate of ``E(X | index = t)``."""
    X = np.asarray(X, dtype=float)
    win = _Window(index, [t], spec.bandwidth)
    b = win.W * (win.S2[:, None] - win.D * win.S1[:, None])
    denom = b.sum(axis=1)
    n = np.size(index)
    if win.bad[0] or abs(denom[0]) < 1e-12 * n * spec.bandwidth:
        win.raise_if_bad([t])
        raise InsufficientLocalData(f"degenerate local weights at t={t:.6g}", points=[t])
    return (b @ X)[0] / denom[0]


def local_weights(index, t, bandwidth):
    """The local-linear weights ``b_i(t)`` for one evaluation point."""
    win = _Window(index, [t], bandwidth)
    return (win.W * (win.S2[:, None] - win.D * win.S1[:, None]))[0]


def fit_curve(index, y, X, family, spec, widen=False):
    """Link and conditional-mean estimates at every ``index_i``.

    With ``widen=True`` points whose kernel window is too sparse get their
    own bandwidth enlarged by a factor 1.5, at most five times, before an
    error is raised.
    """
    family = get_family(family)
    y = family.check_response(y)
    index = np.asarray(index, dtype=float)
    X = np.asarray(X, dtype=float)
    h = np.full(index.shape, float(spec.bandwidth))
    for attempt in range(WIDEN_MAX + 1):
        win = _Window(index, index, h)
        if win.bad.any() and widen and attempt < WIDEN_MAX:
            h = np.where(win.bad, h * WIDEN_FACTOR, h)
            continue
        win.raise_if_bad(index)
        try:
            g, gp = _link_at(win, y, family)
        except NoLocalConvergence:
            if not (widen and attempt < WIDEN_MAX):
                raise
            h = h * WIDEN_FACTOR
            continue
        break
    B = win.W * (win.S2[:, None] - win.D * win.S1[:, None])
    H = (B @ X) / win.det[:, None]
    return LinkCurveFit(
        eval_points=index.copy(), g_hat=g, g_prime_hat=gp, h_hat=H, bandwidths=h
    )


def curve_is_finite(curve):
    return bool(
        np.all(np.isfinite(curve.g_hat))
        and np.all(np.isfinite(curve.g_prime_hat))
        and np.all(np.isfinite(curve.h_hat))
    )
