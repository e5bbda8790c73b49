"""Plug-in covariance of the index estimate and the quasi-likelihood ratio test."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import gammaincc

from .exceptions import DomainError, TestFailure
from .families import get_family
from .smoother import KernelSpec, fit_curve
from .solver import EFMConfig, EFMFit, information_matrix, jacobian_J, solve

__all__ = [
    "CovarianceEstimate",
    "QLRResult",
    "estimate_dispersion",
    "estimate_omega",
    "pseudo_inverse",
    "covariance_of_beta",
    "chi_square_sf",
    "qlr_test",
    "qlr_statistic",
]

log = logging.getLogger(__name__)


@dataclass
class CovarianceEstimate:
    omega_hat: np.ndarray
    sigma2_hat: float
    sigma_beta: np.ndarray
    std_errors: np.ndarray
    n: int = 0


@dataclass
class QLRResult:
    statistic: float
    df: int
    p_value: float
    full_fit: EFMFit
    restricted_fit: EFMFit
    sigma2_hat: float = 1.0
    raw_statistic: float = 0.0


def estimate_dispersion(fit, X, y, family):
    """Pearson estimate ``sum (y - mu)^2 / V / (n - d)``."""
    family = get_family(family)
    y = np.asarray(y, dtype=float)
    n, d = np.shape(X)
    if n <= d:
        raise DomainError(f"dispersion needs n > d (n={n}, d={d})")
    g = fit.curve.g_hat
    return float(np.sum((y - family.mu(g)) ** 2 / family.variance(g)) / (n - d))


def estimate_omega(fit, X, family, sigma2):
    """Sample version of ``E[{XX' - h h'} rho_2(g) g'^2] / sigma^2``.

    Written as ``sum (X_i - h_i)(X_i - h_i)' ...``, which has the same limit
    and is exactly singular along ``beta_hat``.
    """
    family = get_family(family)
    if not sigma2 > 0:
        raise DomainError("sigma2 must be positive")
    X = np.asarray(X, dtype=float)
    om = information_matrix(fit.curve, X, family) / (X.shape[0] * sigma2)
    if not np.all(np.isfinite(om)):
        raise DomainError("non-finite entries in the information matrix")
    return (om + om.T) / 2.0


def pseudo_inverse(A, rtol=None):
    """Moore-Penrose inverse of a symmetric matrix by eigendecomposition.

    Eigenvalues with modulus below ``rtol * max|eigenvalue|`` are treated as
    zero; ``rtol`` defaults to ``1e-10 * dim``.
    """
    A = np.asarray(A, dtype=float)
    A = (A + A.T) / 2.0
    if rtol is None:
        rtol = 1e-10 * A.shape[0]
    vals, vecs = np.linalg.eigh(A)
    top = np.max(np.abs(vals)) if vals.size else 0.0
    if top == 0.0:
        return np.zeros_like(A)
    keep = np.abs(vals) > rtol * top
    inv = np.zeros_like(vals)
    inv[keep] = 1.0 / vals[keep]
    out = (vecs * inv) @ vecs.T
    return (out + out.T) / 2.0


def covariance_of_beta(fit, omega_hat, sigma2_hat=float("nan"), n=None):
    """``J (J' Omega J)^+ J'`` at ``beta_hat``; covariance of beta_hat is that over n."""
    n = fit.curve.eval_points.size if n is None else n
    J = jacobian_J(fit.beta_hat)
    sigma_beta = J @ pseudo_inverse(J.T @ omega_hat @ J) @ J.T
    sigma_beta = (sigma_beta + sigma_beta.T) / 2.0
    cov = sigma_beta / n
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return CovarianceEstimate(
        omega_hat=omega_hat, sigma2_hat=sigma2_hat, sigma_beta=sigma_beta,
        std_errors=se, n=n,
    )


def covariance_from_fit(fit, X, y, family):
    """Dispersion and Omega, then the covariance of ``beta_hat``, in one call."""
    s2 = estimate_dispersion(fit, X, y, family)
    omega = estimate_omega(fit, X, family, s2)
    return covariance_of_beta(fit, omega, s2, n=np.shape(X)[0])


def chi_square_sf(x, k):
    """Upper tail of the chi-square(k) distribution, ``Q(k/2, x/2)``."""
    if k < 1:
        raise DomainError("degrees of freedom must be >= 1")
    if x < 0:
        raise DomainError("chi-square argument must be nonnegative")
    return float(gammaincc(k / 2.0, x / 2.0))


def _single_column_fit(X, y, family, h):
    curve = fit_curve(X[:, 0], y, X, family, KernelSpec(h), widen=True)
    return EFMFit(
        beta_hat=np.ones(1), curve=curve, iterations=0, converged=True,
        final_score_norm=0.0, bandwidth_used=h, M_used=float("nan"),
        quasi_loglik=float(np.sum(family.quasi_loglik(curve.g_hat, y))),
        family=family.name,
    )


def _best_restricted(X, y, family, config, warm):
    """Restricted fit from the default start and from the full estimate.

    The statistic compares two suprema; a single start can stop at a
    spurious root of the restricted problem, so the converged candidate
    with the larger quasi-likelihood is kept.
    """
    fits = [solve(X, y, family, config)]
    if np.linalg.norm(warm) > 0:
        fits.append(solve(X, y, family, config, beta0=warm))
    good = [f for f in fits if f.converged] or fits
    return max(good, key=lambda f: f.quasi_loglik)


def _embed(fit, keep, d):
    beta = np.zeros(d)
    beta[keep] = fit.beta_hat
    return replace(fit, beta_hat=beta)


def qlr_statistic(q_full, q_restricted, sigma2):
    """``2 (Q_full - Q_restricted) / sigma^2``, before clamping."""
    return 2.0 * (q_full - q_restricted) / sigma2


def qlr_test(X, y, family="gaussian-identity", config=None, restricted=(), full_fit=None):
    """Quasi-likelihood ratio test of ``beta_j = 0`` for ``j in restricted``.

    ``restricted`` holds zero-based column positions and may not contain 0.
    The restricted model is fitted on the remaining columns with the
    bandwidth and damping constant of the full fit, so both quasi-likelihoods
    are computed with the same smoother, and from two starting values (see
    :func:`_best_restricted`).  The statistic is scaled by the
    Pearson dispersion of the full fit.
    """
    family = get_family(family)
    config = config or EFMConfig()
    X = np.asarray(X, dtype=float)
    y = family.check_response(y)
    d = X.shape[1]
    restricted = sorted({int(j) for j in restricted})
    if not restricted:
        raise DomainError("at least one coefficient must be restricted")
    if restricted[0] < 1 or restricted[-1] >= d:
        raise DomainError(
            f"restricted positions must lie in 1..{d - 1} (zero-based, first column excluded)"
        )
    keep = [j for j in range(d) if j not in restricted]

    full = full_fit if full_fit is not None else solve(X, y, family, config)
    h = full.bandwidth_used
    if len(keep) == 1:
        restr = _single_column_fit(X[:, keep], y, family, h)
    else:
        cfg = replace(config, bandwidth=h, M=full.M_used, restarts=0)
        restr = _best_restricted(X[:, keep], y, family, cfg, full.beta_hat[keep])
    restr = _embed(restr, keep, d)
    if not (full.converged and restr.converged):
        raise TestFailure(
            f"fit did not converge (full: {full.converged}, restricted: {restr.converged})",
            full_fit=full, restricted_fit=restr,
        )
    s2 = estimate_dispersion(full, X, y, family)
    # noiseless data: keep the ratio defined
    s2 = max(s2, 1e-8 * max(float(np.var(y)), np.finfo(float).tiny))
    raw = qlr_statistic(full.quasi_loglik, restr.quasi_loglik, s2)
    stat = raw
    if raw < 0:
        if raw < -1e-6:
            warnings.warn(
                f"negative QLR statistic {raw:.4g} clamped to 0", RuntimeWarning, stacklevel=2
            )
        stat = 0.0
    df = len(restricted)
    return QLRResult(
        statistic=float(stat), df=df, p_value=chi_square_sf(stat, df),
        full_fit=full, restricted_fit=restr, sigma2_hat=s2, raw_statistic=float(raw),
    )
