"""Data generators for the simulation designs and the study drivers.

Designs
-------
Ex1A, Ex1B
    ``Y = t^2 exp(t) + 0.1 e`` with ``(X_s + 1)/2 ~ Beta(tau, 1)``; in Ex1B
    columns ``2..d`` are instead ``+-0.5`` with equal probability.
Ex2C, Ex2D
    Bernoulli responses with logit ``exp(5t - 2)/(1 + exp(5t - 3)) - 1.5``.
    Ex2C: every column ``U(-2, 2)``.  Ex2D: ``X_1 ~ U(-2, 2)``, remaining
    columns with ``(X_s + 1)/2 ~ Beta(1, 1)``.
Ex3Homo, Ex3Hetero
    ``Y = t^2 + e`` with ``X ~ N_d(2, I)``; ``e ~ N(0, 0.2^2)`` or
    ``e = exp(sqrt(5) t / 14) N(0, 1)``.  For the true index
    ``sqrt(5) t = 2 X_1 + X_2``, so the variance is ``exp((2 X_1 + X_2)/7)``.
Ex4
    ``Y = sin(a t) + N(0, 0.2^2)`` with ``X ~ N_d(2, I)``.
Ex5
    ``d = 3``, ``X ~ U(0,1)^3``, ``Y = sin(pi (t - A)/(B - A)) + alpha Z + N(0, 0.1^2)``
    with ``Z`` alternating 0, 1, 0, ... and ``A, B = sqrt(3)/2 -+ 1.645/sqrt(12)``.

``t = beta' X`` throughout; ``beta = (2, 1, 0, ..., 0)/sqrt(5)`` except for
Ex5 where ``beta = (1, 1, 1)/sqrt(3)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .exceptions import EFMError
from .solver import EFMConfig, normalize_index, solve

__all__ = [
    "DESIGNS",
    "EX5_A",
    "EX5_B",
    "SimDesign",
    "SimData",
    "StudyResult",
    "beta_true",
    "generate",
    "center_by_group",
    "run_study",
    "power_curve",
]

log = logging.getLogger(__name__)

DESIGNS = ("Ex1A", "Ex1B", "Ex2C", "Ex2D", "Ex3Homo", "Ex3Hetero", "Ex4", "Ex5")
FAMILY_OF = {"Ex2C": "bernoulli-logit", "Ex2D": "bernoulli-logit"}

EX5_A = math.sqrt(3) / 2 - 1.645 / math.sqrt(12)
EX5_B = math.sqrt(3) / 2 + 1.645 / math.sqrt(12)


@dataclass(frozen=True)
class SimDesign:
    """One simulation setting.  ``delta`` sets ``beta_4`` (power studies)."""

    id: str
    d: int = 10
    n: int = 400
    tau: float = 1.5
    a: float = math.pi / 2
    alpha: float = 0.3
    delta: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.id not in DESIGNS:
            raise ValueError(f"unknown design {self.id!r}; choose one of {DESIGNS}")
        if self.id == "Ex5" and self.d != 3:
            object.__setattr__(self, "d", 3)
        if self.d < 2:
            raise ValueError("d must be at least 2")
        if self.n < 10:
            raise ValueError("n must be at least 10")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.delta != 0.0 and self.d < 4:
            raise ValueError("delta needs d >= 4")

    @property
    def family(self):
        return FAMILY_OF.get(self.id, "gaussian-identity")


@dataclass
class SimData:
    X: np.ndarray
    y: np.ndarray
    beta: np.ndarray
    design: SimDesign
    Z: Optional[np.ndarray] = None


@dataclass
class StudyResult:
    design: SimDesign
    per_rep_errors: np.ndarray
    converged: np.ndarray
    mean_error: float
    mc_stderr: Optional[float]
    convergence_rate: float
    per_rep_beta: np.ndarray = field(repr=False, default=None)


def beta_true(design, d=None):
    design_id = design.id if isinstance(design, SimDesign) else str(design)
    if design_id not in DESIGNS:
        raise ValueError(f"unknown design {design_id!r}")
    if d is None:
        d = design.d if isinstance(design, SimDesign) else (3 if design_id == "Ex5" else 10)
    if design_id == "Ex5":
        if d != 3:
            raise ValueError("Ex5 is defined for d = 3 only")
        return np.full(3, 1.0 / math.sqrt(3))
    if d < 2:
        raise ValueError("d must be at least 2")
    beta = np.zeros(d)
    beta[:2] = np.array([2.0, 1.0]) / math.sqrt(5)
    delta = design.delta if isinstance(design, SimDesign) else 0.0
    if delta:
        beta[3] = delta
        beta = normalize_index(beta)
    return beta


def _beta_columns(rng, n, k, tau):
    return 2.0 * rng.random((n, k)) ** (1.0 / tau) - 1.0


def _covariates(design, rng):
    n, d = design.n, design.d
    kind = design.id
    if kind == "Ex1A":
        return _beta_columns(rng, n, d, design.tau)
    if kind == "Ex1B":
        X = np.empty((n, d))
        X[:, :1] = _beta_columns(rng, n, 1, design.tau)
        X[:, 1:] = np.where(rng.random((n, d - 1)) < 0.5, -0.5, 0.5)
        return X
    if kind == "Ex2C":
        return rng.uniform(-2.0, 2.0, (n, d))
    if kind == "Ex2D":
        X = np.empty((n, d))
        X[:, 0] = rng.uniform(-2.0, 2.0, n)
        X[:, 1:] = _beta_columns(rng, n, d - 1, 1.0)
        return X
    if kind in ("Ex3Homo", "Ex3Hetero", "Ex4"):
        return 2.0 + rng.standard_normal((n, d))
    return rng.random((n, 3))


def ex2_link(t):
    return np.exp(5 * t - 2) / (1 + np.exp(5 * t - 3)) - 1.5


def generate(design):
    """Draw one dataset; identical designs (seed included) give identical data."""
    rng = np.random.default_rng(design.seed)
    X = _covariates(design, rng)
    beta = beta_true(design)
    t = X @ beta
    n = design.n
    Z = None
    kind = design.id
    if kind in ("Ex1A", "Ex1B"):
        y = t**2 * np.exp(t) + 0.1 * rng.standard_normal(n)
    elif kind in ("Ex2C", "Ex2D"):
        p = 1.0 / (1.0 + np.exp(-ex2_link(t)))
        y = (rng.random(n) < p).astype(float)
    elif kind == "Ex3Homo":
        y = t**2 + 0.2 * rng.standard_normal(n)
    elif kind == "Ex3Hetero":
        y = t**2 + np.exp(math.sqrt(5) * t / 14) * rng.standard_normal(n)
    elif kind == "Ex4":
        y = np.sin(design.a * t) + 0.2 * rng.standard_normal(n)
    else:
        # observation i (1-based) has Z = 0 when i is odd
        Z = (np.arange(n) % 2 == 1).astype(float)
        y = (
            np.sin(math.pi * (t - EX5_A) / (EX5_B - EX5_A))
            + design.alpha * Z
            + 0.1 * rng.standard_normal(n)
        )
    return SimData(X=X, y=y, beta=beta, design=design, Z=Z)


def center_by_group(y, groups):
    """Subtract the per-group sample mean of ``y``."""
    y = np.asarray(y, dtype=float)
    out = y.copy()
    for g in np.unique(groups):
        mask = groups == g
        out[mask] = y[mask] - y[mask].mean()
    return out


def fit_dataset(data, config):
    """Fit the estimator to one simulated dataset (Ex5 responses are centred)."""
    y = data.y if data.Z is None else center_by_group(data.y, data.Z)
    return solve(data.X, y, data.design.family, config)


def freeze_damping(design, config):
    """Resolve ``M="auto"`` once, on the first replication's data.

    Cross-validating M costs about thirty solves, so a study selects it on
    one pilot dataset and keeps it fixed for every replication.
    """
    if config.M != "auto":
        return config
    from .selection import cv_damping_M, default_damping_grid, make_plan

    data = generate(design)
    y = data.y if data.Z is None else center_by_group(data.y, data.Z)
    grid = config.damping_grid or default_damping_grid(design.d)
    plan = make_plan(design.n, config.cv_folds, config.seed)
    M = cv_damping_M(data.X, y, design.family, config, grid, plan)
    log.info("damping constant M=%.4g selected on the pilot dataset", M)
    return replace(config, M=M)


def run_study(design, reps, config=None, progress=None):
    """Average ``sum_s |beta_hat_s - beta_s|`` over ``reps`` replications.

    Replication ``r`` uses seed ``design.seed + r``.  Replications that fail
    or stop at ``max_iter`` are kept in ``per_rep_errors`` but excluded from
    the mean.
    """
    if reps < 1:
        raise ValueError("reps must be at least 1")
    config = freeze_damping(design, config or EFMConfig())
    errors = np.full(reps, np.nan)
    ok = np.zeros(reps, dtype=bool)
    betas = np.full((reps, design.d), np.nan)
    for r in range(reps):
        data = generate(replace(design, seed=design.seed + r))
        try:
            fit = fit_dataset(data, config)
        except EFMError as exc:
            log.warning("replication %d failed: %s", r, exc)
            continue
        betas[r] = fit.beta_hat
        errors[r] = float(np.sum(np.abs(fit.beta_hat - data.beta)))
        ok[r] = fit.converged
        if progress is not None:
            progress(r, errors[r], fit)
    good = errors[ok]
    mean = float(np.mean(good)) if good.size else float("nan")
    se = float(np.std(good, ddof=1) / math.sqrt(good.size)) if good.size > 1 else None
    return StudyResult(
        design=design, per_rep_errors=errors, converged=ok, mean_error=mean,
        mc_stderr=se, convergence_rate=float(ok.mean()), per_rep_beta=betas,
    )


@dataclass
class PowerResult:
    deltas: np.ndarray
    rejection_rates: np.ndarray
    statistics: np.ndarray
    p_values: np.ndarray
    level: float
    completed: np.ndarray


def power_curve(base_design, deltas, level=0.05, reps=100, config=None):
    """Rejection rates of the QLR test of ``beta_4 = ... = beta_d = 0``.

    Failed replications are dropped from the rate's denominator and counted
    in ``completed``.
    """
    from .inference import qlr_test

    deltas = np.asarray(deltas, dtype=float)
    if not np.any(deltas == 0.0):
        raise ValueError("deltas must include 0")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    if reps < 1:
        raise ValueError("reps must be at least 1")
    if base_design.d < 4:
        raise ValueError("power studies need d >= 4")
    config = freeze_damping(base_design, config or EFMConfig())
    restricted = list(range(3, base_design.d))
    stats = np.full((deltas.size, reps), np.nan)
    pvals = np.full((deltas.size, reps), np.nan)
    for i, delta in enumerate(deltas):
        for r in range(reps):
            design = replace(base_design, delta=float(delta), seed=base_design.seed + r)
            data = generate(design)
            y = data.y if data.Z is None else center_by_group(data.y, data.Z)
            try:
                res = qlr_test(data.X, y, design.family, config, restricted)
            except EFMError as exc:
                log.warning("delta=%g rep %d failed: %s", delta, r, exc)
                continue
            stats[i, r] = res.statistic
            pvals[i, r] = res.p_value
    done = np.isfinite(pvals)
    rates = np.array([
        float(np.mean(pvals[i][done[i]] < level)) if done[i].any() else float("nan")
        for i in range(deltas.size)
    ])
    return PowerResult(
        deltas=deltas, rejection_rates=rates, statistics=stats, p_values=pvals,
        level=level, completed=done.sum(axis=1),
    )
