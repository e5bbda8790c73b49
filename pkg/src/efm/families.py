"""Known mean and variance functions for quasi-likelihood single-index models.

Every function takes the *link value* ``z = g(beta'x)`` as its argument,
including the variance function, so ``V(z)`` here is ``V{g}`` and never
``V(mu)``.  The quasi-likelihood potentials are the usual closed forms; each
is fixed up to an additive term in ``y`` alone, which cancels in every
comparison made over the same responses:

=================  ============  ===============  =========================
family             mu(z)         V(z)             Q(z, y)
=================  ============  ===============  =========================
gaussian-identity  z             1                -(y - z)**2 / 2
bernoulli-logit    e^z/(1+e^z)   mu(1 - mu)       y z - log(1 + e^z)
poisson-log        e^z           e^z              y z - e^z
=================  ============  ===============  =========================
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import expit, logit

from .exceptions import DomainError

__all__ = [
    "LinkFamily",
    "GAUSSIAN_IDENTITY",
    "BERNOULLI_LOGIT",
    "POISSON_LOG",
    "FAMILIES",
    "get_family",
]

_TINY = np.finfo(float).tiny

ArrayFn = Callable[[np.ndarray], np.ndarray]


def _finite(z, what="z"):
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise DomainError(f"{what} must be finite")
    return z


def _scalar_or_array(x):
    return float(x) if np.ndim(x) == 0 else x


@dataclass(frozen=True)
class LinkFamily:
    """Mean and variance functions of a model with their quasi-likelihood.

    The built-in instances cover the canonical Gaussian and GLM cases.  A custom family
    can be created by passing the callables directly; ``score_slope`` and
    ``working_response`` are optional and fall back to a central difference
    and to the raw response respectively.
    """

    name: str
    mu: ArrayFn
    mu_prime: ArrayFn
    variance: ArrayFn
    loglik: Callable[[np.ndarray, np.ndarray], np.ndarray]
    response_ok: Callable[[np.ndarray], bool] = lambda y: bool(np.all(np.isfinite(y)))
    slope: Optional[ArrayFn] = None
    working: Optional[ArrayFn] = None
    canonical: bool = False

    def check_response(self, y):
        y = np.asarray(y, dtype=float)
        if not self.response_ok(y):
            raise DomainError(f"response outside the range of family {self.name!r}")
        return y

    def rho(self, l, z):
        """``mu'(z)**l / V(z)``; ``l`` is 1 or 2."""
        if l not in (1, 2):
            raise DomainError("rho is defined for l in {1, 2}")
        z = _finite(z)
        return _scalar_or_array(self.mu_prime(z) ** l / self.variance(z))

    def quasi_score(self, z, y):
        """Derivative in ``z`` of the quasi-likelihood, ``mu'(y - mu)/V``."""
        z = _finite(z)
        y = _finite(y, "y")
        return _scalar_or_array(self.mu_prime(z) * (y - self.mu(z)) / self.variance(z))

    def quasi_loglik(self, z, y):
        z = _finite(z)
        y = self.check_response(y)
        return _scalar_or_array(self.loglik(z, y))

    def score_slope(self, z, y):
        """Derivative of :meth:`quasi_score` with respect to ``z``."""
        z = np.asarray(z, dtype=float)
        if self.slope is not None:
            return self.slope(z) + 0.0 * y
        step = 1e-6 * np.maximum(1.0, np.abs(z))
        return (self.quasi_score(z + step, y) - self.quasi_score(z - step, y)) / (2 * step)

    def working_response(self, y):
        """Link-scale transform of ``y`` used to start local Newton fits."""
        y = np.asarray(y, dtype=float)
        return y.copy() if self.working is None else self.working(y)

    @property
    def is_identity(self):
        return self.name == "gaussian-identity"


def _bernoulli_mu(z):
    return expit(z)


def _bernoulli_var(z):
    # expit(z)*expit(-z) has no cancellation for large |z|
    return np.maximum(expit(z) * expit(-z), _TINY)


def _bernoulli_loglik(z, y):
    return y * z - np.logaddexp(0.0, z)


def _binary(y):
    return bool(np.all((y == 0.0) | (y == 1.0)))


def _counts(y):
    return bool(np.all(np.isfinite(y)) and np.all(y >= 0.0))


GAUSSIAN_IDENTITY = LinkFamily(
    name="gaussian-identity",
    mu=lambda z: np.asarray(z, dtype=float) * 1.0,
    mu_prime=lambda z: np.ones_like(np.asarray(z, dtype=float)),
    variance=lambda z: np.ones_like(np.asarray(z, dtype=float)),
    loglik=lambda z, y: -0.5 * (y - z) ** 2,
    slope=lambda z: -np.ones_like(z),
    canonical=True,
)

BERNOULLI_LOGIT = LinkFamily(
    name="bernoulli-logit",
    mu=_bernoulli_mu,
    mu_prime=_bernoulli_var,
    variance=_bernoulli_var,
    loglik=_bernoulli_loglik,
    response_ok=_binary,
    slope=lambda z: -_bernoulli_var(z),
    working=lambda y: logit((y + 0.5) / 2.0),
    canonical=True,
)

POISSON_LOG = LinkFamily(
    name="poisson-log",
    mu=np.exp,
    mu_prime=np.exp,
    variance=lambda z: np.maximum(np.exp(z), _TINY),
    loglik=lambda z, y: y * z - np.exp(z),
    response_ok=_counts,
    slope=lambda z: -np.exp(z),
    working=lambda y: np.log(y + 0.5),
    canonical=True,
)

FAMILIES = {f.name: f for f in (GAUSSIAN_IDENTITY, BERNOULLI_LOGIT, POISSON_LOG)}


def get_family(family):
    """Resolve a family name (or pass an existing :class:`LinkFamily` through)."""
    if isinstance(family, LinkFamily):
        return family
    try:
        return FAMILIES[str(family).lower()]
    except KeyError:
        raise DomainError(
            f"unknown family {family!r}; choose one of {sorted(FAMILIES)}"
        ) from None
