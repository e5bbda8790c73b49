"""Estimating-function estimation of single-index models.

The model is ``E(Y | X) = mu{g(beta' X)}``.  The mean function ``mu`` is
known and the link ``g`` is an unknown smooth function; the index vector
``beta`` has unit norm and a positive first component.
"""

__version__ = "0.1.0"

from .exceptions import (
    BadDamping,
    BoundaryError,
    DomainError,
    EFMError,
    InsufficientLocalData,
    NoFeasibleBandwidth,
    NoFeasibleDamping,
    NoLocalConvergence,
    TestFailure,
)
from .families import BERNOULLI_LOGIT, FAMILIES, GAUSSIAN_IDENTITY, POISSON_LOG, LinkFamily, get_family
from .inference import (
    CovarianceEstimate,
    QLRResult,
    chi_square_sf,
    covariance_from_fit,
    covariance_of_beta,
    estimate_dispersion,
    estimate_omega,
    pseudo_inverse,
    qlr_test,
)
from .io import Dataset, RunConfig, ingest_csv
from .selection import CVPlan, cv_bandwidth, cv_damping_M, default_bandwidth_grid, make_plan
from .simulation import SimDesign, StudyResult, beta_true, generate, power_curve, run_study
from .smoother import KernelSpec, LinkCurveFit, conditional_mean, fit_curve, kernel_weight, local_link_fit
from .solver import (
    EFMConfig,
    EFMFit,
    efm_score_F,
    fixed_point_step,
    jacobian_J,
    profile_score_G,
    quasi_likelihood_value,
    solve,
)
