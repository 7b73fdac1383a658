"""Balanced block randomization: assignment, SATE estimation, exact moments and simulation."""

from .design import (
    Assignment,
    BlockDesign,
    count_balanced_assignments,
    count_block_assignments,
    enumerate_block,
    enumerate_complete,
    is_balanced,
    make_rng,
    sample_block,
    sample_complete,
)
from .errors import (
    BlockRandError,
    DesignError,
    EnumerationCapExceeded,
    SchemaError,
    ShapeError,
    UndefinedEstimatorError,
    VarianceUnestimableError,
)
from .estimators import (
    estimate_sate,
    mu_hat_ht,
    mu_hat_samp,
    sate_hat_diff,
    sate_hat_ht,
    sigma2_hat_ht,
    sigma2_hat_samp,
    varhat_sate_diff,
    varhat_sate_ht,
)
from .moments import (
    indicator_moments,
    sate_bound,
    sate_moments,
    var_sate_diff,
    var_sate_ht,
    var_star,
)
from .montecarlo import compare_estimators, simulate
from .oracle import default_corpus, exact_covariance, exact_expectation, exact_moments, verify_identities
from .outcomes import ObservedStudy, PotentialOutcomeTable, observe, population_params, sate_true

__version__ = "0.1.0"
