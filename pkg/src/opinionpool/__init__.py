"""Probabilistic opinion pooling for Gaussian experts."""

__version__ = "0.1.0"

from .gaussian import (  # noqa: E402
    VARIANCE_FLOOR,
    CrossTerms,
    DiagonalGaussian,
    DimensionMismatch,
    ExpertSet,
    cross_terms,
    log_density,
    log_linear_aggregate,
    poe_aggregate,
    sample,
)
from .pooling import (  # noqa: E402
    GaussianMixture,
    NotNormalizedError,
    PooledDensity,
    hellinger_aggregate,
    holder_log_density_unnorm,
    holder_moments,
    holder_normalize,
    mohel_aggregate,
    moe_log_density,
    moe_sample,
    wasserstein_barycenter,
)
from .expfam import ExpFamilyMember, expfam_affinity, expfam_cross_moments, log_partition  # noqa: E402
from .metrics import (  # noqa: E402
    MetricReport,
    estimate_alpha_divergence,
    mc_bhattacharyya,
    mc_nll,
    sharpness,
)
