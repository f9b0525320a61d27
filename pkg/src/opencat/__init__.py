"""Open category detection with a guaranteed alien detection rate.

Given anomaly scores for a clean nominal sample and for an unlabeled mixture
that contains a known fraction ``alpha`` of aliens, :func:`fit_threshold`
picks the alarm threshold; :mod:`opencat.pac_bounds` says how many samples
make that threshold trustworthy.
"""

__version__ = "0.1.0"

from .cdf_mixture import (  # noqa: E402
    AlienCdfEstimate,
    DetectionThreshold,
    EmpiricalCdf,
    classify,
    empirical_cdf,
    estimate_alien_cdf,
    fit_threshold,
    isotonic_regression,
    isotonize_and_clip,
    select_threshold,
)
from .pac_bounds import (  # noqa: E402
    PacParams,
    achieved_epsilon,
    check_admissibility,
    massart_bound,
    required_sample_size,
)

__all__ = [
    "AlienCdfEstimate",
    "DetectionThreshold",
    "EmpiricalCdf",
    "PacParams",
    "achieved_epsilon",
    "check_admissibility",
    "classify",
    "empirical_cdf",
    "estimate_alien_cdf",
    "fit_threshold",
    "isotonic_regression",
    "isotonize_and_clip",
    "massart_bound",
    "required_sample_size",
    "select_threshold",
]
