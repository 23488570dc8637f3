"""Confidence distributions for meta-analysis of 2x2 tables modelled as Poisson pairs."""

__version__ = "0.1.0"

from .confidence import (
    ConfidenceCurve,
    ConfidenceDistribution,
    cc_from_cd,
    interval_at,
    log_grid,
    median_estimate,
)
from .estimators import FixedEffectCD, PairwiseRatioCD, RandomEffectsCD, check_studies
from .fixed_effect import (
    FixedEffectFit,
    approx_normal_cd,
    combined_optimal_cd,
    mcl_estimate,
    per_study_cd,
    profile_deviance_cc,
)
from .heterogeneity import (
    KappaCurveResult,
    RandomEffectsFit,
    fit_random_effects,
    gamma0_profile_cc,
    kappa_cc,
    marginal_loglik,
    pairwise_delta_cd,
    q_min,
)
from .tables import StudySet, StudyTable, load_csv, load_example, write_csv

__all__ = [
    "ConfidenceCurve",
    "ConfidenceDistribution",
    "FixedEffectCD",
    "FixedEffectFit",
    "KappaCurveResult",
    "PairwiseRatioCD",
    "RandomEffectsCD",
    "RandomEffectsFit",
    "StudySet",
    "StudyTable",
    "approx_normal_cd",
    "cc_from_cd",
    "check_studies",
    "combined_optimal_cd",
    "fit_random_effects",
    "gamma0_profile_cc",
    "interval_at",
    "kappa_cc",
    "load_csv",
    "load_example",
    "log_grid",
    "marginal_loglik",
    "mcl_estimate",
    "median_estimate",
    "pairwise_delta_cd",
    "per_study_cd",
    "profile_deviance_cc",
    "q_min",
    "write_csv",
]
