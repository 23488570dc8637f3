"""scikit-learn style estimators wrapping the functional API.

Each estimator takes its configuration in ``__init__`` (so ``get_params``
/ ``set_params`` and ``sklearn.base.clone`` work), learns from a set of
study tables in ``fit`` and exposes fitted results as trailing-underscore
attributes.

``X`` may be a :class:`~cdmeta.tables.StudySet`, a pandas DataFrame with
the CSV column names, or an array-like of shape ``(k, 4)`` holding
``n_control, events_control, n_treatment, events_treatment`` per row.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils import check_array
from sklearn.utils.validation import check_is_fitted

from . import fixed_effect as fe
from . import heterogeneity as het
from .confidence import cc_from_cd, interval_at, median_estimate
from .exceptions import DomainError, ValidationError
from .tables import CSV_COLUMNS, DEFAULT_DIVISOR, StudySet

__all__ = ["FixedEffectCD", "PairwiseRatioCD", "RandomEffectsCD", "check_studies"]


def check_studies(X, divisor=DEFAULT_DIVISOR) -> StudySet:
    """Validate ``X`` and convert it to a :class:`StudySet`."""
    if isinstance(X, StudySet):
        if X.divisor != divisor:
            return StudySet.from_counts([r[1:] for r in X.to_rows()], divisor, ids=X.ids)
        return X
    columns = getattr(X, "columns", None)
    ids = None
    if columns is not None:
        cols = list(columns)
        if "study" in cols:
            ids = [str(v) for v in X["study"]]
        else:
            ids = [str(v) for v in X.index]
        missing = [c for c in CSV_COLUMNS[1:] if c not in cols]
        if missing:
            raise ValidationError(f"missing column {missing[0]!r}")
        X = X[list(CSV_COLUMNS[1:])].to_numpy()
    arr = check_array(X, dtype=np.float64, ensure_min_samples=1)
    if arr.shape[1] != 4:
        raise ValidationError(
            f"expected 4 columns (n_control, events_control, n_treatment, events_treatment), "
            f"got {arr.shape[1]}"
        )
    if not np.array_equal(arr, np.round(arr)):
        raise ValidationError("counts must be integers")
    return StudySet.from_counts(arr.astype(np.int64).tolist(), divisor, ids=ids)


class FixedEffectCD(BaseEstimator):
    """Confidence distribution for a common treatment effect.

    Parameters
    ----------
    method : {"optimal", "normal", "deviance"}
        Exact conditional CD, normal approximation around the MCL estimate,
        or chi-square transformed profile deviance.
    grid : array-like, optional
        Grid of effect values; defaults to 400 log-spaced points on [0.02, 50].
    half_correction : bool
        Half-weight the observed outcome in the exact tail.
    divisor : float
        Exposure divisor applied to group sizes.
    """

    def __init__(self, method="optimal", grid=None, half_correction=True, divisor=DEFAULT_DIVISOR):
        self.method = method
        self.grid = grid
        self.half_correction = half_correction
        self.divisor = divisor

    def fit(self, X, y=None):
        if self.method not in ("optimal", "normal", "deviance"):
            raise DomainError(f"unknown method {self.method!r}")
        studies = check_studies(X, self.divisor)
        self.studies_ = studies
        self.mcl_ = fe.mcl_estimate(studies)
        self.gamma_hat_ = self.mcl_.gamma_hat
        self.cd_ = None
        if self.method == "optimal":
            self.cd_ = fe.combined_optimal_cd(studies, self.grid, self.half_correction)
            self.curve_ = cc_from_cd(self.cd_)
            self.estimate_ = median_estimate(self.cd_)
        elif self.method == "normal":
            self.cd_ = fe.approx_normal_cd(self.mcl_, self.grid)
            self.curve_ = cc_from_cd(self.cd_)
            self.estimate_ = self.gamma_hat_
        else:
            self.curve_ = fe.profile_deviance_cc(studies, self.grid, fit=self.mcl_)
            self.estimate_ = self.gamma_hat_
        return self

    def interval(self, level=0.95):
        check_is_fitted(self, "curve_")
        return interval_at(self.curve_, level)


class PairwiseRatioCD(BaseEstimator):
    """Exact CD for the ratio ``gamma_j / gamma_i`` of two studies' effects.

    ``pair`` holds the two study ids (or 1-based positions).
    """

    def __init__(self, pair=(1, 2), grid=None, half_correction=True, divisor=DEFAULT_DIVISOR):
        self.pair = pair
        self.grid = grid
        self.half_correction = half_correction
        self.divisor = divisor

    def fit(self, X, y=None):
        i, j = self.pair
        studies = check_studies(X, self.divisor)
        self.studies_ = studies
        self.stats_ = het.pairwise_stats(studies, i, j)
        self.cd_ = het.pairwise_delta_cd(studies, i, j, self.grid, self.half_correction)
        self.curve_ = cc_from_cd(self.cd_)
        self.estimate_ = self.curve_.estimate
        return self

    def interval(self, level=0.95):
        check_is_fitted(self, "curve_")
        return interval_at(self.curve_, level)


class RandomEffectsCD(BaseEstimator):
    """Beta-binomial random-effects model: curves for ``gamma0`` and ``kappa``.

    Set ``replicates=None`` to skip the (simulated) ``kappa`` curve.
    """

    def __init__(self, gamma0_grid=None, kappa_grid=None, replicates=het.DEFAULT_REPLICATES,
                 seed=0, n_jobs=1, kappa_max=het.KAPPA_MAX, divisor=DEFAULT_DIVISOR):
        self.gamma0_grid = gamma0_grid
        self.kappa_grid = kappa_grid
        self.replicates = replicates
        self.seed = seed
        self.n_jobs = n_jobs
        self.kappa_max = kappa_max
        self.divisor = divisor

    def fit(self, X, y=None):
        studies = check_studies(X, self.divisor)
        self.studies_ = studies
        self.fit_ = het.fit_random_effects(studies, self.kappa_max)
        self.gamma0_hat_ = self.fit_.gamma0_hat
        self.kappa_hat_ = self.fit_.kappa_hat
        self.gamma0_curve_ = het.gamma0_profile_cc(studies, self.gamma0_grid, self.kappa_max, fit=self.fit_)
        self.kappa_result_ = None
        if self.replicates is not None:
            self.kappa_result_ = het.kappa_cc(
                studies, self.kappa_grid, self.replicates, self.seed, self.n_jobs, fit=self.fit_,
            )
        return self

    def gamma0_interval(self, level=0.95):
        check_is_fitted(self, "gamma0_curve_")
        return interval_at(self.gamma0_curve_, level)

    def kappa_interval(self, level=0.95):
        check_is_fitted(self, "kappa_result_")
        if self.kappa_result_ is None:
            raise ValidationError("fitted with replicates=None; no kappa curve")
        return self.kappa_result_.interval(level)
