"""Inference for a common treatment effect ``gamma``.

Given its total ``z_i``, the treatment count of study ``i`` is
``Bin(z_i, e1_i*gamma / (e0_i + e1_i*gamma))``.  The exact combined CD is
the half-corrected upper tail of ``B = sum(y1_i)`` under the convolution
of these binomials.  Two large-sample approximations are provided: a
normal CD centred at the maximum conditional likelihood estimate, and the
chi-square transformed profile deviance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

from .confidence import ConfidenceCurve, ConfidenceDistribution, log_grid
from .exceptions import BoundaryFitError, DomainError, NumericalError, ValidationError
from .kernels import chi2_1_cdf, conditional_success_prob, normal_cdf, poisson_binomial_pmf
from .tables import StudySet, StudyTable

__all__ = [
    "FixedEffectFit",
    "approx_normal_cd",
    "combined_optimal_cd",
    "default_gamma_grid",
    "mcl_estimate",
    "per_study_cd",
    "profile_deviance_cc",
    "profile_loglik",
    "profile_score",
]

DEFAULT_GRID = (0.02, 50.0, 400)


def default_gamma_grid():
    return log_grid(*DEFAULT_GRID)


def _grid_or_default(grid):
    if grid is None:
        return default_gamma_grid()
    grid = np.asarray(grid, dtype=float)
    if (grid <= 0).any():
        raise DomainError("gamma grid must be positive")
    return grid


def _tail_limits(b_obs, b_max, half):
    """Limits of the half-corrected tail as the effect goes to 0 and to infinity."""
    lo = half if b_obs == 0 else 0.0
    hi = half if b_obs == b_max else 1.0
    return lo, hi


def _optimal_cd_values(e0, e1, z, b_obs, grid, half=0.5):
    out = np.empty(grid.size)
    for g, gamma in enumerate(grid):
        pis = conditional_success_prob(e0, e1, gamma)
        pmf = poisson_binomial_pmf(zip(z, np.atleast_1d(pis)))
        out[g] = pmf.mid_sf(b_obs, half)
    return out


def per_study_cd(study: StudyTable, grid=None, half_correction=True) -> ConfidenceDistribution:
    """Half-corrected CD for ``gamma`` from one study alone.

    A study without events gives a CD identically equal to 1/2 and is
    flagged ``uninformative``.
    """
    grid = _grid_or_default(grid)
    half = 0.5 if half_correction else 0.0
    z = np.array([study.z])
    values = _optimal_cd_values(np.array([study.e0]), np.array([study.e1]), z, study.y1, grid, half)
    return ConfidenceDistribution(
        "gamma", grid, values, "per_study",
        half_corrected=half_correction,
        limits=_tail_limits(study.y1, study.z, half),
        uninformative=study.z == 0,
    )


def combined_optimal_cd(studies: StudySet, grid=None, half_correction=True) -> ConfidenceDistribution:
    """Exact optimal CD for the common ``gamma``.

    ``C(gamma) = P(B > b_obs) + 1/2 P(B = b_obs)`` with ``B`` the sum of
    the treatment counts, conditionally on every study total.
    """
    grid = _grid_or_default(grid)
    z = studies.z
    if z.sum() == 0:
        raise ValidationError("no events in any study; CD undefined")
    half = 0.5 if half_correction else 0.0
    b_obs = int(studies.y1.sum())
    values = _optimal_cd_values(studies.e0, studies.e1, z, b_obs, grid, half)
    return ConfidenceDistribution(
        "gamma", grid, values, "optimal",
        half_corrected=half_correction,
        limits=_tail_limits(b_obs, int(z.sum()), half),
    )


def profile_loglik(studies: StudySet) -> Callable[[float], float]:
    """Profile log-likelihood ``sum(y1 log g - z log(e0 + e1 g))``, vectorised in ``g``."""
    e0, e1, y1, z = studies.e0, studies.e1, studies.y1, studies.z

    def loglik(gamma):
        g = np.asarray(gamma, dtype=float)[..., None]
        with np.errstate(divide="ignore"):
            val = (y1 * np.log(g) - z * np.log(e0 + e1 * g)).sum(axis=-1)
        return val[()] if val.ndim == 0 else val

    return loglik


def profile_score(studies: StudySet) -> Callable[[float], float]:
    """Derivative of :func:`profile_loglik`: ``sum(y1 / g - z e1 / (e0 + e1 g))``."""
    e0, e1, y1, z = studies.e0, studies.e1, studies.y1, studies.z

    def score(gamma):
        g = np.asarray(gamma, dtype=float)[..., None]
        val = (y1 / g - z * e1 / (e0 + e1 * g)).sum(axis=-1)
        return val[()] if val.ndim == 0 else val

    return score


@dataclass(frozen=True)
class FixedEffectFit:
    """Maximum (conditional) likelihood fit of the common effect.

    ``boundary`` is ``None`` for an interior fit, ``"zero"`` when no
    treatment events were seen and ``"infinity"`` when no control events
    were seen; ``gamma_hat`` and ``j_hat`` are then ``None``.
    """

    gamma_hat: float | None
    j_hat: float | None
    b_obs: int
    lambda_hats: np.ndarray | None
    loglik_profile: Callable = field(repr=False)
    score: Callable = field(repr=False)
    boundary: str | None = None

    @property
    def is_interior(self) -> bool:
        return self.boundary is None


def _expand_bracket(f, t0, step=1.0, max_iter=200):
    a, b = t0 - step, t0 + step
    fa, fb = f(a), f(b)
    for _ in range(max_iter):
        if fa * fb <= 0:
            return a, b
        # f is decreasing: positive means the root is to the right
        if fa > 0 and fb > 0:
            a, fa = b, fb
            b += step
            fb = f(b)
        else:
            b, fb = a, fa
            a -= step
            fa = f(a)
        step *= 2
    raise NumericalError("could not bracket the score equation")


def mcl_estimate(studies: StudySet) -> FixedEffectFit:
    """Solve the score equation for the maximum conditional likelihood estimate.

    The scaled score ``gamma * S(gamma) = B - sum(z_i pi_i(gamma))`` is
    strictly decreasing, so the root is bracketed on ``log gamma`` and
    refined with Brent's method.  The observed information is the
    analytic curvature of the profile log-likelihood at the root,
    ``sum(z_i pi_i (1 - pi_i)) / gamma**2``.
    """
    e0, e1, y1, z = studies.e0, studies.e1, studies.y1, studies.z
    b_obs = int(y1.sum())
    ll, sc = profile_loglik(studies), profile_score(studies)
    if b_obs == 0:
        return FixedEffectFit(None, None, b_obs, None, ll, sc, boundary="zero")
    if int(studies.y0.sum()) == 0:
        return FixedEffectFit(None, None, b_obs, None, ll, sc, boundary="infinity")

    def scaled_score(t):
        return b_obs - float((z * conditional_success_prob(e0, e1, math.exp(t))).sum())

    # crude pooled rate ratio as the starting point
    t0 = math.log((b_obs / e1.sum()) / (studies.y0.sum() / e0.sum()))
    a, b = _expand_bracket(scaled_score, t0)
    t_hat = optimize.brentq(scaled_score, a, b, xtol=1e-14, rtol=4 * np.finfo(float).eps)
    gamma_hat = math.exp(t_hat)
    pi = conditional_success_prob(e0, e1, gamma_hat)
    j_hat = float((z * pi * (1 - pi)).sum()) / gamma_hat**2
    lambda_hats = z / (e0 + e1 * gamma_hat)
    return FixedEffectFit(gamma_hat, j_hat, b_obs, lambda_hats, ll, sc)


def _require_interior(fit: FixedEffectFit, what):
    if fit.boundary is not None:
        where = "0" if fit.boundary == "zero" else "infinity"
        raise BoundaryFitError(
            f"the estimate is on the boundary (gamma_hat = {where}); {what} is undefined, "
            "use the exact optimal CD instead",
            boundary=fit.boundary,
        )


def approx_normal_cd(fit: FixedEffectFit, grid=None) -> ConfidenceDistribution:
    """Normal approximation ``Phi((gamma - gamma_hat) * sqrt(J))``."""
    _require_interior(fit, "the normal approximation")
    grid = _grid_or_default(grid)
    sd_inv = math.sqrt(fit.j_hat)
    values = normal_cdf((grid - fit.gamma_hat) * sd_inv)
    return ConfidenceDistribution(
        "gamma", grid, values, "normal_approx", half_corrected=False,
        limits=(float(normal_cdf(-fit.gamma_hat * sd_inv)), 1.0),
    )


def profile_deviance_cc(studies: StudySet, grid=None, fit: FixedEffectFit | None = None) -> ConfidenceCurve:
    """Confidence curve ``Gamma_1(D(gamma))`` from the profile deviance."""
    if fit is None:
        fit = mcl_estimate(studies)
    _require_interior(fit, "the deviance curve")
    grid = _grid_or_default(grid)
    ll = fit.loglik_profile
    dev = 2.0 * (ll(fit.gamma_hat) - ll(grid))
    scale = max(1.0, abs(float(ll(fit.gamma_hat))))
    if (dev < -1e-9 * scale).any():
        raise AssertionError("negative deviance: the score root is not the maximiser")
    dev = np.maximum(dev, 0.0)
    return ConfidenceCurve(
        "gamma", grid, chi2_1_cdf(dev), "from_deviance",
        limits=(1.0, 1.0), estimate=fit.gamma_hat,
    )
