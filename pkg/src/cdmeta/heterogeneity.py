"""Heterogeneous treatment effects.

Three tools:

* an exact CD for the ratio ``delta = gamma_j / gamma_i`` of two studies'
  effects, from the noncentral hypergeometric law of ``y1_j`` given both
  study totals and the total treatment count;
* a beta-binomial random-effects model, in which the conditional success
  probability of study ``i`` is ``Beta(tau*pi0_i, tau*(1-pi0_i))`` with
  mean ``pi0_i = e1 g0 / (e0 + e1 g0)``, and ``kappa = 1 / (tau + 1)``
  measures heterogeneity (``kappa = 0`` is the common-effect model);
  the profile deviance of ``g0`` gives its confidence curve;
* a simulated confidence curve for ``kappa`` built on the minimised
  Pearson statistic ``Q_min``.
"""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize
from sklearn.isotonic import IsotonicRegression

from .confidence import ConfidenceCurve, ConfidenceDistribution, cc_from_cd, interval_at, median_estimate
from .exceptions import DomainError, NumericalError, ValidationError
from .fixed_effect import _grid_or_default, mcl_estimate
from .kernels import chi2_1_cdf, conditional_success_prob, noncentral_hypergeom_pmf
from .tables import StudySet

__all__ = [
    "KappaCurveResult",
    "PairwiseStats",
    "RandomEffectsFit",
    "fit_random_effects",
    "gamma0_profile_cc",
    "kappa_cc",
    "kappa_to_tau",
    "marginal_loglik",
    "pairwise_delta_cd",
    "pairwise_stats",
    "q_min",
    "q_min_batch",
    "sample_beta_binomial",
    "tau_to_kappa",
]

logger = logging.getLogger(__name__)

KAPPA_MAX = 0.999
DEFAULT_KAPPA_GRID = (0.0, 0.30, 61)
DEFAULT_REPLICATES = 4000
MIN_REPLICATES = 1000


def kappa_to_tau(kappa):
    if not 0.0 <= kappa < 1.0:
        raise DomainError(f"kappa must lie in [0, 1), got {kappa!r}")
    return math.inf if kappa == 0 else 1.0 / kappa - 1.0


def tau_to_kappa(tau):
    if not tau > 0:
        raise DomainError(f"tau must be positive, got {tau!r}")
    return 0.0 if math.isinf(tau) else 1.0 / (tau + 1.0)


def _informative(studies: StudySet, what):
    keep = studies.z > 0
    if not keep.all():
        dropped = [sid for sid, k in zip(studies.ids, keep) if not k]
        warnings.warn(
            f"{what}: studies without events carry no information and are skipped: "
            + ", ".join(dropped),
            stacklevel=3,
        )
    return keep


# ---------------------------------------------------------------- pairwise


@dataclass(frozen=True)
class PairwiseStats:
    """Conditioning statistics for the effect ratio of studies ``i`` and ``j``."""

    w: int
    z1: int
    z2: int
    r: float
    y12_obs: int

    def __post_init__(self):
        if not max(0, self.w - self.z1) <= self.y12_obs <= min(self.w, self.z2):
            raise ValidationError("observed count outside the conditional support")
        if not self.r > 0:
            raise ValidationError("exposure odds factor must be positive")


def pairwise_stats(studies: StudySet, i, j) -> PairwiseStats:
    """Statistics for ``delta = gamma_j / gamma_i``; ``i`` and ``j`` are ids or 1-based positions."""
    a, b = studies.index_of(i), studies.index_of(j)
    if a == b:
        raise ValidationError("pairwise comparison needs two different studies")
    s1, s2 = studies[a], studies[b]
    r = (s1.e0 * s2.e1) / (s1.e1 * s2.e0)
    return PairwiseStats(s1.y1 + s2.y1, s1.z, s2.z, r, s2.y1)


def pairwise_delta_cd(studies: StudySet, i, j, grid=None, half_correction=True) -> ConfidenceDistribution:
    """Half-corrected exact CD for the ratio of treatment effects ``gamma_j / gamma_i``."""
    grid = _grid_or_default(grid)
    st = pairwise_stats(studies, i, j)
    if st.w == 0:
        raise ValidationError(
            f"no treatment events in either study {studies[studies.index_of(i)].id} "
            f"or {studies[studies.index_of(j)].id}; delta CD undefined"
        )
    half = 0.5 if half_correction else 0.0
    values = np.array([
        noncentral_hypergeom_pmf(st.w, st.z1, st.z2, st.r, d).mid_sf(st.y12_obs, half)
        for d in grid
    ])
    lo, hi = max(0, st.w - st.z1), min(st.w, st.z2)
    limits = (half if st.y12_obs == lo else 0.0, half if st.y12_obs == hi else 1.0)
    return ConfidenceDistribution(
        "delta", grid, values, "pairwise", half_corrected=half_correction,
        limits=limits, uninformative=lo == hi,
    )


# ------------------------------------------------------------ random effects


def _log_comb(z, y):
    return np.array([math.lgamma(zi + 1) - math.lgamma(yi + 1) - math.lgamma(zi - yi + 1)
                     for zi, yi in zip(np.ravel(z), np.ravel(y))])


def marginal_loglik(studies: StudySet, gamma0, kappa) -> float:
    """Beta-binomial log-likelihood of the treatment counts given the study totals.

    Studies with no events contribute zero.  ``kappa = 0`` is the
    binomial (common effect) model.
    """
    if not gamma0 > 0:
        raise DomainError(f"gamma0 must be positive, got {gamma0!r}")
    if not 0.0 <= kappa < 1.0:
        raise DomainError(f"kappa must lie in [0, 1), got {kappa!r}")
    return float(_LoglikCache(studies)(gamma0, kappa))


class _LoglikCache:
    """Beta-binomial log-likelihood in the ``kappa`` parameterisation.

    The beta-function ratio is written as rising products and multiplied
    through by ``kappa``; each factor is then ``(1-kappa) pi0 + j kappa``
    (and likewise for ``1 - pi0`` and the total), which is smooth in
    ``kappa`` and reduces to the binomial kernel at ``kappa = 0``.  Index
    arrays for the products are built once so repeated evaluation is cheap.
    """

    def __init__(self, studies: StudySet):
        keep = studies.z > 0
        self.e0, self.e1 = studies.e0[keep], studies.e1[keep]
        y, z = studies.y1[keep], studies.z[keep]
        self.const = float(_log_comb(z, y).sum())
        # index arrays for the three rising products, flattened across studies
        self.ja = np.concatenate([np.arange(v) for v in y]) if y.size else np.zeros(0)
        self.sa = np.repeat(np.arange(y.size), y)
        self.jb = np.concatenate([np.arange(v) for v in z - y]) if y.size else np.zeros(0)
        self.sb = np.repeat(np.arange(y.size), z - y)
        self.jt = np.concatenate([np.arange(v) for v in z]) if y.size else np.zeros(0)

    def __call__(self, gamma0, kappa):
        pi0 = conditional_success_prob(self.e0, self.e1, gamma0)
        a, b = (1 - kappa) * pi0, (1 - kappa) * (1 - pi0)
        return (
            self.const
            + np.log(a[self.sa] + self.ja * kappa).sum()
            + np.log(b[self.sb] + self.jb * kappa).sum()
            - np.log((1 - kappa) + self.jt * kappa).sum()
        )


def _max_over_kappa(ll, gamma0, kappa_max, tol=1e-9):
    """Maximise ``ll(gamma0, kappa)`` over ``kappa`` in ``[0, kappa_max]``."""
    best_k, best = 0.0, ll(gamma0, 0.0)
    if kappa_max <= 0:
        return best_k, best
    bound = kappa_max
    for _ in range(2):
        res = optimize.minimize_scalar(
            lambda k: -ll(gamma0, k), bounds=(0.0, bound), method="bounded",
            options={"xatol": tol},
        )
        if -res.fun > best:
            best_k, best = float(res.x), float(-res.fun)
        if best_k < bound - 1e-6:
            return best_k, best
        # maximum pressed against the upper end: widen once toward 1
        bound = 1.0 - (1.0 - bound) / 10.0
    raise NumericalError(
        f"kappa maximisation at gamma0 = {gamma0:g} is not bracketed below {bound:g}; "
        "the data look extremely heterogeneous"
    )


@dataclass(frozen=True)
class RandomEffectsFit:
    """Maximum likelihood fit of the beta-binomial random-effects model."""

    gamma0_hat: float
    kappa_hat: float
    tau_hat: float
    marginal_loglik: Callable = field(repr=False)
    loglik_max: float = math.nan

    def __post_init__(self):
        if not 0.0 <= self.kappa_hat < 1.0:
            raise DomainError("kappa_hat must lie in [0, 1)")

    def pi0(self, studies: StudySet) -> np.ndarray:
        return conditional_success_prob(studies.e0, studies.e1, self.gamma0_hat)


def _profile_in_gamma0(studies: StudySet, kappa_max):
    ll = _LoglikCache(studies)

    def prof(gamma0):
        return _max_over_kappa(ll, gamma0, kappa_max)[1]

    return ll, prof


def fit_random_effects(studies: StudySet, kappa_max=KAPPA_MAX) -> RandomEffectsFit:
    """Joint maximum likelihood for ``(gamma0, kappa)``.

    The profile of ``gamma0`` (maximised over ``kappa``) is maximised on
    the log scale, in a bracket centred at the common-effect estimate.
    """
    keep = _informative(studies, "random effects")
    if keep.sum() < 2:
        raise ValidationError("random-effects inference needs at least 2 studies with events")
    fe = mcl_estimate(studies)
    if not fe.is_interior:
        raise NumericalError(f"common-effect estimate on the boundary ({fe.boundary}); "
                             "random-effects profile has no interior maximum")
    ll, prof = _profile_in_gamma0(studies, kappa_max)
    t0 = math.log(fe.gamma_hat)
    res = optimize.minimize_scalar(
        lambda t: -prof(math.exp(t)), bounds=(t0 - 4.0, t0 + 4.0), method="bounded",
        options={"xatol": 1e-10},
    )
    gamma0_hat = math.exp(res.x)
    kappa_hat, lmax = _max_over_kappa(ll, gamma0_hat, kappa_max)
    if kappa_hat < 1e-8:
        kappa_hat = 0.0
        lmax = ll(gamma0_hat, 0.0)
    return RandomEffectsFit(
        gamma0_hat, kappa_hat, kappa_to_tau(kappa_hat),
        lambda g, k: marginal_loglik(studies, g, k), float(lmax),
    )


def gamma0_profile_cc(studies: StudySet, grid=None, kappa_max=KAPPA_MAX,
                      fit: RandomEffectsFit | None = None) -> ConfidenceCurve:
    """Profile-deviance confidence curve for the mean effect ``gamma0``.

    ``kappa_max = 0`` pins the model to the common-effect case.
    """
    grid = _grid_or_default(grid)
    if fit is None:
        fit = fit_random_effects(studies, kappa_max)
    _, prof = _profile_in_gamma0(studies, kappa_max)
    lp = np.array([prof(g) for g in grid])
    dev = 2.0 * (fit.loglik_max - lp)
    if (dev < -1e-6).any():
        raise NumericalError("profile exceeds its maximum on the grid; outer maximisation failed")
    cc = chi2_1_cdf(np.maximum(dev, 0.0))
    return ConfidenceCurve("gamma0", grid, cc, "from_deviance", limits=(1.0, 1.0),
                           estimate=fit.gamma0_hat)


# ------------------------------------------------------------------ Q_min


def q_min_batch(y1, z, e0, e1):
    """Minimised Pearson statistic for each row of ``y1``.

    With odds ratio ``c_i = e1_i / e0_i`` and ``v_i = z_i - y_i`` the Pearson
    sum is ``A / g + B g - C`` where ``A = sum(y^2 / (c z))``,
    ``B = sum(v^2 c / z)`` and ``C = sum(2 y v / z)``.  It is convex in
    ``log g`` with minimiser ``sqrt(A / B)`` and minimum ``2 sqrt(A B) - C``.

    Returns
    -------
    q : ndarray
        Minimised statistic per row.
    g : ndarray
        Minimiser per row (0 or ``inf`` when it lies on the boundary).
    """
    y1 = np.atleast_2d(np.asarray(y1, dtype=float))
    z = np.asarray(z, dtype=float)
    c = np.asarray(e1, dtype=float) / np.asarray(e0, dtype=float)
    v = z - y1
    a = (y1**2 / (c * z)).sum(axis=-1)
    b = (v**2 * c / z).sum(axis=-1)
    cross = (2.0 * y1 * v / z).sum(axis=-1)
    q = np.maximum(2.0 * np.sqrt(a * b) - cross, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.where(a == 0, 0.0, np.where(b == 0, np.inf, np.sqrt(a / np.where(b == 0, 1, b))))
    return q, g


def q_min(studies: StudySet):
    """``(q_obs, gamma0_argmin)`` for the observed data; studies without events are excluded."""
    keep = _informative(studies, "Q_min")
    if not keep.any():
        raise DomainError("no study has events; Q_min undefined")
    q, g = q_min_batch(studies.y1[keep], studies.z[keep], studies.e0[keep], studies.e1[keep])
    return float(q[0]), float(g[0])


# ------------------------------------------------------------ kappa curve


def sample_beta_binomial(z, tau, pi0, rng, size=None):
    """Draw from the beta-binomial: ``pi ~ Beta(tau pi0, tau (1 - pi0))``, then ``Bin(z, pi)``.

    ``tau = inf`` draws straight from ``Bin(z, pi0)``.  ``z``, ``pi0`` may be
    arrays (broadcast against ``size``).
    """
    if not tau > 0:
        raise DomainError(f"tau must be positive, got {tau!r}")
    pi0 = np.asarray(pi0, dtype=float)
    if ((pi0 <= 0) | (pi0 >= 1)).any():
        raise DomainError("pi0 must lie in (0, 1)")
    z = np.asarray(z)
    if math.isinf(tau):
        return rng.binomial(z, pi0, size=size)
    pi = rng.beta(tau * pi0, tau * (1.0 - pi0), size=size)
    return rng.binomial(z, pi)


def _tail_at_kappa(kappa, index, seed, replicates, z, pi0, e0, e1, q_obs):
    rng = np.random.default_rng([seed, index])
    ys = sample_beta_binomial(z, kappa_to_tau(kappa), pi0, rng, size=(replicates, z.size))
    q, _ = q_min_batch(ys, z, e0, e1)
    tie_tol = 1e-9 * max(1.0, q_obs)
    ties = np.abs(q - q_obs) <= tie_tol
    return (np.count_nonzero((q > q_obs) & ~ties) + 0.5 * np.count_nonzero(ties)) / replicates


@dataclass(frozen=True)
class KappaCurveResult:
    """Simulated confidence curve for ``kappa``.

    ``cd_raw`` holds the Monte-Carlo estimates of
    ``C(kappa) = P_kappa(Q_min >= q_obs)`` (ties weighted 1/2);
    ``cd_values`` is their monotone (isotonic) fit, from which
    ``cc_values`` and ``point_mass_at_zero = C(0)`` are taken.
    """

    kappa_grid: np.ndarray
    cc_values: np.ndarray
    cd_values: np.ndarray
    cd_raw: np.ndarray
    point_mass_at_zero: float
    q_obs: float
    gamma0_hat: float
    replicates: int
    seed: int

    @property
    def cd(self) -> ConfidenceDistribution:
        return ConfidenceDistribution(
            "kappa", self.kappa_grid, self.cd_values, "simulated",
            support=(0.0, 1.0), limits=(None, None),
        )

    @property
    def curve(self) -> ConfidenceCurve:
        cc = cc_from_cd(self.cd)
        return ConfidenceCurve("kappa", cc.grid, cc.cc_values, "simulated",
                               support=cc.support, limits=cc.limits,
                               estimate=cc.estimate, cd=cc.cd)

    @property
    def cc_at_zero(self) -> float:
        return float(self.cc_values[0])

    def interval(self, level=0.95):
        return interval_at(self.curve, level)

    def median(self) -> float:
        return median_estimate(self.cd)


def kappa_cc(studies: StudySet, kappa_grid=None, replicates=DEFAULT_REPLICATES, seed=0,
             n_jobs=1, fit: RandomEffectsFit | None = None) -> KappaCurveResult:
    """Monte-Carlo confidence curve for the heterogeneity parameter ``kappa``.

    For every grid value, ``replicates`` treatment-count vectors are drawn
    from the beta-binomial model with the study totals and ``gamma0`` held
    at their observed / fitted values, and ``C(kappa)`` is the fraction of
    simulated ``Q_min`` at or above the observed one.  Each grid point has
    its own random stream seeded by ``(seed, grid index)``, so results do
    not depend on ``n_jobs``.
    """
    if replicates < MIN_REPLICATES:
        raise DomainError(f"replicates must be at least {MIN_REPLICATES}, got {replicates}")
    if kappa_grid is None:
        kappa_grid = np.linspace(*DEFAULT_KAPPA_GRID)
    kappa_grid = np.asarray(kappa_grid, dtype=float)
    if kappa_grid.ndim != 1 or kappa_grid.size < 2 or not np.all(np.diff(kappa_grid) > 0):
        raise DomainError("kappa grid must be strictly increasing with at least 2 points")
    if kappa_grid[0] != 0.0 or kappa_grid[-1] >= 1.0:
        raise DomainError("kappa grid must start at 0 and stay below 1")
    if fit is None:
        fit = fit_random_effects(studies)
    keep = studies.z > 0
    z, e0, e1 = studies.z[keep], studies.e0[keep], studies.e1[keep]
    pi0 = conditional_success_prob(e0, e1, fit.gamma0_hat)
    q_obs, _ = q_min(studies)

    args = [(k, idx, int(seed), int(replicates), z, pi0, e0, e1, q_obs)
            for idx, k in enumerate(kappa_grid)]
    if n_jobs == 1:
        raw = np.array([_tail_at_kappa(*a) for a in args])
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            raw = np.array(list(pool.map(lambda a: _tail_at_kappa(*a), args)))
    smooth = IsotonicRegression(y_min=0.0, y_max=1.0).fit_transform(kappa_grid, raw)
    logger.debug("kappa curve: q_obs=%.6g raw C(0)=%.4f", q_obs, raw[0])
    return KappaCurveResult(
        kappa_grid, np.abs(1.0 - 2.0 * smooth), smooth, raw, float(smooth[0]),
        q_obs, fit.gamma0_hat, int(replicates), int(seed),
    )
