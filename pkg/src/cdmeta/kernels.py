"""Exact probability kernels.

Everything here is a pure function of its arguments.  The beta-binomial
kernel is parameterised by the concentration ``tau`` and mean ``pi0``;
the mapping to the heterogeneity parameter ``kappa = 1 / (tau + 1)``
lives in :mod:`cdmeta.heterogeneity`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .exceptions import DomainError

__all__ = [
    "ConditionalBinomial",
    "PmfVector",
    "beta_binomial_pmf",
    "chi2_1_cdf",
    "conditional_success_prob",
    "noncentral_hypergeom_pmf",
    "normal_cdf",
    "poisson_binomial_pmf",
]

_LOG_OVERFLOW_GUARD = 700.0


@dataclass(frozen=True)
class PmfVector:
    """A probability mass function on the integers ``offset .. offset + len(probs) - 1``."""

    probs: np.ndarray
    offset: int = 0

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 1 or probs.size == 0:
            raise DomainError("pmf must be a non-empty 1-d array")
        if (probs < 0).any():
            raise DomainError("pmf has negative entries")
        object.__setattr__(self, "probs", probs)

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.offset, self.offset + self.probs.size)

    def mean(self) -> float:
        return float(self.support @ self.probs)

    def var(self) -> float:
        x = self.support
        m = x @ self.probs
        return float(((x - m) ** 2) @ self.probs)

    def pmf(self, x) -> float:
        i = int(x) - self.offset
        return float(self.probs[i]) if 0 <= i < self.probs.size else 0.0

    def sf(self, x) -> float:
        """``P(X > x)``."""
        i = int(x) - self.offset
        if i < 0:
            return 1.0
        return float(self.probs[i + 1:].sum())

    def mid_sf(self, x, half=0.5) -> float:
        """``P(X > x) + half * P(X = x)``: the half-corrected upper tail."""
        return self.sf(x) + half * self.pmf(x)


@dataclass(frozen=True)
class ConditionalBinomial:
    """Law of a treatment count given its study total: ``Bin(z, pi)``."""

    z: int
    pi: float

    def __post_init__(self):
        if self.z < 0 or int(self.z) != self.z:
            raise DomainError(f"trial count must be a nonnegative integer, got {self.z!r}")
        if not 0.0 <= self.pi <= 1.0:
            raise DomainError(f"success probability must lie in [0, 1], got {self.pi!r}")

    def pmf(self) -> PmfVector:
        return PmfVector(_binom_pmf(int(self.z), float(self.pi)))


def conditional_success_prob(e0, e1, gamma):
    """Success probability ``e1*gamma / (e0 + e1*gamma)`` of the conditional binomial.

    Accepts scalars or arrays (broadcast).  ``gamma = 0`` gives 0 and
    ``gamma = inf`` gives 1.
    """
    e0 = np.asarray(e0, dtype=float)
    e1 = np.asarray(e1, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if (e0 <= 0).any() or (e1 <= 0).any():
        raise DomainError("exposures must be positive")
    if (gamma < 0).any() or np.isnan(gamma).any():
        raise DomainError("treatment effect must be nonnegative")
    with np.errstate(invalid="ignore"):
        # written as 1 / (1 + e0 / (e1 * gamma)) so that gamma = inf maps to 1
        out = np.where(gamma == 0, 0.0, 1.0 / (1.0 + e0 / (e1 * np.where(gamma == 0, 1.0, gamma))))
    return out[()] if out.ndim == 0 else out


def _binom_pmf(z, p):
    if z == 0:
        return np.ones(1)
    if p == 0.0 or p == 1.0:
        out = np.zeros(z + 1)
        out[0 if p == 0.0 else -1] = 1.0
        return out
    y = np.arange(z + 1)
    if z <= 1000:
        # exact coefficients; powers underflow cleanly to zero
        coef = np.array([float(math.comb(z, k)) for k in y])
        return coef * p**y * (1.0 - p) ** (z - y)
    logc = special.gammaln(z + 1) - special.gammaln(y + 1) - special.gammaln(z - y + 1)
    return np.exp(logc + y * math.log(p) + (z - y) * math.log1p(-p))


def poisson_binomial_pmf(trials) -> PmfVector:
    """Exact law of a sum of independent binomials ``Bin(z_i, pi_i)``.

    Computed by sequential convolution of the individual binomial pmfs.

    Parameters
    ----------
    trials : iterable of (int, float)
        ``(z_i, pi_i)`` pairs.

    Returns
    -------
    PmfVector
        Probabilities on ``0 .. sum(z_i)``.
    """
    trials = list(trials)
    if not trials:
        raise DomainError("need at least one binomial term")
    out = np.ones(1)
    for z, p in trials:
        cb = ConditionalBinomial(int(z), float(p))
        out = np.convolve(out, _binom_pmf(cb.z, cb.pi))
    # clip convolution round-off below zero
    np.clip(out, 0.0, None, out=out)
    return PmfVector(out / out.sum())


def noncentral_hypergeom_pmf(w, z1, z2, r, delta) -> PmfVector:
    """Fisher noncentral hypergeometric law of the second study's treatment count.

    The pmf of ``u`` on ``max(0, w - z1) .. min(w, z2)`` is proportional to
    ``C(z1, w - u) * C(z2, u) * (r * delta) ** u``.

    The normaliser is a direct sum of the terms; when any log-term leaves
    ``[-700, 700]`` the sum is done in log space instead.
    """
    w, z1, z2 = int(w), int(z1), int(z2)
    if min(w, z1, z2) < 0:
        raise DomainError("counts must be nonnegative")
    if w > z1 + z2:
        raise DomainError(f"w = {w} exceeds z1 + z2 = {z1 + z2}")
    if not r > 0 or not delta > 0:
        raise DomainError("exposure odds factor and delta must be positive")
    lo, hi = max(0, w - z1), min(w, z2)
    u = np.arange(lo, hi + 1)
    log_coef = (
        special.gammaln(z1 + 1) - special.gammaln(w - u + 1) - special.gammaln(z1 - w + u + 1)
        + special.gammaln(z2 + 1) - special.gammaln(u + 1) - special.gammaln(z2 - u + 1)
    )
    log_odds = math.log(r) + math.log(delta)
    log_terms = log_coef + u * log_odds
    if max(np.abs(log_terms).max(), log_coef.max()) <= _LOG_OVERFLOW_GUARD:
        coef = np.array([float(math.comb(z1, w - k) * math.comb(z2, k)) for k in u])
        terms = coef * np.exp(u * log_odds)
        probs = terms / terms.sum()
    else:
        probs = np.exp(log_terms - special.logsumexp(log_terms))
    return PmfVector(probs, offset=lo)


def beta_binomial_pmf(z, tau, pi0, y):
    """Beta-binomial probability of ``y`` successes in ``z`` trials.

    The success probability is drawn from ``Beta(tau*pi0, tau*(1-pi0))``.
    ``tau = inf`` gives the binomial limit.  ``y`` may be an array.
    """
    if not 0.0 < pi0 < 1.0:
        raise DomainError(f"pi0 must lie in (0, 1), got {pi0!r}")
    if not tau > 0:
        raise DomainError(f"tau must be positive, got {tau!r}")
    y = np.asarray(y)
    if (y < 0).any() or (y > z).any():
        raise DomainError("y must lie in 0..z")
    if math.isinf(tau):
        out = _binom_pmf(int(z), float(pi0))[y]
    else:
        a, b = tau * pi0, tau * (1.0 - pi0)
        logp = (
            special.gammaln(z + 1)
            - special.gammaln(y + 1)
            - special.gammaln(z - y + 1)
            + special.betaln(y + a, z - y + b)
            - special.betaln(a, b)
        )
        out = np.exp(logp)
    return out[()] if np.ndim(out) == 0 else out


def normal_cdf(x):
    """Standard normal CDF."""
    return special.ndtr(x)


def chi2_1_cdf(x):
    """CDF of the chi-square distribution with one degree of freedom.

    Uses ``P(chi2_1 <= x) = 2 * Phi(sqrt(x)) - 1 = erf(sqrt(x / 2))``.
    """
    x = np.asarray(x, dtype=float)
    if (x < 0).any():
        raise DomainError("chi2_1_cdf needs a nonnegative argument")
    out = special.erf(np.sqrt(x / 2.0))
    return out[()] if out.ndim == 0 else out
