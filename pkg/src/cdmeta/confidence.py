"""Confidence distributions and confidence curves sampled on a grid.

A confidence distribution ``C`` is stored as its values on a strictly
increasing grid together with its limits at the two ends of the parameter
space.  The limits tell :func:`interval_at` whether a quantile that is not
reached on the grid lies beyond the grid (the grid must be widened) or is
never reached at all (the interval is open at the support boundary).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError, GridError, UninformativeError

__all__ = [
    "ConfidenceCurve",
    "ConfidenceDistribution",
    "cc_from_cd",
    "interval_at",
    "log_grid",
    "median_estimate",
]

_MONOTONE_TOL = 1e-9
_FLAT_TOL = 1e-12

CD_METHODS = ("optimal", "per_study", "normal_approx", "pairwise", "simulated")
CC_SOURCES = ("from_cd", "from_deviance", "simulated")


def log_grid(lo=0.02, hi=50.0, points=400):
    """Log-spaced grid, the default for ratio parameters."""
    if not 0 < lo < hi:
        raise DomainError("log grid needs 0 < lo < hi")
    if points < 2:
        raise DomainError("grid needs at least 2 points")
    return np.geomspace(lo, hi, int(points))


def _check_grid(grid):
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise DomainError("grid must be 1-d with at least 2 points")
    if not np.all(np.diff(grid) > 0):
        raise DomainError("grid must be strictly increasing")
    return grid


@dataclass(frozen=True)
class ConfidenceDistribution:
    """A confidence distribution evaluated on a grid.

    Attributes
    ----------
    param_name : str
    grid : ndarray
        Strictly increasing parameter values.
    values : ndarray
        ``C(grid)``, nondecreasing, in ``[0, 1]``.
    method : str
        One of ``optimal``, ``per_study``, ``normal_approx``, ``pairwise``,
        ``simulated``.
    half_corrected : bool
    support : (float, float)
        Ends of the parameter space.
    limits : (float or None, float or None)
        Limits of ``C`` at the support ends; ``None`` if unknown.
    uninformative : bool
        True when the data carry no information (``C`` is flat at 1/2).
    """

    param_name: str
    grid: np.ndarray
    values: np.ndarray
    method: str
    half_corrected: bool = True
    support: tuple = (0.0, math.inf)
    limits: tuple = (None, None)
    uninformative: bool = False

    def __post_init__(self):
        grid = _check_grid(self.grid)
        values = np.asarray(self.values, dtype=float)
        if values.shape != grid.shape:
            raise DomainError("grid and values differ in length")
        if (values < -_MONOTONE_TOL).any() or (values > 1 + _MONOTONE_TOL).any():
            raise DomainError("CD values must lie in [0, 1]")
        if (np.diff(values) < -_MONOTONE_TOL).any():
            raise DomainError("CD values must be nondecreasing along the grid")
        if self.method not in CD_METHODS:
            raise DomainError(f"unknown CD method {self.method!r}")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", np.clip(values, 0.0, 1.0))

    def __call__(self, x):
        """Linear interpolation of ``C`` inside the grid."""
        return np.interp(x, self.grid, self.values)

    def curve(self) -> "ConfidenceCurve":
        return cc_from_cd(self)

    def interval(self, level=0.95):
        return interval_at(cc_from_cd(self), level)

    def median(self) -> float:
        return median_estimate(self)


@dataclass(frozen=True)
class ConfidenceCurve:
    """A confidence curve ``cc`` on a grid.

    ``limits`` holds the limits of ``cc`` at the support ends (``None`` if
    unknown).  ``cd`` is the originating distribution when
    ``source == "from_cd"``; ``estimate`` is the point where the curve
    touches zero, when known.
    """

    param_name: str
    grid: np.ndarray
    cc_values: np.ndarray
    source: str
    support: tuple = (0.0, math.inf)
    limits: tuple = (None, None)
    estimate: float | None = None
    cd: ConfidenceDistribution | None = None

    def __post_init__(self):
        grid = _check_grid(self.grid)
        cc = np.asarray(self.cc_values, dtype=float)
        if cc.shape != grid.shape:
            raise DomainError("grid and cc values differ in length")
        if (cc < -_MONOTONE_TOL).any() or (cc > 1 + _MONOTONE_TOL).any():
            raise DomainError("confidence curve values must lie in [0, 1]")
        if self.source not in CC_SOURCES:
            raise DomainError(f"unknown curve source {self.source!r}")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "cc_values", np.clip(cc, 0.0, 1.0))

    def cd_values(self) -> np.ndarray:
        """CD values matching the curve.

        For curves built from a CD these are the CD values; otherwise
        ``(1 -+ cc) / 2`` on either side of the estimate.
        """
        if self.cd is not None:
            return self.cd.values
        centre = self.estimate
        if centre is None:
            centre = self.grid[int(np.argmin(self.cc_values))]
        sign = np.sign(self.grid - centre)
        return 0.5 * (1.0 + sign * self.cc_values)

    def interval(self, level=0.95):
        return interval_at(self, level)


def cc_from_cd(cd: ConfidenceDistribution) -> ConfidenceCurve:
    """``cc = |1 - 2 C|`` pointwise."""
    cc = np.abs(1.0 - 2.0 * cd.values)
    limits = tuple(None if v is None else abs(1.0 - 2.0 * v) for v in cd.limits)
    est = None
    if not cd.uninformative:
        try:
            est = median_estimate(cd)
        except (GridError, UninformativeError):
            est = None
    return ConfidenceCurve(
        cd.param_name, cd.grid, cc, "from_cd",
        support=cd.support, limits=limits, estimate=est, cd=cd,
    )


def _crossing(x0, x1, v0, v1, target):
    if v1 == v0:
        return x0
    return x0 + (target - v0) / (v1 - v0) * (x1 - x0)


def _min_region(cc):
    m = cc.min()
    idx = np.flatnonzero(cc <= m + _FLAT_TOL)
    return int(idx[0]), int(idx[-1])


def interval_at(cc: ConfidenceCurve, level=0.95):
    """Read the equal-tailed interval at ``level`` off a confidence curve.

    Walks outward from the minimum of the curve and linearly interpolates
    the first crossing of ``level`` on each side.  When a side never
    crosses inside the grid, the endpoint is the support boundary if the
    grid already reaches it or the curve's limit there stays below
    ``level``; otherwise a :class:`GridError` asks for a wider grid.

    Returns
    -------
    (float, float)
        Lower and upper endpoints; open boundaries are reported as the
        support ends (0 or ``inf`` for ratio parameters).
    """
    if not 0.0 < level < 1.0:
        raise DomainError(f"level must lie strictly between 0 and 1, got {level!r}")
    x, v = cc.grid, cc.cc_values
    first, last = _min_region(v)
    if v[first] >= level:
        # whole grid lies in one tail; only a grid reaching the support end can hold the interval
        if first == 0 and x[0] <= cc.support[0]:
            return float(x[0]), float(x[0])
        if last == x.size - 1 and x[-1] >= cc.support[1]:
            return float(x[-1]), float(x[-1])
        raise GridError(
            f"the curve for {cc.param_name} stays above {level:g} on the grid "
            f"[{x[0]:g}, {x[-1]:g}]; widen or move the grid"
        )

    def beyond(side):
        bound = cc.support[side]
        at_bound = x[0] <= bound if side == 0 else x[-1] >= bound
        lim = cc.limits[side]
        if at_bound:
            return x[0] if side == 0 else x[-1]
        if lim is not None and lim <= level:
            return bound
        where = "below" if side == 0 else "above"
        raise GridError(
            f"the {level:g} confidence limit for {cc.param_name} lies {where} the grid "
            f"[{x[0]:g}, {x[-1]:g}]; widen the grid"
        )

    lower = None
    for i in range(first, -1, -1):
        if v[i] >= level:
            lower = x[i] if i == first else _crossing(x[i], x[i + 1], v[i], v[i + 1], level)
            break
    if lower is None:
        lower = beyond(0)
    upper = None
    for i in range(last, x.size):
        if v[i] >= level:
            upper = x[i] if i == last else _crossing(x[i - 1], x[i], v[i - 1], v[i], level)
            break
    if upper is None:
        upper = beyond(1)
    return float(lower), float(upper)


def median_estimate(cd: ConfidenceDistribution) -> float:
    """Median confidence estimate ``C^{-1}(1/2)``.

    Raises :class:`UninformativeError` when ``C`` is flat at 1/2.  When
    ``C`` is already at or above 1/2 at the lower support boundary, that
    boundary is the estimate (e.g. zero for a variance-type parameter).
    """
    x, v = cd.grid, cd.values
    if cd.uninformative or np.all(np.abs(v - 0.5) <= _FLAT_TOL):
        raise UninformativeError(f"{cd.param_name}: CD is flat at 1/2; median undefined")
    above = np.flatnonzero(v >= 0.5)
    if above.size == 0:
        if cd.limits[1] is not None and cd.limits[1] <= 0.5 and x[-1] < cd.support[1]:
            return float(cd.support[1])
        raise GridError(f"{cd.param_name}: CD stays below 1/2 on the grid; widen the grid upward")
    i = int(above[0])
    if i > 0:
        return float(_crossing(x[i - 1], x[i], v[i - 1], v[i], 0.5))
    if x[0] <= cd.support[0] or v[0] == 0.5:
        return float(x[0])
    lim = cd.limits[0]
    if lim is not None and lim >= 0.5:
        return float(cd.support[0])
    raise GridError(f"{cd.param_name}: CD exceeds 1/2 at the grid start; widen the grid downward")
