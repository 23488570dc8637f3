import math

import numpy as np
import pytest

from cdmeta.confidence import (
    ConfidenceCurve,
    ConfidenceDistribution,
    cc_from_cd,
    interval_at,
    log_grid,
    median_estimate,
)
from cdmeta.exceptions import DomainError, GridError, UninformativeError


def triangular(centre=5.0, half_width=4.0):
    grid = np.linspace(0.5, 9.5, 901)
    cc = np.clip(np.abs(grid - centre) / half_width, 0.0, 1.0)
    return ConfidenceCurve("theta", grid, cc, "from_deviance", estimate=centre)


def test_log_grid():
    g = log_grid(0.02, 50, 400)
    assert g.size == 400 and g[0] == pytest.approx(0.02) and g[-1] == pytest.approx(50)
    assert np.allclose(np.diff(np.log(g)), np.log(g[1] / g[0]))
    with pytest.raises(DomainError):
        log_grid(0, 1)
    with pytest.raises(DomainError):
        log_grid(1, 2, 1)


def test_symmetric_triangle_gives_symmetric_interval():
    lo, hi = interval_at(triangular(), 0.95)
    assert lo == pytest.approx(5 - 3.8, abs=1e-12)
    assert hi == pytest.approx(5 + 3.8, abs=1e-12)


@pytest.mark.parametrize("level", [0.0, 1.0, -0.2, 1.5])
def test_level_domain(level):
    with pytest.raises(DomainError):
        interval_at(triangular(), level)


def test_cd_must_be_monotone():
    with pytest.raises(DomainError):
        ConfidenceDistribution("g", [1, 2, 3], [0.1, 0.5, 0.4], "optimal")
    # tolerance of 1e-9 admits round-off wiggles
    ConfidenceDistribution("g", [1, 2, 3], [0.1, 0.5, 0.5 - 1e-10], "optimal")


def test_grid_must_increase():
    with pytest.raises(DomainError):
        ConfidenceDistribution("g", [1, 1, 3], [0.1, 0.5, 0.6], "optimal")
    with pytest.raises(DomainError):
        ConfidenceDistribution("g", [1], [0.1], "optimal")


def test_cc_from_cd_identity():
    grid = np.geomspace(0.1, 10, 50)
    vals = 0.5 * (1 + np.tanh(np.log(grid)))
    cd = ConfidenceDistribution("g", grid, vals, "optimal")
    cc = cc_from_cd(cd)
    assert np.array_equal(cc.cc_values, np.abs(1 - 2 * cd.values))
    assert cc.source == "from_cd"
    assert np.array_equal(cc.cd_values(), cd.values)
    # linear interpolation on a 50-point grid
    assert cc.estimate == pytest.approx(1.0, abs=grid[25] - grid[24])


def test_open_lower_boundary():
    # C(0+) = 0.5 (e.g. no events in the numerator), so the lower limit is 0
    grid = np.geomspace(0.1, 10, 200)
    vals = 0.5 + 0.5 * (1 - 1 / (1 + grid))
    cd = ConfidenceDistribution("g", grid, vals, "optimal", limits=(0.5, 1.0))
    lo, hi = cd.interval(0.9)
    assert lo == 0.0
    assert 0.5 + 0.5 * (1 - 1 / (1 + hi)) == pytest.approx(0.95, abs=1e-3)


def test_open_upper_boundary():
    grid = np.geomspace(0.1, 10, 200)
    vals = 0.5 * grid / (1 + grid)
    cd = ConfidenceDistribution("g", grid, vals, "optimal", limits=(0.0, 0.5))
    lo, hi = cd.interval(0.9)
    assert math.isinf(hi)
    assert lo > 0.1


def test_narrow_grid_raises():
    grid = np.linspace(1, 2, 20)
    vals = np.linspace(0.3, 0.7, 20)
    cd = ConfidenceDistribution("g", grid, vals, "optimal", limits=(0.0, 1.0))
    with pytest.raises(GridError, match="widen"):
        cd.interval(0.95)


def test_whole_grid_in_one_tail():
    grid = np.linspace(5, 6, 10)
    cd = ConfidenceDistribution("g", grid, np.full(10, 0.999), "optimal", limits=(0.0, 1.0))
    with pytest.raises(GridError):
        cd.interval(0.95)


def test_grid_starting_at_support_end():
    grid = np.linspace(0, 0.3, 31)
    vals = np.linspace(0.9, 1.0, 31)
    cd = ConfidenceDistribution("kappa", grid, vals, "simulated", support=(0.0, 1.0))
    lo, hi = cd.interval(0.95)
    assert lo == 0.0
    assert hi == pytest.approx(np.interp(0.975, vals, grid), abs=1e-12)
    assert cd.median() == 0.0


def test_flat_cd_median_undefined():
    grid = np.geomspace(0.1, 10, 20)
    cd = ConfidenceDistribution("g", grid, np.full(20, 0.5), "per_study", uninformative=True)
    with pytest.raises(UninformativeError):
        median_estimate(cd)
    assert cc_from_cd(cd).estimate is None


def test_median_interpolates():
    grid = np.array([1.0, 2.0, 3.0])
    cd = ConfidenceDistribution("g", grid, [0.2, 0.4, 0.8], "optimal")
    assert median_estimate(cd) == pytest.approx(2.25)


def test_deviance_curve_cd_values_signed():
    cc = triangular()
    c = cc.cd_values()
    assert np.all(np.diff(c) >= 0)
    assert c[0] < 0.5 < c[-1]
