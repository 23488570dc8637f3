import numpy as np
import pytest

from cdmeta import StudySet, load_example


@pytest.fixture(scope="session")
def lidocaine():
    return load_example("lidocaine")


@pytest.fixture(scope="session")
def lidocaine_printed():
    return load_example("lidocaine_swapped")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_study_set(rng, k_max=3, z_max=6, n_range=(5, 200)):
    """Small random study set with every study total at most ``z_max``."""
    k = int(rng.integers(1, k_max + 1))
    rows = []
    for _ in range(k):
        z = int(rng.integers(0, z_max + 1))
        y1 = int(rng.integers(0, z + 1))
        y0 = z - y1
        m0 = int(rng.integers(max(y0, n_range[0]), n_range[1]))
        m1 = int(rng.integers(max(y1, n_range[0]), n_range[1]))
        rows.append((m0, y0, m1, y1))
    return StudySet.from_counts(rows)


_ACCEPTANCE = {}


@pytest.fixture
def report():
    """Record one pass/fail line for an acceptance criterion."""

    def _report(number, ok, detail):
        _ACCEPTANCE[number] = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(_ACCEPTANCE[number])
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[number])
