import numpy as np
import pytest

from harmonic_cs import geometry


@pytest.fixture
def torus2():
    return geometry.flat_torus(2)


@pytest.fixture
def torus4():
    return geometry.flat_torus(4)


@pytest.fixture
def sphere2():
    return geometry.round_sphere(2)


@pytest.fixture
def sphere6():
    return geometry.round_sphere(6)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def unit_sphere_riemann(n):
    """``R_ijkm = d_ik d_jm - d_jk d_im`` as a dense array."""
    d = np.eye(n)
    return np.einsum("ik,jm->ijkm", d, d) - np.einsum("jk,im->ijkm", d, d)


# one line per acceptance criterion, echoed after the test summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
