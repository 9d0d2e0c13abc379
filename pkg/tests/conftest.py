import numpy as np
import pytest

from cellhom.geometry import Cube, GridSpec, LShape, voxelize
from cellhom.spectrum import Z0Subspace, solve_spectrum

# criterion lines collected by the acceptance gate, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def cube_mask16():
    return voxelize(Cube(0.3), GridSpec(16))


@pytest.fixture(scope="session")
def cube_z16(cube_mask16):
    return Z0Subspace(cube_mask16)


@pytest.fixture(scope="session")
def cube_catalog16(cube_z16):
    return solve_spectrum(cube_z16, 30)


@pytest.fixture(scope="session")
def lshape_catalog16():
    return solve_spectrum(Z0Subspace(voxelize(LShape(), GridSpec(16))), 12)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def cube_run32():
    """Cube of side 0.6 at N = 32 with 30 modes, and the wall time of the whole run."""
    import time

    t0 = time.perf_counter()
    catalog = solve_spectrum(Z0Subspace(voxelize(Cube(0.3), GridSpec(32))), 30)
    return catalog, time.perf_counter() - t0
