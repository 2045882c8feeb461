import numpy as np
import pytest

from friedrichs_mor.assembly import CoefficientField, sample_coefficients
from friedrichs_mor.grid import Rect, build_pair
from friedrichs_mor.harness import ExperimentConfig, build_system
from friedrichs_mor.transfer import build_transfer

UNIT = Rect(0.0, 0.0, 1.0, 1.0)

# criterion id -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE = {}


def record(criterion: str, passed: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int("".join(c for c in k if c.isdigit())), k)):
        passed, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} criterion {key}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def small_pure():
    """Pure diffusion, interior [0,1]^2, delta 0.5, h 1/6 (cheap)."""
    pair = build_pair(UNIT, 0.5, 1 / 6)
    return build_transfer(pair, CoefficientField.constant(pair.grid))


@pytest.fixture(scope="session")
def small_cdr():
    """Varying coefficients with convection on a cheap grid."""
    pair = build_pair(UNIT, 0.5, 1 / 6)
    g = np.random.default_rng(7)
    n = pair.grid.n_cells
    d = g.uniform(0.5, 20.0, n)
    coeff = CoefficientField(np.column_stack([d, d]), np.array([1.0, -0.5]), g.uniform(0.0, 2.0, n))
    return build_transfer(pair, coeff)


@pytest.fixture(scope="session")
def pure_h15():
    return build_system(ExperimentConfig(h=1 / 15))


@pytest.fixture(scope="session")
def pure_h30():
    return build_system(ExperimentConfig())


@pytest.fixture(scope="session")
def cdr_parallel_h30():
    return build_system(ExperimentConfig(test_case="full_cdr_parallel"))


@pytest.fixture(scope="session")
def cdr_lattice_h30():
    return build_system(ExperimentConfig(test_case="full_cdr_lattice"))


def full_cdr_coefficients(grid):
    from friedrichs_mor.harness import channel_geometry

    pattern = channel_geometry("parallel")
    return sample_coefficients(grid, pattern, (1.0, 1.0), pattern.with_values(0.0, 1.0))
