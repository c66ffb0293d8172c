import functools
import time

import pytest

import oracles
from thinodal.geometry import make_domain, polynomial_weight, width_profile
from thinodal.laplace2d import build_mesh, solve_first_neumann
from thinodal.sl_solver import solve_first_eigen
from thinodal.verify import scaling_study

EPS_GRID = (0.2, 0.1, 0.05, 0.025)
SESSION_START = time.perf_counter()
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
    terminalreporter.write_line(f"suite wall time {time.perf_counter() - SESSION_START:.0f} s")


@pytest.fixture(scope="session")
def goldens():
    return oracles.load()


@functools.lru_cache(maxsize=None)
def eigenpair(coefs):
    return solve_first_eigen(polynomial_weight(list(coefs)))


@functools.lru_cache(maxsize=None)
def family_eigenpair(family, eps):
    return solve_first_eigen(width_profile(make_domain(family, eps)))


@functools.lru_cache(maxsize=None)
def pde(family, eps, nx, ny):
    return solve_first_neumann(build_mesh(make_domain(family, eps), nx, ny))


@functools.lru_cache(maxsize=None)
def study(family):
    return scaling_study(family, EPS_GRID, jobs=None)


@pytest.fixture(scope="session")
def get_eigenpair():
    return eigenpair


@pytest.fixture(scope="session")
def get_family_eigenpair():
    return family_eigenpair


@pytest.fixture(scope="session")
def get_pde():
    return pde


@pytest.fixture(scope="session")
def get_study():
    return study
