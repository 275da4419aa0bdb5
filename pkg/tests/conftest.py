import numpy as np
import pytest

from gapflow import (ControlGain, Grid, equilibrium, kernels, linear_coeffs,
                     nominal_params, simulate, simulate_linear)
from gapflow.analysis import lyapunov_gains
from gapflow.solver import initial_cosine


@pytest.fixture(scope="session")
def params():
    return nominal_params()


@pytest.fixture(scope="session")
def eq(params):
    return equilibrium(params)


@pytest.fixture(scope="session")
def lc(params, eq):
    return linear_coeffs(params, eq)


@pytest.fixture(scope="session")
def grid(params):
    return Grid.for_params(params)


@pytest.fixture(scope="session")
def gain():
    return ControlGain(0.25)


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # compile the numba kernels once so per-test timings are clean
    kernels.warmup()


@pytest.fixture(scope="session")
def open_traj(params, eq, grid):
    return simulate(params, grid, initial_cosine(params, eq, grid),
                    mode="open")


@pytest.fixture(scope="session")
def closed_traj(params, eq, lc, grid, gain):
    return simulate(params, grid, initial_cosine(params, eq, grid),
                    mode="closed", gain=gain, eq=eq, lc=lc)


@pytest.fixture(scope="session")
def linear_ic(params, eq, grid):
    initial = initial_cosine(params, eq, grid)
    return initial.rho - eq.rho_bar, initial.v - eq.v_bar


@pytest.fixture(scope="session")
def linear_closed(lc, grid, gain, linear_ic):
    rho_dev0, v_dev0 = linear_ic
    return simulate_linear(lc, grid, rho_dev0, v_dev0, mode="closed",
                           gain=gain)


@pytest.fixture(scope="session")
def linear_open(lc, grid, linear_ic):
    rho_dev0, v_dev0 = linear_ic
    return simulate_linear(lc, grid, rho_dev0, v_dev0, mode="open")


@pytest.fixture(scope="session")
def gains(gain, lc):
    return lyapunov_gains(gain, lc)


@pytest.fixture()
def rng():
    return np.random.default_rng(20260810)
