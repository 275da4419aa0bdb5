"""Cross-backend agreement between the numba kernels and the numpy
fallbacks, plus the environment-flag selection contract."""

import os
import subprocess
import sys

import numpy as np
import pytest

from gapflow import ControlGain, Grid, kernels, simulate, simulate_linear
from gapflow.solver import initial_cosine


requires_numba = pytest.mark.skipif(not kernels.HAVE_NUMBA,
                                    reason="numba not importable")


@pytest.fixture()
def both_backends():
    if not kernels.HAVE_NUMBA:
        pytest.skip("numba not importable")
    previous = kernels.active_name()
    yield
    kernels.use(previous)


class TestSelection:
    def test_available_and_switch(self):
        assert "numpy" in kernels.available()
        previous = kernels.active_name()
        kernels.use("numpy")
        assert kernels.active_name() == "numpy"
        kernels.use(previous)

    def test_unknown_backend_rejected(self):
        with pytest.raises(ValueError):
            kernels.use("fortran")

    def test_env_flag_selects_fallback(self):
        env = dict(os.environ, GAPFLOW_BACKEND="numpy")
        out = subprocess.run(
            [sys.executable, "-c",
             "from gapflow import kernels; print(kernels.active_name())"],
            capture_output=True, text=True, env=env, check=True)
        assert out.stdout.strip() == "numpy"


@requires_numba
class TestAgreement:
    def run_nonlinear(self, backend, params, eq, lc, gain):
        kernels.use(backend)
        grid = Grid.for_params(params, T=5.0)
        traj = simulate(params, grid, initial_cosine(params, eq, grid),
                        mode="closed", gain=gain, eq=eq, lc=lc)
        return traj.rho[-1], traj.v[-1]

    def test_nonlinear_step(self, both_backends, params, eq, lc, gain):
        rho_nb, v_nb = self.run_nonlinear("numba", params, eq, lc, gain)
        rho_np, v_np = self.run_nonlinear("numpy", params, eq, lc, gain)
        np.testing.assert_allclose(rho_nb, rho_np, rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(v_nb, v_np, rtol=1e-12, atol=1e-14)

    def test_linear_step(self, both_backends, lc, gain, grid, linear_ic):
        rho_dev0, v_dev0 = linear_ic
        results = {}
        for backend in ("numba", "numpy"):
            kernels.use(backend)
            short = Grid(N=grid.N, dx=grid.dx, dt=grid.dt, T=20.0)
            traj = simulate_linear(lc, short, rho_dev0, v_dev0,
                                   mode="closed", gain=gain)
            results[backend] = (traj.rho_dev[-1], traj.v_dev[-1])
        np.testing.assert_allclose(results["numba"][0], results["numpy"][0],
                                   rtol=1e-12, atol=1e-16)
        np.testing.assert_allclose(results["numba"][1], results["numpy"][1],
                                   rtol=1e-12, atol=1e-16)

    def test_transport_run(self, both_backends):
        sig = np.sin(np.linspace(0.0, 6.0, 400))
        rec = np.array([5, 40], dtype=np.int64)
        outs = {}
        for backend in ("numba", "numpy"):
            kernels.use(backend)
            fn = kernels.get("transport_run")
            outs[backend] = fn(sig, 80, 60, 0.9, 0.995, rec, 50)
        np.testing.assert_allclose(outs["numba"][0], outs["numpy"][0],
                                   rtol=1e-13, atol=1e-16)
        np.testing.assert_allclose(outs["numba"][1], outs["numpy"][1],
                                   rtol=1e-13, atol=1e-16)
