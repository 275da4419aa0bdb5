import numpy as np
import pytest

from gapflow import (BoundaryError, CFLError, ControlGain, Grid,
                     RegionExitError, TrafficState, ValidationError,
                     apply_boundaries, mixed_time_constant, simulate,
                     simulate_linear, simulate_linear_speed_subsystem,
                     step_nonlinear, uniform_control)
from gapflow.solver import initial_cosine, initial_equilibrium


def equilibrium_state(eq, grid):
    x = grid.cell_centers()
    return TrafficState(x=x, rho=np.full(grid.N, eq.rho_bar),
                        v=np.full(grid.N, eq.v_bar))


class TestGrid:
    def test_for_params_tiles_domain(self, params):
        g = Grid.for_params(params, dx=10.0)
        assert g.N == 100 and g.N * g.dx == params.D

    def test_bad_dx_rejected(self, params):
        with pytest.raises(ValidationError):
            Grid.for_params(params, dx=7.0)

    def test_invalid_fields(self):
        with pytest.raises(ValidationError):
            Grid(N=2, dx=10.0, dt=0.1, T=1.0)
        with pytest.raises(ValidationError):
            Grid(N=10, dx=10.0, dt=0.1, T=1.0, extrapolation_order=2)


class TestApplyBoundaries:
    def test_equilibrium_reproduced(self, params, eq, grid):
        bc = apply_boundaries(equilibrium_state(eq, grid), params, grid,
                              grid.dt)
        assert bc.v_in == pytest.approx(eq.v_bar, rel=1e-14)
        assert bc.rho_in == pytest.approx(eq.rho_bar, rel=1e-14)
        assert bc.rho_out == pytest.approx(eq.rho_bar, rel=1e-14)
        assert bc.v_out_next == pytest.approx(eq.v_bar, rel=1e-14)

    def test_outlet_forward_euler(self, params, eq, grid):
        delta = 0.2
        state = equilibrium_state(eq, grid)
        state.v[-1] = eq.v_bar - delta
        bc = apply_boundaries(state, params, grid, grid.dt)
        tau = mixed_time_constant(params)
        assert bc.v_out_next == pytest.approx(
            eq.v_bar - delta + grid.dt * delta / tau, rel=1e-12)

    def test_inlet_density_from_inflow(self, params, eq, grid):
        state = equilibrium_state(eq, grid)
        state.v[:] = 2.0 * eq.v_bar
        bc = apply_boundaries(state, params, grid, grid.dt)
        assert bc.v_in == pytest.approx(2.0 * eq.v_bar, rel=1e-14)
        assert bc.rho_in == pytest.approx(eq.rho_bar / 2.0, rel=1e-14)

    def test_first_order_extrapolation(self, params, eq):
        grid = Grid(N=100, dx=10.0, dt=0.1, T=1.0, extrapolation_order=1)
        state = equilibrium_state(eq, grid)
        state.v[0] = eq.v_bar + 0.1
        state.v[1] = eq.v_bar
        bc = apply_boundaries(state, params, grid, grid.dt)
        assert bc.v_in == pytest.approx(eq.v_bar + 0.2, rel=1e-12)

    def test_nonpositive_inlet_speed_fails(self, params, eq):
        grid = Grid(N=100, dx=10.0, dt=0.1, T=1.0, extrapolation_order=1)
        state = equilibrium_state(eq, grid)
        state.v[0] = 0.5
        state.v[1] = 2.0
        with pytest.raises(BoundaryError):
            apply_boundaries(state, params, grid, grid.dt)


class TestNonlinearStep:
    def test_equilibrium_is_fixed_point(self, params, eq, grid):
        state = equilibrium_state(eq, grid)
        control = uniform_control(grid.N, eq.h_acc_bar)
        out = step_nonlinear(state, control, params, grid)
        np.testing.assert_allclose(out.rho, eq.rho_bar, rtol=1e-14)
        np.testing.assert_allclose(out.v, eq.v_bar, rtol=1e-14)

    def test_region_exit_raises(self, params, eq, grid):
        state = equilibrium_state(eq, grid)
        # sparse and fast: lambda2 > 0 in cell 7
        state.rho[7] = 0.04
        state.v[7] = 20.0
        control = uniform_control(grid.N, eq.h_acc_bar)
        with pytest.raises(RegionExitError) as err:
            step_nonlinear(state, control, params, grid)
        assert err.value.cell == 7

    def test_cfl_abort(self, params, eq):
        grid = Grid(N=100, dx=10.0, dt=5.0, T=10.0)
        state = equilibrium_state(eq, grid)
        control = uniform_control(grid.N, eq.h_acc_bar)
        with pytest.raises(CFLError):
            step_nonlinear(state, control, params, grid)


class TestSimulate:
    def test_mass_balance_every_step(self, open_traj):
        assert open_traj.diagnostics["mass_residual"].max() <= 1e-10

    def test_cfl_monitor_near_design_value(self, open_traj):
        cfl = open_traj.diagnostics["cfl"]
        assert 0.03 <= cfl[0] <= 0.045
        assert cfl.max() < 0.9

    def test_equilibrium_stays_flat_both_modes(self, params, eq, lc, gain):
        grid = Grid.for_params(params, T=5.0)
        for mode, k in (("open", None), ("closed", gain)):
            traj = simulate(params, grid, initial_equilibrium(params, eq,
                                                              grid),
                            mode=mode, gain=k, eq=eq, lc=lc)
            np.testing.assert_allclose(traj.rho, eq.rho_bar, rtol=1e-12)
            np.testing.assert_allclose(traj.v, eq.v_bar, rtol=1e-12)

    def test_closed_loop_records_saturation(self, closed_traj):
        sat = closed_traj.diagnostics["saturation_fraction"]
        assert sat[0] > 0.0          # initial transient clips at h_max
        assert sat[-1] == 0.0        # settled

    def test_invalid_mode(self, params, eq, grid):
        with pytest.raises(ValidationError):
            simulate(params, grid, initial_equilibrium(params, eq, grid),
                     mode="magic")

    def test_closed_needs_gain(self, params, eq, grid):
        with pytest.raises(ValidationError):
            simulate(params, grid, initial_equilibrium(params, eq, grid),
                     mode="closed")

    def test_self_convergence_first_order(self, params, eq, lc):
        # dt,dx-halving study against a finer reference, conservative
        # restriction onto the coarsest grid
        levels = [(10.0, 0.1), (5.0, 0.05), (2.5, 0.025)]
        ref_dx, ref_dt = 1.25, 0.0125
        horizon = 40.0

        def run(dx, dt):
            g = Grid.for_params(params, dx=dx, dt=dt, T=horizon)
            traj = simulate(params, g, initial_cosine(params, eq, g),
                            mode="open")
            return traj.rho[-1], traj.v[-1]

        def restrict(arr, factor):
            return arr.reshape(-1, factor).mean(axis=1)

        rho_ref, v_ref = run(ref_dx, ref_dt)
        rho_r = restrict(rho_ref, rho_ref.size // 100)
        v_r = restrict(v_ref, v_ref.size // 100)
        errors = []
        for dx, dt in levels:
            rho, v = run(dx, dt)
            rho_c = restrict(rho, rho.size // 100)
            v_c = restrict(v, v.size // 100)
            errors.append(np.abs(rho_c - rho_r).mean()
                          + np.abs(v_c - v_r).mean())
        orders = [np.log2(errors[i] / errors[i + 1])
                  for i in range(len(errors) - 1)]
        assert min(orders) >= 0.8


class TestLinearSimulator:
    def test_zero_stays_zero(self, lc, grid, gain):
        traj = simulate_linear(lc, grid, np.zeros(grid.N), np.zeros(grid.N),
                               mode="closed", gain=gain)
        assert not traj.rho_dev.any() and not traj.v_dev.any()

    def test_outlet_decays_exactly(self, linear_closed, gain, grid):
        v_out = linear_closed.v_dev_outlet
        expect = v_out[0] * (1.0 - gain.k * grid.dt) ** np.arange(
            v_out.size)
        np.testing.assert_allclose(v_out, expect, rtol=1e-12, atol=1e-300)

    def test_cfl_guard(self, lc, gain):
        grid = Grid(N=100, dx=10.0, dt=4.0, T=8.0)
        with pytest.raises(CFLError):
            simulate_linear(lc, grid, np.zeros(100), np.zeros(100),
                            mode="closed", gain=gain)

    def test_open_loop_density_wave_relaxes(self, lc, params, eq, grid):
        # the diagonal density wave decays at rate c2 while advecting;
        # start with zero speed deviation so the inlet feeds (almost)
        # nothing and the interior crest is clean
        x = grid.cell_centers()
        rho_dev0 = 0.01 * np.cos(8.0 * np.pi * x / params.D)
        traj = simulate_linear(lc, grid, rho_dev0, np.zeros(grid.N),
                               mode="open")
        t_probe = 10.0
        i = traj.times.searchsorted(t_probe)
        inflow_cells = int(np.ceil(lc.v_bar * t_probe / grid.dx)) + 3
        crest = np.abs(traj.w[i][inflow_cells:]).max()
        expect = np.abs(traj.w[0]).max() * np.exp(-lc.c2 * t_probe)
        assert crest == pytest.approx(expect, rel=0.15)


class TestSpeedSubsystem:
    def test_zero_input(self, lc, gain):
        grid = Grid(N=50, dx=10.0, dt=0.5, T=10.0)
        hist = simulate_linear_speed_subsystem(
            gain, lc, grid, x1=400.0, signal=np.zeros(21),
            record_x=[100.0], snap_stride=5)
        assert not hist.traces.any()
        assert not hist.snapshots.any()

    def test_cfl_guard(self, lc, gain):
        grid = Grid(N=50, dx=1.0, dt=0.5, T=10.0)
        with pytest.raises(CFLError):
            simulate_linear_speed_subsystem(gain, lc, grid, 40.0,
                                            np.zeros(21))

    def test_pulse_arrival_time_and_mass_gain(self, lc, gain):
        # impulse response: centroid delayed by (x1-x2)/c4 and L1 mass
        # scaled by exp(-k (x1-x2)/c4)
        dx = 0.25
        dt = 0.9 * dx / lc.c4
        x1, x2 = 100.0, 60.0
        grid = Grid(N=int(round(120.0 / dx)), dx=dx, dt=dt, T=60.0,
                    cfl_max=1.0)
        n = grid.n_steps
        t = np.arange(n + 1) * dt
        sig = np.exp(-0.5 * ((t - 6.0) / 1.5) ** 2)
        hist = simulate_linear_speed_subsystem(gain, lc, grid, x1, sig,
                                               record_x=[x2])
        out = hist.traces[:, 0]
        delay = (np.sum(t * out) / np.sum(out)
                 - np.sum(t * sig) / np.sum(sig))
        assert delay == pytest.approx((x1 - x2) / lc.c4, rel=0.02)
        gain_l1 = np.trapezoid(out, dx=dt) / np.trapezoid(sig, dx=dt)
        assert gain_l1 == pytest.approx(
            np.exp(-gain.k * (x1 - x2) / lc.c4), rel=0.02)

    def test_sinusoid_gain_frequency_independent(self, lc, gain):
        dx = 0.25
        dt = 0.9 * dx / lc.c4
        x1, x2 = 100.0, 60.0
        grid = Grid(N=int(round(120.0 / dx)), dx=dx, dt=dt, T=120.0,
                    cfl_max=1.0)
        n = grid.n_steps
        t = np.arange(n + 1) * dt
        expect = np.exp(-gain.k * (x1 - x2) / lc.c4)
        for omega in (0.1, 0.4):
            sig = np.sin(omega * t)
            hist = simulate_linear_speed_subsystem(gain, lc, grid, x1, sig,
                                                   record_x=[x2])
            out = hist.traces[:, 0]
            # steady-state window after the transit settles
            settle = t > 2.0 * (x1 - x2) / lc.c4
            ratio = np.abs(out[settle]).max()
            assert ratio == pytest.approx(expect, rel=0.05)
