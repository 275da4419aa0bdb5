import numpy as np
import pytest

from gapflow import (TrafficState, from_riemann, linear_coeffs,
                     linearized_rhs, nominal_params, to_riemann)
from gapflow.model import equilibrium

# frozen oracle values (exact-fraction evaluation at the nominal set)
C1 = 5.5671135210718
C2 = 0.08916666666666667
C3 = 0.14381720430107528
C4 = 3.5981308411214954
C5 = 0.03457806263001068
A1 = 2.1743631764597264e-12
A2 = 116.31021013273312


class TestCoefficients:
    def test_frozen_values(self, lc):
        assert lc.c1 == pytest.approx(C1, rel=1e-12)
        assert lc.c2 == pytest.approx(C2, rel=1e-12)
        assert lc.c3 == pytest.approx(C3, rel=1e-12)
        assert lc.c4 == pytest.approx(C4, rel=1e-12)
        assert lc.c5 == pytest.approx(C5, rel=1e-12)

    def test_spectral_constants(self, lc):
        assert lc.tau_char == pytest.approx(0.6, rel=1e-12)
        assert lc.a1 == pytest.approx(A1, rel=1e-10)
        assert lc.a2 == pytest.approx(A2, rel=1e-12)

    def test_diagonalization_identity(self, lc):
        assert lc.c2 - lc.c1 * lc.h_mix_bar * lc.rho_bar ** 2 \
            == pytest.approx(0.0, abs=1e-12 * lc.c2)

    def test_signs(self, lc):
        assert lc.c3 > 0 and lc.c4 > 0 and lc.c5 > 0

    def test_no_authority_without_acc(self):
        p = nominal_params(alpha=0.0)
        lc0 = linear_coeffs(p, equilibrium(p))
        assert lc0.c3 == 0.0

    def test_identity_on_random_draws(self, rng):
        from tests.test_model import random_params
        for _ in range(20):
            p = random_params(rng)
            lc = linear_coeffs(p, equilibrium(p))
            assert lc.c2 == pytest.approx(
                lc.c1 * lc.h_mix_bar * lc.rho_bar ** 2, rel=1e-12)
            assert lc.c4 == pytest.approx(p.L / lc.h_mix_bar, rel=1e-14)


class TestRiemannTransform:
    def test_equilibrium_maps_to_zero(self, params, eq, lc, grid):
        x = grid.cell_centers()
        state = TrafficState(x=x, rho=np.full(grid.N, eq.rho_bar),
                             v=np.full(grid.N, eq.v_bar))
        np.testing.assert_allclose(to_riemann(state, eq, lc), 0.0,
                                   atol=1e-12)

    def test_unit_weight_at_origin(self, eq, lc):
        x = np.array([0.0, 10.0, 20.0])
        rho = np.array([eq.rho_bar + 1e-3, eq.rho_bar, eq.rho_bar])
        v = np.full(3, eq.v_bar)
        z = to_riemann(TrafficState(x=x, rho=rho, v=v), eq, lc)
        assert z[0] == pytest.approx(1e-3, rel=1e-12)
        assert z[1] == z[2] == 0.0

    def test_inverse_formula_at_outlet(self, params, eq, lc):
        x = np.array([0.0, params.D])
        rho_dev, _ = from_riemann(np.array([0.0, 1.0]), np.zeros(2), x,
                                  eq, lc)
        assert rho_dev[1] == pytest.approx(
            np.exp(-lc.c2 * params.D / lc.v_bar), rel=1e-12)

    def test_zero_fields_round(self, eq, lc):
        x = np.linspace(0.0, 1000.0, 11)
        rho_dev, v_dev = from_riemann(np.zeros(11), np.zeros(11), x, eq, lc)
        assert not rho_dev.any() and not v_dev.any()

    def test_round_trip(self, eq, lc, grid, rng):
        x = grid.cell_centers()
        rho = eq.rho_bar + 0.01 * rng.standard_normal(grid.N)
        v = eq.v_bar + 0.1 * rng.standard_normal(grid.N)
        state = TrafficState(x=x, rho=rho, v=v)
        z = to_riemann(state, eq, lc)
        rho_dev, v_dev = from_riemann(z, v - eq.v_bar, x, eq, lc)
        np.testing.assert_allclose(rho_dev, rho - eq.rho_bar, rtol=1e-12,
                                   atol=1e-15)


class TestLinearizedRHS:
    def test_zero_in_zero_out(self, lc, grid):
        x = grid.cell_centers()
        z = np.zeros(grid.N)
        rho_t, v_t = linearized_rhs(z, z, z, lc, x)
        assert not rho_t.any() and not v_t.any()

    def test_uniform_density_offset(self, lc, grid):
        # rho_dev = eps, v_dev = 0, no control: v_t = -c1 eps everywhere
        # (the inlet ghost sees the same offset through the zero v_dev)
        x = grid.cell_centers()
        eps = 1e-3
        rho_t, v_t = linearized_rhs(np.full(grid.N, eps), np.zeros(grid.N),
                                    np.zeros(grid.N), lc, x)
        np.testing.assert_allclose(v_t, -lc.c1 * eps, rtol=1e-12)
        np.testing.assert_allclose(rho_t[1:], 0.0, atol=1e-15)

    def test_closed_loop_substitution_cancels(self, lc, grid, gain, rng):
        # substituting the feedback law must leave v_t = c4 v_x - k v
        x = grid.cell_centers()
        dx = grid.dx
        rho_dev = 0.01 * rng.standard_normal(grid.N)
        v_dev = 0.1 * rng.standard_normal(grid.N)
        h_dev = (-lc.c1 * rho_dev + (gain.k - lc.c2) * v_dev) / lc.c3
        _, v_t = linearized_rhs(rho_dev, v_dev, h_dev, lc, x)
        dvx = np.empty(grid.N)
        dvx[:-1] = (v_dev[1:] - v_dev[:-1]) / dx
        dvx[-1] = 0.0
        expect = np.empty(grid.N)
        expect[:-1] = lc.c4 * dvx[:-1] - gain.k * v_dev[:-1]
        expect[-1] = -gain.k * v_dev[-1]
        np.testing.assert_allclose(v_t, expect, atol=1e-12)

    def test_diagonalization_consistency_first_order(self, eq, lc, params):
        # d/dt of z computed from the primitive rhs must approach the
        # diagonal transport rhs as the grid refines (O(dx) stencils)
        def residual(n):
            x = (np.arange(n) + 0.5) * (params.D / n)
            dx = x[1] - x[0]
            rho_dev = 1e-3 * np.sin(2 * np.pi * x / params.D)
            v_dev = 1e-2 * np.cos(2 * np.pi * x / params.D)
            rho_t, v_t = linearized_rhs(rho_dev, v_dev, np.zeros(n), lc, x)
            weight = np.exp(lc.c2 * x / lc.v_bar)
            z = weight * (rho_dev + lc.coupling * v_dev)
            z_t = weight * (rho_t + lc.coupling * v_t)
            z_x = np.gradient(z, dx)
            target = -lc.v_bar * z_x
            interior = slice(2, -2)
            scale = np.abs(target[interior]).max()
            return np.abs(z_t[interior] - target[interior]).max() / scale

        coarse, fine = residual(100), residual(400)
        assert coarse < 0.2
        assert fine < 0.35 * coarse
