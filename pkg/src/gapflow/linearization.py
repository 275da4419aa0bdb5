"""Linearization around the uniform congested equilibrium.

Provides the five linearization coefficients, the derived spectral
constants, the exponentially weighted diagonalizing variable z, and a
reference implementation of the linearized right-hand side on the solver
grid (first-order upwind per characteristic family, one-sided closures at
the boundaries, matching the nonlinear scheme's stencils).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Equilibrium, ModelParams, TrafficState, mixed_time_constant


@dataclass(frozen=True)
class LinearCoeffs:
    """Coefficients of the linearized dynamics plus spectral constants.

    c1 [m^2/(veh s^2)], c2 [1/s], c3 [m/s^2], c4 [m/s], c5 [veh s/m^2]
    are the coefficients of the linearized PDE system; a1, a2 and
    tau_char = 1/c4 + 1/v_bar enter the open-loop characteristic function.
    Equilibrium context (v_bar, rho_bar, h_mix_bar, L, D) is carried along
    so analysis routines need no extra arguments.
    """

    c1: float
    c2: float
    c3: float
    c4: float
    c5: float
    a1: float
    a2: float
    tau_char: float
    v_bar: float
    rho_bar: float
    h_mix_bar: float
    L: float
    D: float

    @property
    def riemann_weight_rate(self):
        """Exponent rate c2/v_bar of the diagonalizing weight [1/m]."""
        return self.c2 / self.v_bar

    @property
    def coupling(self):
        """h_mix_bar rho_bar^2, the v-to-density coupling weight."""
        return self.h_mix_bar * self.rho_bar ** 2


def linear_coeffs(p: ModelParams, eq: Equilibrium) -> LinearCoeffs:
    """Evaluate all closed-form linearization constants."""
    tau = mixed_time_constant(p)
    rho2 = eq.rho_bar ** 2
    c1 = 1.0 / (rho2 * tau * eq.h_mix_bar)
    c2 = 1.0 / tau
    c3 = (p.alpha / (p.tau_acc * eq.h_acc_bar ** 2)) * (1.0 / eq.rho_bar - p.L)
    c4 = p.L / eq.h_mix_bar
    c5 = eq.rho_bar / eq.v_bar
    tau_char = 1.0 / c4 + 1.0 / eq.v_bar
    a1 = (c4 * c1 / eq.v_bar) * np.exp(-c2 * p.D / eq.v_bar)
    a2 = eq.v_bar * c1 * tau * tau_char
    return LinearCoeffs(c1=c1, c2=c2, c3=c3, c4=c4, c5=c5,
                        a1=a1, a2=a2, tau_char=tau_char,
                        v_bar=eq.v_bar, rho_bar=eq.rho_bar,
                        h_mix_bar=eq.h_mix_bar, L=p.L, D=p.D)


def to_riemann(state: TrafficState, eq: Equilibrium, lc: LinearCoeffs):
    """Diagonalizing variable z from an absolute state.

    z(x) = exp(c2 x / v_bar) (rho_dev + h_mix_bar rho_bar^2 v_dev); the
    weight grows to exp(c2 D / v_bar) at the outlet, so z spans a large
    dynamic range on long stretches.
    """
    rho_dev = state.rho - eq.rho_bar
    v_dev = state.v - eq.v_bar
    return np.exp(lc.riemann_weight_rate * state.x) * (
        rho_dev + lc.coupling * v_dev)


def from_riemann(z, v_dev, x, eq: Equilibrium, lc: LinearCoeffs):
    """Invert the diagonalizing transform: recover (rho_dev, v_dev)."""
    rho_dev = np.exp(-lc.riemann_weight_rate * np.asarray(x)) * np.asarray(z) \
        - lc.coupling * np.asarray(v_dev)
    return rho_dev, np.asarray(v_dev, dtype=float)


def linearized_rhs(rho_dev, v_dev, h_acc_dev, lc: LinearCoeffs, x):
    """Time derivatives of the linearized deviation fields on a grid.

    Stencils match the nonlinear solver: density derivative upwinded from
    the left (its characteristic moves downstream at v_bar), speed
    derivative upwinded from the right (characteristic moves upstream at
    c4).  Boundary rows implement the inlet relation
    rho_dev(0) = -c5 v_dev(0) through a ghost value and the outlet ODE for
    v_dev(D); the density row at the last cell falls back to a one-sided
    difference.
    """
    r = np.asarray(rho_dev, dtype=float)
    v = np.asarray(v_dev, dtype=float)
    h = np.asarray(h_acc_dev, dtype=float)
    x = np.asarray(x, dtype=float)
    dx = x[1] - x[0]
    n = r.size

    r_ghost = -lc.c5 * v[0]
    drx = np.empty(n)
    drx[0] = (r[0] - r_ghost) / dx
    drx[1:] = (r[1:] - r[:-1]) / dx

    dvx = np.empty(n)
    dvx[:-1] = (v[1:] - v[:-1]) / dx
    dvx[-1] = (v[-1] - v[-2]) / dx

    rho_t = -lc.v_bar * drx - lc.rho_bar * dvx
    v_t = np.empty(n)
    v_t[:-1] = lc.c4 * dvx[:-1] - lc.c1 * r[:-1] - lc.c2 * v[:-1] \
        - lc.c3 * h[:-1]
    v_t[-1] = -lc.c1 * r[-1] - lc.c2 * v[-1] - lc.c3 * h[-1]
    return rho_t, v_t
