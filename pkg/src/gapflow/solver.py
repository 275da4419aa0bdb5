"""Explicit finite-volume integration of the nonlinear system and its
linearizations.

The nonlinear scheme is a primitive-variable centered scheme with
Rusanov-type numerical diffusion: density is updated in conservative flux
form (the inlet face carries exactly the prescribed inflow, the outlet
face the last cell's flow, so discrete mass balance telescopes to
round-off), speed in quasilinear form with per-interface diffusion scaled
by the largest neighboring characteristic speed.  The relaxation source is
added explicitly in the same step; the outlet cell integrates the
downstream boundary ODE by forward Euler; the inlet ghost carries an
extrapolated speed and the density enforcing the inflow relation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .controller import ControlField, ControlGain, feedback_law, uniform_control
from .errors import BoundaryError, CFLError, RegionExitError, ValidationError
from .linearization import LinearCoeffs
from .model import (Equilibrium, ModelParams, TrafficState,
                    mixed_time_constant, v_mix)


@dataclass(frozen=True)
class Grid:
    """Uniform space-time grid for the explicit solver."""

    N: int
    dx: float
    dt: float
    T: float
    cfl_max: float = 0.9
    extrapolation_order: int = 0

    def __post_init__(self):
        if self.N < 3 or self.dx <= 0 or self.dt <= 0 or self.T <= 0:
            raise ValidationError("grid needs N >= 3 and positive dx, dt, T")
        if self.extrapolation_order not in (0, 1):
            raise ValidationError("extrapolation_order must be 0 or 1")

    @classmethod
    def for_params(cls, p: ModelParams, dx=10.0, dt=0.1, T=350.0, **kw):
        n = int(round(p.D / dx))
        if abs(n * dx - p.D) > 1e-9 * p.D:
            raise ValidationError(f"dx = {dx} does not tile D = {p.D}")
        return cls(N=n, dx=dx, dt=dt, T=T, **kw)

    @property
    def n_steps(self):
        return int(round(self.T / self.dt))

    def cell_centers(self):
        return (np.arange(self.N) + 0.5) * self.dx


@dataclass(frozen=True)
class BoundaryClosure:
    """Ghost-ring values closing the discrete boundary conditions.

    Inlet: extrapolated speed and the density enforcing rho v = q_in.
    Outlet: extrapolated density and the forward-Euler advance of the
    boundary speed ODE.
    """

    rho_in: float
    v_in: float
    rho_out: float
    v_out_next: float


@dataclass
class Trajectory:
    """Time-indexed simulation output on a fixed grid.

    rho, v, h_acc, saturated have shape (n_samples, N); diagnostics hold
    per-step CFL number, relative mass-balance residual, and saturation
    fraction.
    """

    params: ModelParams
    grid: Grid
    mode: str
    gain: float | None
    times: np.ndarray
    rho: np.ndarray
    v: np.ndarray
    h_acc: np.ndarray
    saturated: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def x(self):
        return self.grid.cell_centers()

    def state_at(self, i: int) -> TrafficState:
        return TrafficState(x=self.x, rho=self.rho[i].copy(),
                            v=self.v[i].copy(), t=float(self.times[i]))

    def sample_index(self, t: float) -> int:
        return int(round(t / self.grid.dt))

    def v_dev_supnorm(self, eq: Equilibrium):
        """Sup-norm of the speed deviation at every sample."""
        return np.abs(self.v - eq.v_bar).max(axis=1)


def apply_boundaries(state: TrafficState, p: ModelParams, grid: Grid,
                     dt: float, control: ControlField | None = None
                     ) -> BoundaryClosure:
    """Close the boundaries for one explicit step.

    The missing inlet speed and outlet density come from fictitious cells
    extrapolated from the interior (constant by default, linear when the
    grid requests first order); the inlet density then follows from the
    inflow relation and the outlet speed from a forward-Euler step of the
    relaxation ODE at x = D.
    """
    v, rho = state.v, state.rho
    h = control.h_acc if control is not None else np.full(grid.N,
                                                          p.h_acc_bar)
    if grid.extrapolation_order == 0:
        v_in = float(v[0])
        rho_out = float(rho[-1])
    else:
        v_in = float(2.0 * v[0] - v[1])
        rho_out = float(2.0 * rho[-1] - rho[-2])
    if v_in <= 0.0:
        raise BoundaryError("extrapolated inlet speed is non-positive")
    rho_in = p.q_in / v_in
    tau = mixed_time_constant(p)
    v_out_next = float(v[-1] + dt * (v_mix(rho[-1], h[-1], p) - v[-1]) / tau)
    return BoundaryClosure(rho_in=rho_in, v_in=v_in, rho_out=rho_out,
                           v_out_next=v_out_next)


def _step_arrays(rho, v, control: ControlField, p: ModelParams, grid: Grid,
                 step_index: int):
    """One explicit step on raw arrays; raises on CFL or region exit."""
    state = TrafficState(x=None, rho=rho, v=v)
    bc = apply_boundaries(state, p, grid, grid.dt, control)
    r = p.gap_ratio
    a_gap = p.alpha + (1.0 - p.alpha) * r
    b_gap = (1.0 - p.alpha) * r / p.h_m
    kernel = kernels.get("nonlinear_step")
    rho_new, v_new, cfl, status, bad = kernel(
        rho, v, control.h_acc, bc.rho_in, bc.v_in, float(control.h_acc[0]),
        bc.v_out_next, p.q_in, grid.dt, grid.dx, p.L,
        mixed_time_constant(p), p.alpha, a_gap, b_gap, p.rho_min, p.v_f)
    if status == kernels.REGION_EXIT:
        raise RegionExitError(
            f"state left the admissible region at step {step_index}, "
            f"cell {bad} (rho={rho[bad]:.6g}, v={v[bad]:.6g})",
            step=step_index, cell=bad)
    if cfl > grid.cfl_max:
        raise CFLError(f"CFL {cfl:.3f} exceeds limit {grid.cfl_max} "
                       f"at step {step_index}", step=step_index)
    return rho_new, v_new, cfl


def step_nonlinear(state: TrafficState, control: ControlField,
                   p: ModelParams, grid: Grid) -> TrafficState:
    """Advance a state by one time step under the given control field."""
    rho_new, v_new, _ = _step_arrays(state.rho, state.v, control, p, grid, 0)
    return TrafficState(x=state.x, rho=rho_new, v=v_new,
                        t=state.t + grid.dt)


def initial_cosine(p: ModelParams, eq: Equilibrium, grid: Grid,
                   amplitude=0.01, waves=4) -> TrafficState:
    """Cosine density perturbation with flow-consistent speed.

    rho(x,0) = rho_bar + A cos(2 pi waves x / D), v(x,0) = q_in / rho(x,0).
    """
    x = grid.cell_centers()
    rho = eq.rho_bar + amplitude * np.cos(2.0 * np.pi * waves * x / p.D)
    return TrafficState(x=x, rho=rho, v=p.q_in / rho, t=0.0)


def initial_equilibrium(p: ModelParams, eq: Equilibrium,
                        grid: Grid) -> TrafficState:
    x = grid.cell_centers()
    return TrafficState(x=x, rho=np.full(grid.N, eq.rho_bar),
                        v=np.full(grid.N, eq.v_bar), t=0.0)


def simulate(p: ModelParams, grid: Grid, initial: TrafficState,
             mode: str = "open", gain: ControlGain | None = None,
             eq: Equilibrium | None = None,
             lc: LinearCoeffs | None = None) -> Trajectory:
    """Run the nonlinear system open- or closed-loop over the horizon.

    Closed-loop mode re-evaluates the feedback law from the full current
    state before every step.  Solver failures carry the step index.
    """
    if mode not in ("open", "closed"):
        raise ValidationError(f"unknown mode {mode!r}")
    if mode == "closed":
        if gain is None:
            raise ValidationError("closed-loop mode needs a gain")
        if eq is None or lc is None:
            from .linearization import linear_coeffs
            from .model import equilibrium as _equilibrium
            eq = eq or _equilibrium(p)
            lc = lc or linear_coeffs(p, eq)
    initial.validate(p)

    n = grid.n_steps
    rho_h = np.empty((n + 1, grid.N))
    v_h = np.empty((n + 1, grid.N))
    h_h = np.empty((n + 1, grid.N))
    sat_h = np.zeros((n + 1, grid.N), dtype=bool)
    cfl = np.empty(n)
    mass_res = np.empty(n)
    sat_frac = np.empty(n)

    rho, v = initial.rho.copy(), initial.v.copy()
    rho_h[0], v_h[0] = rho, v
    x = grid.cell_centers()
    for it in range(n):
        if mode == "closed":
            state = TrafficState(x=x, rho=rho, v=v, t=it * grid.dt)
            control = feedback_law(state, eq, lc, gain, p)
        else:
            control = uniform_control(grid.N, p.h_acc_bar)
        h_h[it] = control.h_acc
        sat_h[it] = control.saturated
        sat_frac[it] = control.saturation_fraction

        mass_old = rho.sum() * grid.dx
        flux_out = rho[-1] * v[-1]
        rho, v, cfl[it] = _step_arrays(rho, v, control, p, grid, it)
        mass_new = rho.sum() * grid.dx
        expected = grid.dt * (p.q_in - flux_out)
        mass_res[it] = abs(mass_new - mass_old - expected) / mass_new

        rho_h[it + 1], v_h[it + 1] = rho, v
    h_h[n] = h_h[n - 1]
    sat_h[n] = sat_h[n - 1]

    return Trajectory(
        params=p, grid=grid, mode=mode,
        gain=gain.k if gain is not None else None,
        times=np.arange(n + 1) * grid.dt,
        rho=rho_h, v=v_h, h_acc=h_h, saturated=sat_h,
        diagnostics={"cfl": cfl, "mass_residual": mass_res,
                     "saturation_fraction": sat_frac,
                     "backend": kernels.active_name()})


# ---------------------------------------------------------------------------
# linearized dynamics
# ---------------------------------------------------------------------------

@dataclass
class LinearTrajectory:
    """Deviation-field history of the linearized system.

    Integrated in diagonal variables (w, v_dev) with
    w = rho_dev + h_mix_bar rho_bar^2 v_dev, which keeps the numbers
    well-scaled; rho_dev is reconstructed exactly from the transform.
    """

    lc: LinearCoeffs
    grid: Grid
    mode: str
    gain: float | None
    times: np.ndarray
    x: np.ndarray
    rho_dev: np.ndarray
    v_dev: np.ndarray

    @property
    def w(self):
        return self.rho_dev + self.lc.coupling * self.v_dev

    @property
    def v_dev_outlet(self):
        return self.v_dev[:, -1]


def simulate_linear(lc: LinearCoeffs, grid: Grid, rho_dev0, v_dev0,
                    mode: str = "closed",
                    gain: ControlGain | None = None) -> LinearTrajectory:
    """Integrate the diagonalized linear system open- or closed-loop.

    Closed-loop uses the post-cancellation dynamics (density wave forced
    by -k coupling v_dev, speed a damped upwind transport, autonomous
    outlet ODE); open-loop keeps the natural relaxation of the density
    wave and the speed forcing through the coupling.
    """
    if mode not in ("open", "closed"):
        raise ValidationError(f"unknown mode {mode!r}")
    closed = mode == "closed"
    if closed and gain is None:
        raise ValidationError("closed-loop mode needs a gain")
    k = gain.k if gain is not None else 0.0
    cfl = max(lc.v_bar, lc.c4) * grid.dt / grid.dx
    if cfl > grid.cfl_max:
        raise CFLError(f"linear CFL {cfl:.3f} exceeds {grid.cfl_max}")

    x = grid.cell_centers()
    n = grid.n_steps
    w = np.asarray(rho_dev0, float) + lc.coupling * np.asarray(v_dev0, float)
    vd = np.asarray(v_dev0, dtype=float).copy()
    w_h = np.empty((n + 1, grid.N))
    v_h = np.empty((n + 1, grid.N))
    w_h[0], v_h[0] = w, vd
    refl = lc.L * lc.rho_bar ** 2 / lc.v_bar
    kernel = kernels.get("linear_diag_step")
    for it in range(n):
        w, vd = kernel(w, vd, closed, k, lc.v_bar, lc.c4, lc.c1, lc.c2,
                       lc.coupling, refl, grid.dt, grid.dx)
        w_h[it + 1], v_h[it + 1] = w, vd
    return LinearTrajectory(
        lc=lc, grid=grid, mode=mode, gain=gain.k if gain else None,
        times=np.arange(n + 1) * grid.dt, x=x,
        rho_dev=w_h - lc.coupling * v_h, v_dev=v_h)


@dataclass
class TransportHistory:
    """Output of the scalar damped-transport subsystem run."""

    times: np.ndarray
    x: np.ndarray
    snap_times: np.ndarray
    snapshots: np.ndarray
    trace_x: np.ndarray
    traces: np.ndarray


def simulate_linear_speed_subsystem(gain: ControlGain, lc: LinearCoeffs,
                                    grid: Grid, x1: float, signal,
                                    record_x=(), snap_stride=1
                                    ) -> TransportHistory:
    """Drive the closed-loop speed subsystem by a signal injected at x1.

    The subsystem is v_t - c4 v_x = -k v with characteristics moving
    upstream at c4, so the injected time series acts as boundary data for
    the region left of x1.  Stepping is first-order upwind for the
    transport composed with the exact decay factor exp(-k dt); the CFL
    number c4 dt / dx must not exceed one.
    """
    nu = lc.c4 * grid.dt / grid.dx
    if nu > 1.0 + 1e-12:
        raise CFLError(f"subsystem CFL {nu:.3f} exceeds 1")
    x = grid.cell_centers()
    if not (0.0 < x1 <= grid.N * grid.dx):
        raise ValidationError("x1 outside the domain")
    inj = min(grid.N - 1, max(0, int(round(x1 / grid.dx - 0.5))))
    sig = np.asarray(signal, dtype=float)
    rec = np.asarray([min(grid.N - 1, max(0, int(round(xx / grid.dx - 0.5))))
                      for xx in record_x], dtype=np.int64)
    decay = math.exp(-gain.k * grid.dt)
    kernel = kernels.get("transport_run")
    traces, snaps = kernel(sig, grid.N, inj, nu, decay, rec,
                           int(snap_stride))
    n_steps = sig.shape[0] - 1
    times = np.arange(n_steps + 1) * grid.dt
    snap_times = times[::snap_stride][:snaps.shape[0]]
    return TransportHistory(times=times, x=x, snap_times=snap_times,
                            snapshots=snaps, trace_x=x[rec] if rec.size else
                            np.empty(0), traces=traces)
