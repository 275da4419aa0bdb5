"""Physical model: parameters, fundamental diagrams, mixed-traffic algebra,
characteristic speeds, admissible-region checks, and the uniform congested
equilibrium.

The model describes a freeway stretch carrying a mix of manual vehicles
(time-gap ``h_m``, relaxation time ``tau_m``) and ACC-equipped vehicles
whose time-gap ``h_acc`` is the control input.  Both vehicle classes follow
a constant-time-gap speed law ``V(rho) = (1/h) (1/rho - L)`` on the
congested branch ``rho_min < rho < 1/L``; the mix enters through an
effective time-gap and an effective relaxation time.

All quantities are SI: m, s, veh/m, veh/s.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleEquilibriumError, ValidationError


@dataclass(frozen=True)
class ModelParams:
    """Physical constants of the mixed-traffic model plus numerical bounds.

    Attributes:
        q_in: constant external inflow [veh/s]
        D: stretch length [m]
        L: average effective vehicle length [m]
        alpha: ACC penetration rate [-], in [0, 1]
        tau_acc: ACC relaxation time constant [s]
        tau_m: manual relaxation time constant [s]
        h_m: manual time-gap [s]
        h_acc_bar: steady-state ACC time-gap [s]
        v_f: free-flow (maximum) speed [m/s]
        h_min, h_max: practical ACC time-gap bounds [s]
        rho_min: smallest density where the congested branch is valid
            [veh/m]; tied to h_min via rho_min = 1/(L + v_f h_min)

    Validation is eager: a constructed instance satisfies every invariant,
    so downstream code never re-checks.  Exactly one of ``h_min`` /
    ``rho_min`` must be supplied; the other is derived.
    """

    q_in: float
    D: float
    L: float
    alpha: float
    tau_acc: float
    tau_m: float
    h_m: float
    h_acc_bar: float
    v_f: float
    h_max: float
    h_min: float = field(default=None)
    rho_min: float = field(default=None)

    def __post_init__(self):
        if self.h_min is None and self.rho_min is None:
            raise ValidationError("give h_min or rho_min")
        if self.h_min is None:
            object.__setattr__(self, "h_min",
                               (1.0 / self.rho_min - self.L) / self.v_f)
        if self.rho_min is None:
            object.__setattr__(self, "rho_min",
                               1.0 / (self.L + self.v_f * self.h_min))
        self._validate()

    def _validate(self):
        p = self
        checks = [
            (p.L > 0, "L must be positive"),
            (p.D > 0, "D must be positive"),
            (0.0 <= p.alpha <= 1.0, "alpha must lie in [0, 1]"),
            (p.tau_acc > 0, "tau_acc must be positive"),
            (p.tau_m > 0, "tau_m must be positive"),
            (p.v_f > 0, "v_f must be positive"),
            (p.h_min > 0, "h_min must be positive"),
            (p.h_min <= p.h_max, "h_min must not exceed h_max"),
            (p.h_min <= p.h_acc_bar <= p.h_max,
             "h_acc_bar must lie in [h_min, h_max]"),
            (p.h_min <= p.h_m <= p.h_max, "h_m must lie in [h_min, h_max]"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValidationError(msg)
        if abs(p.rho_min * (p.L + p.v_f * p.h_min) - 1.0) > 1e-9:
            raise ValidationError(
                "rho_min inconsistent with 1/(L + v_f h_min)")
        q_bound = p.v_f * p.h_min / (p.h_max * (p.L + p.v_f * p.h_min))
        if not 0.0 < p.q_in < q_bound:
            raise ValidationError(
                f"q_in = {p.q_in:.6g} veh/s outside feasible range "
                f"(0, {q_bound:.6g}) veh/s for these time-gaps")

    @property
    def rho_max(self):
        """Jam density 1/L [veh/m]."""
        return 1.0 / self.L

    @property
    def gap_ratio(self):
        """tau_acc / tau_m, the weight ratio in the mixed time-gap."""
        return self.tau_acc / self.tau_m


def nominal_params(**overrides):
    """Nominal parameter set used throughout the experiments.

    q_in 1200 veh/h, rho_min 37 veh/km, tau_m 60 s, tau_acc 2 s,
    alpha 0.15, L 5 m, h_m 1 s, D 1000 m, steady ACC gap 1.5 s,
    v_f 100 km/h, practical gap ceiling 2.2 s.
    """
    base = dict(q_in=1200.0 / 3600.0, D=1000.0, L=5.0, alpha=0.15,
                tau_acc=2.0, tau_m=60.0, h_m=1.0, h_acc_bar=1.5,
                v_f=100.0 / 3.6, h_max=2.2, rho_min=0.037)
    base.update(overrides)
    return ModelParams(**base)


@dataclass
class TrafficState:
    """Discretized (rho, v) fields on a uniform cell grid at one instant."""

    x: np.ndarray
    rho: np.ndarray
    v: np.ndarray
    t: float = 0.0

    def copy(self):
        return TrafficState(self.x, self.rho.copy(), self.v.copy(), self.t)

    def validate(self, p: ModelParams):
        """Raise unless the state lies strictly inside the congested region."""
        if np.any(self.rho <= p.rho_min) or np.any(self.rho >= p.rho_max):
            raise ValidationError("density outside (rho_min, 1/L)")
        if np.any(self.v <= 0.0) or np.any(self.v >= p.v_f):
            raise ValidationError("speed outside (0, v_f)")


@dataclass(frozen=True)
class Equilibrium:
    """Uniform steady state of the controlled stretch."""

    rho_bar: float
    v_bar: float
    h_mix_bar: float
    h_acc_bar: float


def mixed_time_gap(h_acc, p: ModelParams):
    """Effective time-gap of the vehicle mix for ACC gap ``h_acc``.

    Harmonic-type blend of the two class gaps weighted by penetration and
    the relaxation-time ratio; lies between min and max of (h_acc, h_m).
    Accepts scalars or arrays.
    """
    h = np.asarray(h_acc, dtype=float)
    if np.any(h <= 0.0):
        raise ValidationError("h_acc must be positive")
    r = p.gap_ratio
    num = (p.alpha + (1.0 - p.alpha) * r) * h
    den = p.alpha + (1.0 - p.alpha) * r * h / p.h_m
    out = num / den
    return float(out) if np.isscalar(h_acc) else out


def mixed_time_constant(p: ModelParams):
    """Effective relaxation time of the mix [s]."""
    return 1.0 / (p.alpha / p.tau_acc + (1.0 - p.alpha) / p.tau_m)


def v_mix(rho, h_acc, p: ModelParams):
    """Mixed-traffic equilibrium speed at density ``rho`` [m/s].

    Only the congested branch is modelled; densities outside
    (rho_min, 1/L) are rejected.
    """
    r = np.asarray(rho, dtype=float)
    if np.any(r <= p.rho_min) or np.any(r >= p.rho_max):
        raise ValidationError("rho outside the congested branch "
                              "(rho_min, 1/L)")
    out = (1.0 / mixed_time_gap(h_acc, p)) * (1.0 / r - p.L)
    return float(out) if np.isscalar(rho) else out


def v_mix_drho(rho, h_acc, p: ModelParams):
    """Partial derivative of the mixed speed law w.r.t. density."""
    r = np.asarray(rho, dtype=float)
    out = -1.0 / (mixed_time_gap(h_acc, p) * r * r)
    return float(out) if np.isscalar(rho) else out


def fundamental_diagram_bounds(rho, p: ModelParams):
    """Envelope flows (Q at h_max, Q at h_min) for density ``rho`` [veh/s].

    Each envelope is free-flow ``v_f rho`` up to its own critical density,
    then the congested line ``(1/h)(1 - L rho)``.  Every mixed diagram with
    gaps inside [h_min, h_max] lies between the two.
    """
    r = np.asarray(rho, dtype=float)
    if np.any(r < 0.0) or np.any(r > p.rho_max):
        raise ValidationError("rho outside [0, 1/L]")

    def _envelope(h):
        crit = 1.0 / (p.L + p.v_f * h)
        return np.where(r <= crit, p.v_f * r, (1.0 / h) * (1.0 - p.L * r))

    low, high = _envelope(p.h_max), _envelope(p.h_min)
    if np.isscalar(rho):
        return float(low), float(high)
    return low, high


def char_speeds(rho, v, h_acc, p: ModelParams):
    """Characteristic speeds (lambda1, lambda2) of the quasilinear system.

    lambda1 = v carries vehicles downstream; lambda2 = v - 1/(h_mix rho)
    carries speed information, upstream whenever the state is admissible.
    """
    h_mix = mixed_time_gap(h_acc, p)
    lam1 = np.asarray(v, dtype=float)
    lam2 = lam1 - 1.0 / (h_mix * np.asarray(rho, dtype=float))
    if np.isscalar(v):
        return float(lam1), float(lam2)
    return lam1, lam2


def in_region_omega(rho, v, h_acc, p: ModelParams):
    """True where the state is inside the admissible congested region.

    Requires density on the congested branch, speed in (0, v_f), the ACC
    gap within its practical bounds, and the second characteristic moving
    upstream (lambda2 < 0).
    """
    r = np.asarray(rho, dtype=float)
    vel = np.asarray(v, dtype=float)
    h = np.asarray(h_acc, dtype=float)
    _, lam2 = char_speeds(r, vel, h_acc, p)
    ok = ((r > p.rho_min) & (r < p.rho_max)
          & (vel > 0.0) & (vel < p.v_f)
          & (h >= p.h_min) & (h <= p.h_max)
          & (lam2 < 0.0))
    return bool(ok) if np.isscalar(rho) and np.isscalar(v) else ok


def equilibrium(p: ModelParams, h_acc_bar=None) -> Equilibrium:
    """Uniform congested equilibrium for steady ACC gap ``h_acc_bar``.

    Solves flow conservation together with the mixed speed law; the
    construction is closed-form, so both defining relations hold to
    round-off.
    """
    h_acc = p.h_acc_bar if h_acc_bar is None else h_acc_bar
    h_mix_bar = mixed_time_gap(h_acc, p)
    inv_q = 1.0 / p.q_in
    if inv_q <= h_mix_bar:
        raise InfeasibleEquilibriumError(
            f"1/q_in = {inv_q:.4g} s must exceed h_mix_bar = "
            f"{h_mix_bar:.4g} s")
    v_bar = p.L / (inv_q - h_mix_bar)
    rho_bar = p.q_in / v_bar
    eq = Equilibrium(rho_bar=rho_bar, v_bar=v_bar,
                     h_mix_bar=h_mix_bar, h_acc_bar=h_acc)
    if not in_region_omega(rho_bar, v_bar, h_acc, p):
        raise InfeasibleEquilibriumError(
            "equilibrium fell outside the admissible region")
    return eq


def equilibrium_profile_ode_rhs(v, p: ModelParams, eq: Equilibrium):
    """Right-hand side dv/dx of the steady speed-profile ODE.

    Vanishes exactly at v = v_bar, confirming the uniform profile is the
    only equilibrium compatible with the boundary conditions.
    """
    if v == 0.0:
        raise ValidationError("speed-profile ODE singular at v = 0")
    tau = mixed_time_constant(p)
    return -(1.0 / tau) * (v + p.L / (eq.h_mix_bar - 1.0 / p.q_in)) / v
