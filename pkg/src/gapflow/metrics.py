"""Performance indices quantifying the control benefit.

Three indices integrated over the space-time window of a trajectory:
an instantaneous per-vehicle fuel-rate model weighted by density, a
comfort index built from material acceleration and jerk, and total travel
time (the density integral).  Quadrature is midpoint over the
finite-volume cells in space (the rule under which the cell sum *is* the
integral over [0, D]) and trapezoid in time, consistent with the
first-order solver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .solver import Trajectory


@dataclass(frozen=True)
class FuelCoeffs:
    """Coefficients of the fuel-rate polynomial max(0, b0 + b1 v + b3 v^3 + b4 v a).

    The shipped defaults are derived from a resistance-power budget for a
    compact passenger car (idle rate, rolling resistance, aerodynamic
    drag, inertia) at an effective tank-to-wheel yield of 1.33e-7 l/J;
    output is liters per second per vehicle.  They are configuration, not
    physics: the improvement percentages in the comparison report depend
    on them, so any published coefficient set can be substituted via the
    scenario file.
    """

    b0: float  # idle rate [l/s]; 0.8 l/h
    b1: float  # rolling resistance [l/m]; ~177 N
    b3: float  # aerodynamic drag [l s^2/m^3]; ~0.41 kg/m
    b4: float  # inertial term [l s^2/m^2]; ~1500 kg

    @classmethod
    def default(cls):
        return cls(b0=2.2e-4, b1=2.35e-5, b3=5.4e-8, b4=2.0e-4)


@dataclass
class MetricsReport:
    """Indices for an open/closed trajectory pair plus improvements.

    Improvements are (open - closed) / open * 100.  ``j_fuel2`` (an
    external discretized-model metric) is reserved but never computed.
    """

    fuel_open: float
    fuel_closed: float
    comfort_open: float
    comfort_closed: float
    ttt_open: float
    ttt_closed: float
    improvement_fuel1_pct: float
    improvement_comfort_pct: float
    improvement_ttt_pct: float
    improvement_fuel2_pct: float | None = None

    def to_dict(self):
        return {
            "J_fuel1": {"open": self.fuel_open, "closed": self.fuel_closed,
                        "improvement_pct": self.improvement_fuel1_pct},
            "J_fuel2": {"improvement_pct": self.improvement_fuel2_pct,
                        "note": "not computed (external model)"},
            "J_comfort": {"open": self.comfort_open,
                          "closed": self.comfort_closed,
                          "improvement_pct": self.improvement_comfort_pct},
            "J_TTT": {"open": self.ttt_open, "closed": self.ttt_closed,
                      "improvement_pct": self.improvement_ttt_pct},
        }


def acceleration_field(traj: Trajectory):
    """Material acceleration a = v_t + v v_x and its time derivative.

    Central differences inside the window, one-sided at the edges.
    """
    if traj.times.size < 3:
        raise ValidationError("need at least 3 time samples")
    dt, dx = traj.grid.dt, traj.grid.dx
    v_t = np.gradient(traj.v, dt, axis=0)
    v_x = np.gradient(traj.v, dx, axis=1)
    a = v_t + traj.v * v_x
    a_t = np.gradient(a, dt, axis=0)
    return a, a_t


def _space_time_integral(f, traj: Trajectory):
    return float(np.trapezoid(f.sum(axis=1) * traj.grid.dx,
                              dx=traj.grid.dt))


def fuel_index(traj: Trajectory, coeffs: FuelCoeffs) -> float:
    """Density-weighted fuel consumption over the window [l]."""
    if coeffs is None:
        raise ValidationError("fuel coefficients not configured")
    a, _ = acceleration_field(traj)
    rate = np.maximum(0.0, coeffs.b0 + coeffs.b1 * traj.v
                      + coeffs.b3 * traj.v ** 3 + coeffs.b4 * traj.v * a)
    return _space_time_integral(rate * traj.rho, traj)


def comfort_index(traj: Trajectory) -> float:
    """Density-weighted acceleration + jerk energy over the window."""
    a, a_t = acceleration_field(traj)
    return _space_time_integral((a * a + a_t * a_t) * traj.rho, traj)


def ttt_index(traj: Trajectory) -> float:
    """Total travel time: the density integral [veh s]."""
    return _space_time_integral(traj.rho, traj)


def _improvement(open_value, closed_value):
    return (open_value - closed_value) / open_value * 100.0


def compare(open_traj: Trajectory, closed_traj: Trajectory,
            coeffs: FuelCoeffs) -> MetricsReport:
    """All indices for both trajectories plus percentage improvements."""
    if open_traj.grid != closed_traj.grid:
        raise ValidationError("trajectories must share the same grid")
    fo, fc = fuel_index(open_traj, coeffs), fuel_index(closed_traj, coeffs)
    co, cc = comfort_index(open_traj), comfort_index(closed_traj)
    to, tc = ttt_index(open_traj), ttt_index(closed_traj)
    return MetricsReport(
        fuel_open=fo, fuel_closed=fc,
        comfort_open=co, comfort_closed=cc,
        ttt_open=to, ttt_closed=tc,
        improvement_fuel1_pct=_improvement(fo, fc),
        improvement_comfort_pct=_improvement(co, cc),
        improvement_ttt_pct=_improvement(to, tc))
