"""In-domain time-gap feedback law and its saturation policy.

The law is static full-state feedback: per cell,

    h_acc = h_acc_bar + ( -c1 rho_dev + (k - c2) v_dev ) / c3,

clamped to the practical interval [h_min, h_max].  At the linear level the
unsaturated law cancels the density coupling in the speed equation and
leaves a damped transport equation with decay rate k.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoControlAuthorityError, ValidationError
from .linearization import LinearCoeffs
from .model import Equilibrium, ModelParams, TrafficState, mixed_time_constant, v_mix


@dataclass(frozen=True)
class ControlGain:
    """Feedback gain k [1/s]; any positive value is admissible."""

    k: float

    def __post_init__(self):
        if self.k <= 0.0:
            raise ValidationError("gain k must be positive")


@dataclass
class ControlField:
    """Applied ACC time-gap per cell with per-cell saturation flags."""

    h_acc: np.ndarray
    saturated: np.ndarray

    @property
    def saturation_fraction(self):
        return float(np.mean(self.saturated))


def uniform_control(n: int, h_acc: float) -> ControlField:
    """Open-loop control field: constant ACC gap, never saturated."""
    return ControlField(h_acc=np.full(n, float(h_acc)),
                        saturated=np.zeros(n, dtype=bool))


def feedback_law(state: TrafficState, eq: Equilibrium, lc: LinearCoeffs,
                 gain: ControlGain, p: ModelParams) -> ControlField:
    """Evaluate the feedback law on the solver grid and clamp it.

    Raises when alpha = 0: with no ACC vehicles the law has no authority
    and silently returning the steady gap would make closed-loop claims
    vacuous.
    """
    if lc.c3 <= 0.0:
        raise NoControlAuthorityError(
            "feedback needs alpha > 0 (c3 = 0 has no actuation authority)")
    rho_dev = state.rho - eq.rho_bar
    v_dev = state.v - eq.v_bar
    raw = eq.h_acc_bar + (-lc.c1 * rho_dev + (gain.k - lc.c2) * v_dev) / lc.c3
    clamped = np.clip(raw, p.h_min, p.h_max)
    return ControlField(h_acc=clamped, saturated=raw != clamped)


def closed_loop_source(state: TrafficState, control: ControlField,
                       p: ModelParams):
    """Relaxation source of the speed equation under the applied control.

    (V_mix(rho, h_acc) - v) / tau_mix, cellwise [m/s^2].
    """
    tau = mixed_time_constant(p)
    return (v_mix(state.rho, control.h_acc, p) - state.v) / tau
