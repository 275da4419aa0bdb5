"""gapflow: simulation and analysis toolkit for time-gap actuated
feedback control of congested freeway traffic.

Core pipeline: build :class:`ModelParams`, compute the
:func:`equilibrium`, linearize with :func:`linear_coeffs`, simulate the
nonlinear system open- or closed-loop with :func:`simulate`, and quantify
the benefit with :func:`metrics.compare`.  Stability certificates live in
:mod:`gapflow.analysis`; the CLI in :mod:`gapflow.cli`.
"""

__version__ = "0.1.0"

from .controller import (ControlField, ControlGain, closed_loop_source,
                         feedback_law, uniform_control)
from .errors import (AnalysisError, BoundaryError, CertificateError,
                     CFLError, GapflowError, InfeasibleEquilibriumError,
                     NoControlAuthorityError, RegionExitError, SolverError,
                     UnitError, ValidationError)
from .linearization import (LinearCoeffs, from_riemann, linear_coeffs,
                            linearized_rhs, to_riemann)
from .model import (Equilibrium, ModelParams, TrafficState, char_speeds,
                    equilibrium, equilibrium_profile_ode_rhs,
                    fundamental_diagram_bounds, in_region_omega,
                    mixed_time_constant, mixed_time_gap, nominal_params,
                    v_mix, v_mix_drho)
from .solver import (Grid, LinearTrajectory, Trajectory, apply_boundaries,
                     initial_cosine, initial_equilibrium, simulate,
                     simulate_linear, simulate_linear_speed_subsystem,
                     step_nonlinear)

__all__ = [
    "__version__",
    "ControlField", "ControlGain", "closed_loop_source", "feedback_law",
    "uniform_control",
    "AnalysisError", "BoundaryError", "CertificateError", "CFLError",
    "GapflowError", "InfeasibleEquilibriumError", "NoControlAuthorityError",
    "RegionExitError", "SolverError", "UnitError", "ValidationError",
    "LinearCoeffs", "from_riemann", "linear_coeffs", "linearized_rhs",
    "to_riemann",
    "Equilibrium", "ModelParams", "TrafficState", "char_speeds",
    "equilibrium", "equilibrium_profile_ode_rhs",
    "fundamental_diagram_bounds", "in_region_omega", "mixed_time_constant",
    "mixed_time_gap", "nominal_params", "v_mix", "v_mix_drho",
    "Grid", "LinearTrajectory", "Trajectory", "apply_boundaries",
    "initial_cosine", "initial_equilibrium", "simulate", "simulate_linear",
    "simulate_linear_speed_subsystem", "step_nonlinear",
]
