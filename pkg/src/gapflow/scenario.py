"""Scenario ingestion: YAML files with per-field units, defaults from the
nominal parameter set.

An empty file (or missing sections) yields the full nominal experiment:
Table-style parameters, 10 m / 0.1 s grid over 350 s, the cosine initial
density perturbation with flow-consistent speed, open-loop mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import yaml

from .controller import ControlGain
from .errors import ValidationError
from .metrics import FuelCoeffs
from .model import (Equilibrium, ModelParams, TrafficState, equilibrium,
                    in_region_omega, nominal_params)
from .solver import Grid, initial_cosine, initial_equilibrium
from .units import parse_quantity

_PARAM_DIMS = {
    "q_in": "flow", "D": "length", "L": "length", "alpha": None,
    "tau_acc": "time", "tau_m": "time", "h_m": "time",
    "h_acc_bar": "time", "v_f": "speed", "h_min": "time",
    "h_max": "time", "rho_min": "density",
}

_KNOWN_OUTPUTS = ("trajectory", "metrics", "analysis", "plots")


@dataclass
class InitialSpec:
    kind: str = "cosine"
    amplitude: float = 0.01   # veh/m
    waves: int = 4
    path: str | None = None


@dataclass
class Scenario:
    """Validated experiment description, all values SI."""

    params: ModelParams
    grid: Grid
    initial: InitialSpec
    mode: str = "open"
    gain: float = 0.25
    outputs: tuple = ("trajectory",)
    fuel: FuelCoeffs = field(default_factory=FuelCoeffs.default)
    source_text: str = ""

    def control_gain(self) -> ControlGain:
        return ControlGain(self.gain)

    def build_initial(self, eq: Equilibrium) -> TrafficState:
        spec = self.initial
        if spec.kind == "equilibrium":
            state = initial_equilibrium(self.params, eq, self.grid)
        elif spec.kind == "cosine":
            state = initial_cosine(self.params, eq, self.grid,
                                   amplitude=spec.amplitude,
                                   waves=spec.waves)
        elif spec.kind == "file":
            state = _load_initial_file(spec.path, self.grid)
        else:
            raise ValidationError(f"unknown initial kind {spec.kind!r}")
        ok = in_region_omega(state.rho, state.v,
                             np.full(self.grid.N, self.params.h_acc_bar),
                             self.params)
        if not np.all(ok):
            raise ValidationError(
                "initial condition leaves the admissible region at cell "
                f"{int(np.argmin(ok))}")
        return state


def _load_initial_file(path, grid: Grid) -> TrafficState:
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    if data.ndim != 2 or data.shape[1] < 3:
        raise ValidationError("initial file needs columns x,rho,v")
    if data.shape[0] != grid.N:
        raise ValidationError(
            f"initial file has {data.shape[0]} rows, grid has {grid.N}")
    return TrafficState(x=data[:, 0], rho=data[:, 1], v=data[:, 2], t=0.0)


def _section(raw, name):
    sec = raw.get(name, {})
    if sec is None:
        sec = {}
    if not isinstance(sec, dict):
        raise ValidationError(f"section {name!r} must be a mapping")
    return sec


def scenario_from_dict(raw: dict, source_text: str = "") -> Scenario:
    """Build and validate a Scenario from parsed YAML content."""
    raw = raw or {}
    unknown = set(raw) - {"params", "grid", "initial", "mode", "gain",
                          "outputs", "fuel"}
    if unknown:
        raise ValidationError(f"unknown scenario keys: {sorted(unknown)}")

    psec = _section(raw, "params")
    overrides = {}
    for key, value in psec.items():
        if key not in _PARAM_DIMS:
            raise ValidationError(f"params.{key}: unknown parameter")
        dim = _PARAM_DIMS[key]
        overrides[key] = parse_quantity(value, expect=dim,
                                        field=f"params.{key}")
    if "h_min" in overrides and "rho_min" not in overrides:
        # h_min pins rho_min through the validity relation; drop the
        # nominal rho_min so the derived value wins
        base = dict(q_in=1200.0 / 3600.0, D=1000.0, L=5.0, alpha=0.15,
                    tau_acc=2.0, tau_m=60.0, h_m=1.0, h_acc_bar=1.5,
                    v_f=100.0 / 3.6, h_max=2.2)
        base.update(overrides)
        params = ModelParams(**base)
    else:
        params = nominal_params(**overrides)

    gsec = _section(raw, "grid")
    dx = parse_quantity(gsec.get("dx", 10.0), "length", "grid.dx")
    dt = parse_quantity(gsec.get("dt", 0.1), "time", "grid.dt")
    horizon = parse_quantity(gsec.get("T", 350.0), "time", "grid.T")
    grid = Grid.for_params(params, dx=dx, dt=dt, T=horizon,
                           cfl_max=float(gsec.get("cfl_max", 0.9)),
                           extrapolation_order=int(
                               gsec.get("extrapolation_order", 0)))

    isec = _section(raw, "initial")
    initial = InitialSpec(
        kind=str(isec.get("kind", "cosine")),
        amplitude=parse_quantity(isec.get("amplitude", 0.01), "density",
                                 "initial.amplitude"),
        waves=int(isec.get("waves", 4)),
        path=isec.get("path"))

    mode = str(raw.get("mode", "open"))
    if mode not in ("open", "closed"):
        raise ValidationError(f"mode must be open or closed, got {mode!r}")
    gain = parse_quantity(raw.get("gain", 0.25), "rate", "gain")
    if gain <= 0.0:
        raise ValidationError("gain must be positive")

    outputs = raw.get("outputs", ["trajectory"])
    if isinstance(outputs, str):
        outputs = [outputs]
    for out in outputs:
        if out not in _KNOWN_OUTPUTS:
            raise ValidationError(f"unknown output kind {out!r}")

    fsec = _section(raw, "fuel")
    default_fuel = FuelCoeffs.default()
    fuel = FuelCoeffs(
        b0=float(fsec.get("b0", default_fuel.b0)),
        b1=float(fsec.get("b1", default_fuel.b1)),
        b3=float(fsec.get("b3", default_fuel.b3)),
        b4=float(fsec.get("b4", default_fuel.b4)))

    scenario = Scenario(params=params, grid=grid, initial=initial,
                        mode=mode, gain=gain, outputs=tuple(outputs),
                        fuel=fuel, source_text=source_text)
    equilibrium(params)  # fail fast if the operating point is infeasible
    return scenario


def load_scenario(path) -> Scenario:
    """Parse and validate a scenario file; empty file = nominal setup."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ValidationError(f"cannot read scenario: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ValidationError(f"scenario parse error: {exc}") from exc
    if raw is not None and not isinstance(raw, dict):
        raise ValidationError("scenario top level must be a mapping")
    return scenario_from_dict(raw, source_text=text)
