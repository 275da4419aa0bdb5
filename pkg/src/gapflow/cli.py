"""Command-line surface: scenario-driven experiments, persistence, and
plot-data emission.

Subcommands:
  simulate         run one scenario, export the trajectory
  analyze          run the stability certificates, emit analysis.json
  metrics          performance indices of one run
  compare          open vs closed runs plus the improvement report
  reproduce-paper  the full nominal pipeline into one directory

All file writes are whole-file atomic (write temp, rename).  Exit codes:
0 success, 2 validation error, 3 solver failure, 4 certificate violation.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__, kernels
from .analysis import (certify_decay, empirical_convective_check,
                       find_unstable_root, gaussian_pulse, lyapunov_gains,
                       theorem1_envelope)
from .controller import ControlGain, feedback_law, uniform_control
from .errors import (CertificateError, GapflowError, SolverError,
                     ValidationError)
from .linearization import linear_coeffs
from .metrics import compare as compare_metrics
from .metrics import comfort_index, fuel_index, ttt_index
from .model import char_speeds, equilibrium
from .scenario import Scenario, load_scenario, scenario_from_dict
from .solver import Trajectory, simulate, simulate_linear

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SOLVER = 3
EXIT_CERTIFICATE = 4


# ---------------------------------------------------------------------------
# persistence helpers
# ---------------------------------------------------------------------------

def _atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path, payload):
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _fmt(value):
    return format(float(value), ".17g")


def export_trajectory(traj: Trajectory, path, stride: int = 1):
    """Write the trajectory as CSV, time-major, 17 significant digits.

    Columns: t,x,rho,v,h_acc,lambda1,lambda2 (SI units); ``stride``
    subsamples the time axis.
    """
    p = traj.params
    x = traj.x
    lines = ["t,x,rho,v,h_acc,lambda1,lambda2"]
    for i in range(0, traj.times.size, stride):
        lam1, lam2 = char_speeds(traj.rho[i], traj.v[i], traj.h_acc[i], p)
        t = traj.times[i]
        for j in range(x.size):
            lines.append(",".join((
                _fmt(t), _fmt(x[j]), _fmt(traj.rho[i, j]),
                _fmt(traj.v[i, j]), _fmt(traj.h_acc[i, j]),
                _fmt(lam1[j]), _fmt(lam2[j]))))
    _atomic_write(path, "\n".join(lines) + "\n")
    return path


def read_trajectory_csv(path):
    """Columns of an exported trajectory as a dict of arrays."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    names = ("t", "x", "rho", "v", "h_acc", "lambda1", "lambda2")
    if data.size == 0:
        return {n: np.empty(0) for n in names}
    return {n: data[:, j] for j, n in enumerate(names)}


def emit_plot_data(traj: Trajectory, kind: str, path, stride: int = 10,
                   eq=None):
    """Plotting-tool-agnostic columnar data for the standard figures.

    surface       x,t,rho and x,t,v triples (two value columns)
    timeseries    t, sup-norm of the speed deviation
    control-field x,t,h_acc triples
    """
    if kind == "surface":
        header = "x,t,rho,v"
    elif kind == "timeseries":
        header = "t,v_dev_supnorm"
    elif kind == "control-field":
        header = "x,t,h_acc"
    else:
        raise ValidationError(f"unknown plot kind {kind!r}")
    lines = [header]
    n_samples = traj.times.size
    if n_samples:
        x = traj.x
        if kind == "timeseries":
            if eq is None:
                eq = equilibrium(traj.params)
            sup = traj.v_dev_supnorm(eq)
            for i in range(0, n_samples, stride):
                lines.append(f"{_fmt(traj.times[i])},{_fmt(sup[i])}")
        else:
            for i in range(0, n_samples, stride):
                t = traj.times[i]
                for j in range(x.size):
                    if kind == "surface":
                        lines.append(",".join((
                            _fmt(x[j]), _fmt(t), _fmt(traj.rho[i, j]),
                            _fmt(traj.v[i, j]))))
                    else:
                        lines.append(",".join((
                            _fmt(x[j]), _fmt(t), _fmt(traj.h_acc[i, j]))))
    _atomic_write(path, "\n".join(lines) + "\n")
    return path


@dataclass
class RunArtifacts:
    """Paths of everything a run produced."""

    out_dir: str
    trajectory: dict = field(default_factory=dict)
    reports: dict = field(default_factory=dict)
    plots: dict = field(default_factory=dict)
    manifest: str = ""


def _write_manifest(out_dir, scenario: Scenario, elapsed, extra=None):
    payload = {
        "package_version": __version__,
        "backend": kernels.active_name(),
        "scenario_sha256": hashlib.sha256(
            scenario.source_text.encode()).hexdigest(),
        "grid": {"N": scenario.grid.N, "dx": scenario.grid.dx,
                 "dt": scenario.grid.dt, "T": scenario.grid.T},
        "mode": scenario.mode,
        "gain": scenario.gain,
        "elapsed_s": elapsed,
    }
    payload.update(extra or {})
    path = os.path.join(out_dir, "manifest.json")
    _write_json(path, payload)
    return path


# ---------------------------------------------------------------------------
# orchestration
# ---------------------------------------------------------------------------

def _run_mode(scenario: Scenario, mode: str) -> Trajectory:
    eq = equilibrium(scenario.params)
    lc = linear_coeffs(scenario.params, eq)
    initial = scenario.build_initial(eq)
    gain = scenario.control_gain() if mode == "closed" else None
    return simulate(scenario.params, scenario.grid, initial, mode=mode,
                    gain=gain, eq=eq, lc=lc)


def run(scenario: Scenario, out_dir, stride: int = 1) -> RunArtifacts:
    """Execute the scenario and persist the requested artifacts."""
    os.makedirs(out_dir, exist_ok=True)
    art = RunArtifacts(out_dir=out_dir)
    start = time.perf_counter()
    traj = _run_mode(scenario, scenario.mode)
    csv_path = os.path.join(out_dir, f"trajectory_{scenario.mode}.csv")
    export_trajectory(traj, csv_path, stride=stride)
    art.trajectory[scenario.mode] = csv_path
    if "plots" in scenario.outputs:
        eq = equilibrium(scenario.params)
        for kind, name in (("surface", "surface.csv"),
                           ("timeseries", "supnorm.csv"),
                           ("control-field", "control.csv")):
            path = os.path.join(out_dir, f"{scenario.mode}_{name}")
            emit_plot_data(traj, kind, path, eq=eq)
            art.plots[f"{scenario.mode}_{kind}"] = path
    art.manifest = _write_manifest(out_dir, scenario,
                                   time.perf_counter() - start)
    return art


def run_compare(scenario: Scenario, out_dir, stride: int = 1
                ) -> RunArtifacts:
    """Open- and closed-loop runs plus the improvement report."""
    os.makedirs(out_dir, exist_ok=True)
    art = RunArtifacts(out_dir=out_dir)
    start = time.perf_counter()
    open_traj = _run_mode(scenario, "open")
    closed_traj = _run_mode(scenario, "closed")
    for mode, traj in (("open", open_traj), ("closed", closed_traj)):
        path = os.path.join(out_dir, f"trajectory_{mode}.csv")
        export_trajectory(traj, path, stride=stride)
        art.trajectory[mode] = path
    report = compare_metrics(open_traj, closed_traj, scenario.fuel)
    path = os.path.join(out_dir, "table2.json")
    _write_json(path, report.to_dict())
    art.reports["table2"] = path
    art.manifest = _write_manifest(out_dir, scenario,
                                   time.perf_counter() - start,
                                   extra={"comparison": "open-vs-closed"})
    return art


def run_analysis(scenario: Scenario, out_dir) -> tuple:
    """All certificates on the scenario's operating point.

    Returns (artifacts, all_passed).
    """
    os.makedirs(out_dir, exist_ok=True)
    art = RunArtifacts(out_dir=out_dir)
    start = time.perf_counter()
    p = scenario.params
    eq = equilibrium(p)
    lc = linear_coeffs(p, eq)
    gain = scenario.control_gain()

    spectral = find_unstable_root(lc)
    spectral_ok = spectral.sigma_star > 0 and spectral.residual <= 1e-10

    initial = scenario.build_initial(eq)
    rho_dev0 = initial.rho - eq.rho_bar
    v_dev0 = initial.v - eq.v_bar
    closed = simulate_linear(lc, scenario.grid, rho_dev0, v_dev0,
                             mode="closed", gain=gain)
    open_lin = simulate_linear(lc, scenario.grid, rho_dev0, v_dev0,
                               mode="open")
    gains = lyapunov_gains(gain, lc)
    cert_closed = certify_decay(closed, gains, gain)
    cert_open = certify_decay(open_lin, gains, gain)
    lyap_ok = cert_closed.holds and not cert_open.holds

    fit_hi = min(200.0, 0.8 * scenario.grid.T)
    envelope = theorem1_envelope(closed, gains, gain,
                                 fit_window=(5.0, fit_hi))
    envelope_ok = envelope.rate_weighted >= 0.8 * gain.k / 2.0

    x1 = 0.9 * p.D
    stations = [0.4 * p.D, 0.65 * p.D]
    pulse = gaussian_pulse(0.3, 60.0, 10.0)
    conv = empirical_convective_check(pulse, x1, stations, 2, gain, lc,
                                      duration=x1 / lc.c4 + 140.0)
    conv_ok = all(c.relative_error <= 0.05 and c.gradient_inequality_holds
                  for c in conv)

    payload = {
        "spectral": {
            "sigma_star": spectral.sigma_star,
            "bracket": list(spectral.bracket),
            "residual": spectral.residual,
            "passed": spectral_ok,
        },
        "lyapunov": {
            "p": cert_closed.p,
            "gains": {"k1": gains.k1, "k2": gains.k2,
                      "k3": gains.k3, "k4": gains.k4},
            "closed_loop_violations": cert_closed.decay_violations,
            "open_loop_violations": cert_open.decay_violations,
            "tol": cert_closed.tol,
            "passed": lyap_ok,
        },
        "envelope": {
            "rate_weighted": envelope.rate_weighted,
            "rate_unweighted": envelope.rate_unweighted,
            "required_rate": 0.8 * gain.k / 2.0,
            "bound_violations": envelope.bound_violations,
            "passed": envelope_ok,
        },
        "convective": {
            "x1": x1,
            "checks": [{"x2": c.x2,
                        "predicted": c.predicted_ratio,
                        "measured": c.measured_ratio,
                        "gradient_holds": c.gradient_inequality_holds}
                       for c in conv],
            "passed": conv_ok,
        },
        "all_passed": spectral_ok and lyap_ok and envelope_ok and conv_ok,
    }
    path = os.path.join(out_dir, "analysis.json")
    _write_json(path, payload)
    art.reports["analysis"] = path
    art.manifest = _write_manifest(out_dir, scenario,
                                   time.perf_counter() - start,
                                   extra={"analysis": True})
    return art, payload["all_passed"]


def run_metrics(scenario: Scenario, out_dir) -> RunArtifacts:
    """Indices of the scenario's single run."""
    os.makedirs(out_dir, exist_ok=True)
    art = RunArtifacts(out_dir=out_dir)
    start = time.perf_counter()
    traj = _run_mode(scenario, scenario.mode)
    payload = {
        "mode": scenario.mode,
        "J_fuel1": fuel_index(traj, scenario.fuel),
        "J_comfort": comfort_index(traj),
        "J_TTT": ttt_index(traj),
    }
    path = os.path.join(out_dir, "metrics.json")
    _write_json(path, payload)
    art.reports["metrics"] = path
    art.manifest = _write_manifest(out_dir, scenario,
                                   time.perf_counter() - start)
    return art


def seed_check() -> bool:
    """Fast invariant suite: equilibrium residuals, control cancellation,
    mass balance, and steady-state preservation on a short run."""
    from .model import nominal_params, TrafficState
    from .solver import Grid, initial_equilibrium

    ok = True

    def check(name, cond):
        nonlocal ok
        print(f"{'PASS' if cond else 'FAIL'}  {name}")
        ok = ok and bool(cond)

    p = nominal_params()
    eq = equilibrium(p)
    check("equilibrium flow relation",
          abs(eq.rho_bar * eq.v_bar - p.q_in) <= 1e-12 * p.q_in)
    check("equilibrium gap relation",
          abs(1.0 / eq.rho_bar - p.L - eq.h_mix_bar * eq.v_bar)
          <= 1e-12 / eq.rho_bar)
    lc = linear_coeffs(p, eq)
    check("diagonalization identity c2 = c1 h_mix rho^2",
          abs(lc.c2 - lc.c1 * lc.coupling) <= 1e-12 * lc.c2)

    grid = Grid.for_params(p, T=5.0)
    x = grid.cell_centers()
    rng = np.random.default_rng(7)
    rho_dev = 0.005 * rng.standard_normal(grid.N)
    v_dev = 0.05 * rng.standard_normal(grid.N)
    state = TrafficState(x=x, rho=eq.rho_bar + rho_dev,
                         v=eq.v_bar + v_dev)
    gain = ControlGain(0.25)
    control = feedback_law(state, eq, lc, gain, p)
    unsat = ~control.saturated
    resid = (-lc.c1 * rho_dev - lc.c2 * v_dev
             - lc.c3 * (control.h_acc - eq.h_acc_bar) + gain.k * v_dev)
    check("control law cancellation (unsaturated cells)",
          np.max(np.abs(resid[unsat])) <= 1e-12)

    traj = simulate(p, grid, initial_equilibrium(p, eq, grid), mode="open")
    check("mass balance residual <= 1e-10",
          float(traj.diagnostics["mass_residual"].max()) <= 1e-10)
    drift = np.abs(traj.rho[-1] - eq.rho_bar).max() / eq.rho_bar
    check("equilibrium fixed point drift <= 1e-10", drift <= 1e-10)
    return ok


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _load(args) -> Scenario:
    if args.scenario:
        scenario = load_scenario(args.scenario)
    else:
        scenario = scenario_from_dict({}, source_text="")
    if getattr(args, "mode", None):
        scenario.mode = args.mode
    if getattr(args, "gain", None) is not None:
        if args.gain <= 0:
            raise ValidationError("gain must be positive")
        scenario.gain = args.gain
    return scenario


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gapflow",
        description="Simulation and stability toolkit for time-gap "
                    "actuated freeway traffic control")
    parser.add_argument("--seed-check", action="store_true",
                        help="run the quick invariant suite and exit")
    sub = parser.add_subparsers(dest="command")
    for name, description in (
            ("simulate", "run one scenario and export the trajectory"),
            ("analyze", "run stability certificates"),
            ("metrics", "performance indices of one run"),
            ("compare", "open vs closed comparison report"),
            ("reproduce-paper", "full nominal pipeline")):
        cmd = sub.add_parser(name, help=description)
        cmd.add_argument("--scenario", help="scenario YAML (default: "
                                            "nominal built-in)")
        cmd.add_argument("--out", required=True, help="output directory")
        cmd.add_argument("--stride", type=int, default=1,
                         help="time subsampling for CSV export")
        if name == "simulate":
            cmd.add_argument("--mode", choices=("open", "closed"))
            cmd.add_argument("--gain", type=float,
                             help="feedback gain k [1/s]")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.seed_check:
            return EXIT_OK if seed_check() else EXIT_CERTIFICATE
        if not args.command:
            parser.print_help()
            return EXIT_VALIDATION
        scenario = _load(args)
        if args.command == "simulate":
            art = run(scenario, args.out, stride=args.stride)
            print(f"trajectory: {art.trajectory[scenario.mode]}")
        elif args.command == "metrics":
            art = run_metrics(scenario, args.out)
            print(f"metrics: {art.reports['metrics']}")
        elif args.command == "compare":
            art = run_compare(scenario, args.out, stride=args.stride)
            print(f"report: {art.reports['table2']}")
        elif args.command == "analyze":
            art, passed = run_analysis(scenario, args.out)
            print(f"analysis: {art.reports['analysis']}")
            if not passed:
                raise CertificateError("one or more certificates failed; "
                                       "see analysis.json")
        elif args.command == "reproduce-paper":
            scenario.outputs = tuple(set(scenario.outputs) | {"plots"})
            art = run_compare(scenario, args.out, stride=args.stride)
            for mode in ("open", "closed"):
                traj = _run_mode(scenario, mode)
                eq = equilibrium(scenario.params)
                for kind, name in (("surface", "surface.csv"),
                                   ("timeseries", "supnorm.csv"),
                                   ("control-field", "control.csv")):
                    emit_plot_data(traj, kind,
                                   os.path.join(args.out,
                                                f"{mode}_{name}"), eq=eq)
            _, passed = run_analysis(scenario, args.out)
            print(f"artifacts in {args.out}")
            if not passed:
                raise CertificateError("certificate failure; "
                                       "see analysis.json")
        return EXIT_OK
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except CertificateError as exc:
        print(f"certificate violation: {exc}", file=sys.stderr)
        return EXIT_CERTIFICATE
    except GapflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
