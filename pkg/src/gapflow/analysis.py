"""Executable stability certificates for the linearized dynamics.

Three families of checks:

* spectral -- the open-loop characteristic function has a real positive
  root (exponential open-loop instability); located by a doubling bracket
  search plus bisection.
* Lyapunov -- the closed-loop decay certificate with the constructive
  gains.  At realistic stretch lengths the certificate's exponential
  weights reach exp(c2 D / v_bar) ~ 1e12 in the *exponent*, far beyond
  float64, so every functional here is evaluated in the log domain
  (log-sum-exp); reports carry log V.
* convective -- the closed-loop speed subsystem attenuates signals
  travelling upstream by exactly exp(-k (x1-x2)/c4) in every temporal
  p-norm; verified against a simulation of the damped transport equation
  on a dedicated fine grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .controller import ControlGain
from .errors import AnalysisError, ValidationError
from .linearization import LinearCoeffs
from .solver import Grid, LinearTrajectory, simulate_linear_speed_subsystem

_NEG_INF = float("-inf")


# ---------------------------------------------------------------------------
# spectral instability (open loop)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectralResult:
    sigma_star: float
    bracket: tuple
    residual: float


def characteristic_fn(sigma, lc: LinearCoeffs):
    """Real form of the open-loop characteristic function on sigma >= 0.

    f(sigma) = a2 sigma^2 - a1 (sigma + c2) exp(-sigma tau_char D).
    f(0) < 0 and f -> +inf, so a real positive root always exists.
    """
    s = np.asarray(sigma, dtype=float)
    out = lc.a2 * s * s - lc.a1 * (s + lc.c2) * np.exp(
        -s * lc.tau_char * lc.D)
    return float(out) if np.isscalar(sigma) else out


def find_unstable_root(lc: LinearCoeffs, sigma_cap=1e3,
                       tol=1e-14) -> SpectralResult:
    """Locate the real positive root of the characteristic function.

    Doubling search for a sign change starting from 1e-10, then bisection
    until the bracket is relatively tight.  Failure to bracket within
    (0, sigma_cap] signals broken coefficients, since existence is
    guaranteed.
    """
    f0 = characteristic_fn(0.0, lc)
    if not f0 < 0.0:
        raise AnalysisError("characteristic function not negative at 0; "
                            "coefficients violate the root-existence "
                            "precondition")
    lo, hi = 0.0, 1e-10
    while characteristic_fn(hi, lc) < 0.0:
        lo = hi
        hi *= 2.0
        if hi > sigma_cap:
            raise AnalysisError(
                f"no sign change of the characteristic function in "
                f"(0, {sigma_cap:g}]")
    bracket = (lo, hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if characteristic_fn(mid, lc) < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, hi):
            break
    sigma = 0.5 * (lo + hi)
    return SpectralResult(sigma_star=sigma, bracket=bracket,
                          residual=abs(characteristic_fn(sigma, lc)))


# ---------------------------------------------------------------------------
# Lyapunov decay certificate (closed loop)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LyapunovGains:
    """Constructive certificate gains with their intermediate constants."""

    k1: float
    k2: float
    k3: float
    k4: float
    c6: float
    c7: float
    c8: float
    c9: float


def lyapunov_gains(gain: ControlGain, lc: LinearCoeffs) -> LyapunovGains:
    """Evaluate the constructive gain formulas for feedback gain k."""
    k = gain.k
    c6 = k * math.exp(lc.c2 * lc.D / lc.v_bar) * lc.coupling \
        * (1.0 + lc.c2 / lc.v_bar)
    c7 = lc.L * lc.rho_bar ** 2 / lc.v_bar
    c8 = 2.0 * lc.L * lc.rho_bar ** 2 * lc.c4 / lc.v_bar ** 2
    c9 = 2.0 * k * lc.rho_bar ** 2 / lc.v_bar * (
        lc.h_mix_bar + lc.L / lc.v_bar + lc.L * lc.c2 / (lc.v_bar * k))
    k1 = (lc.c2 + c6 + k) / lc.v_bar
    k2 = c6 / (2.0 * lc.c4)
    k3 = max((c7 + c8 + c9) * max(lc.v_bar / lc.c4, 1.0), 1.0)
    k4 = k3 * max(lc.c4 / k, 1.0)
    return LyapunovGains(k1=k1, k2=k2, k3=k3, k4=k4,
                         c6=c6, c7=c7, c8=c8, c9=c9)


def _log_abs(a):
    with np.errstate(divide="ignore"):
        return np.log(np.abs(a))


def _lse(a, axis=None):
    """Log-sum-exp that tolerates -inf entries (empty mass -> -inf)."""
    a = np.asarray(a, dtype=float)
    mx = np.max(a, axis=axis, keepdims=True)
    safe = np.where(np.isfinite(mx), mx, 0.0)
    with np.errstate(divide="ignore"):
        s = np.log(np.sum(np.exp(a - safe), axis=axis, keepdims=True))
    res = safe + s
    if axis is None:
        return float(res.reshape(()))
    return np.squeeze(res, axis=axis)


def log_lyapunov_functional(x, z, z_x, v, v_x, v_outlet, gains: LyapunovGains,
                            p: int, D: float):
    """log V_p for one snapshot, trapezoid rule over the given nodes.

    V_p = int e^{-2 k1 p x} (z^2p + z_x^2p)
        + k3^2p int e^{2 k2 p x} (v^2p + v_x^2p)
        + k4^2p e^{2 k2 p D} v(D)^2p

    All inputs are plain arrays on common nodes ``x``; ``z`` may be given
    directly or, at extreme weights, via pre-logged magnitudes (see
    certify_decay).  Returns -inf for identically zero fields.
    """
    x = np.asarray(x, dtype=float)
    wts = np.empty(x.size)
    wts[1:-1] = 0.5 * (x[2:] - x[:-2])
    wts[0] = 0.5 * (x[1] - x[0])
    wts[-1] = 0.5 * (x[-1] - x[-2])
    lw = np.log(wts)
    terms = []
    for f in (z, z_x):
        terms.append(_lse(-2.0 * gains.k1 * p * x + 2.0 * p * _log_abs(f)
                          + lw))
    for f in (v, v_x):
        terms.append(2.0 * p * math.log(gains.k3)
                     + _lse(2.0 * gains.k2 * p * x + 2.0 * p * _log_abs(f)
                            + lw))
    v_d = abs(float(v_outlet))
    terms.append(2.0 * p * math.log(gains.k4) + 2.0 * gains.k2 * p * D
                 + (2.0 * p * math.log(v_d) if v_d > 0.0 else _NEG_INF))
    return _lse(np.asarray(terms))


def lyapunov_functional(x, z, z_x, v, v_x, v_outlet, gains: LyapunovGains,
                        p: int, D: float):
    """V_p in the linear domain; overflows to inf at extreme gain scales."""
    log_v = log_lyapunov_functional(x, z, z_x, v, v_x, v_outlet, gains, p, D)
    if log_v == _NEG_INF:
        return 0.0
    return math.exp(log_v) if log_v < 709.0 else float("inf")


@dataclass
class LyapunovReport:
    """Discrete decay-certificate outcome along a linear trajectory."""

    p: int
    gain: float
    gains: LyapunovGains
    tol: float
    sample_times: np.ndarray
    log_vp: np.ndarray
    decay_violations: int

    @property
    def holds(self):
        return self.decay_violations == 0


def _log_fields(traj: LinearTrajectory):
    """Per-sample log magnitudes of (z, z_x, v, v_x) and v(D).

    z = e^{c2 x / v_bar} w with w the well-scaled diagonal density wave,
    so log z splits exactly into the weight exponent plus log w.  Spatial
    derivatives use central differences with one-sided closures.
    """
    lc = traj.lc
    x = traj.x
    dx = x[1] - x[0]
    w = traj.w
    w_x = np.gradient(w, dx, axis=1)
    rate = lc.riemann_weight_rate
    log_z = rate * x + _log_abs(w)
    log_zx = rate * x + _log_abs(w_x + rate * w)
    v = traj.v_dev
    log_v = _log_abs(v)
    log_vx = _log_abs(np.gradient(v, dx, axis=1))
    return x, log_z, log_zx, log_v, log_vx, traj.v_dev_outlet


def certify_decay(traj: LinearTrajectory, gains: LyapunovGains,
                  gain: ControlGain, p: int = 1, tol: float = 5e-2,
                  sample_dt: float = 1.0) -> LyapunovReport:
    """Check V_p(t + dt) <= exp(-p k dt) V_p(t) (1 + tol) sample to sample.

    Samples are spaced ``sample_dt`` apart (the tolerance is granted per
    transition, so the spacing must be coarse enough that the required
    decay p k dt exceeds log(1 + tol), otherwise non-decaying trajectories
    pass vacuously).  Violations are counted, not raised.
    """
    stride = max(1, int(round(sample_dt / traj.grid.dt)))
    delta = stride * traj.grid.dt
    idx = np.arange(0, traj.times.size, stride)
    x, log_z, log_zx, log_v, log_vx, v_out = _log_fields(traj)

    wts = np.full(x.size, x[1] - x[0])
    wts[0] *= 0.5
    wts[-1] *= 0.5
    lw = np.log(wts)
    k1, k2 = gains.k1, gains.k2
    log_vp = np.empty(idx.size)
    for j, i in enumerate(idx):
        terms = [
            _lse(-2.0 * k1 * p * x + 2.0 * p * log_z[i] + lw),
            _lse(-2.0 * k1 * p * x + 2.0 * p * log_zx[i] + lw),
            2.0 * p * math.log(gains.k3)
            + _lse(2.0 * k2 * p * x + 2.0 * p * log_v[i] + lw),
            2.0 * p * math.log(gains.k3)
            + _lse(2.0 * k2 * p * x + 2.0 * p * log_vx[i] + lw),
            2.0 * p * math.log(gains.k4) + 2.0 * k2 * p * traj.lc.D
            + (2.0 * p * math.log(abs(v_out[i]))
               if v_out[i] != 0.0 else _NEG_INF),
        ]
        log_vp[j] = _lse(np.asarray(terms))

    bound = -p * gain.k * delta + math.log1p(tol)
    diffs = np.diff(log_vp)
    finite = np.isfinite(log_vp[:-1]) | np.isfinite(log_vp[1:])
    violations = int(np.sum(finite & (diffs > bound)))
    return LyapunovReport(p=p, gain=gain.k, gains=gains, tol=tol,
                          sample_times=traj.times[idx], log_vp=log_vp,
                          decay_violations=violations)


# ---------------------------------------------------------------------------
# exponential-envelope check (closed-loop decay rate)
# ---------------------------------------------------------------------------

@dataclass
class EnvelopeReport:
    """Fitted decay rates of the closed-loop linear trajectory.

    ``rate_weighted`` is the fitted exponential rate of the certificate
    composite (the p -> inf limit of the weighted norms the decay proof
    controls); ``rate_unweighted`` is the rate of the plain C1 norm of
    (rho_dev, v_dev), reported for transparency.  On long stretches the
    unweighted norm stays flat while density deviations convect out
    (travel time D / v_bar), so only the weighted composite tracks the
    theorem's exponential envelope over practical windows.
    """

    gain: float
    fit_window: tuple
    rate_weighted: float
    rate_unweighted: float
    bound_violations: int
    times: np.ndarray
    log_weighted: np.ndarray
    c1_unweighted: np.ndarray


def theorem1_envelope(traj: LinearTrajectory, gains: LyapunovGains,
                      gain: ControlGain, fit_window=(5.0, 200.0),
                      mu_window=(0.0, 5.0)) -> EnvelopeReport:
    """Fit exponential decay rates along a closed-loop linear trajectory.

    The weighted composite is
    max(e^{-k1 x}|z|) + max(e^{-k1 x}|z_x|) + k3 max(e^{k2 x}|v|)
    + k3 max(e^{k2 x}|v_x|) + k4 e^{k2 D} |v(D)| evaluated in the log
    domain.  A prefactor is fit on ``mu_window`` and the bound
    log Xi <= log mu - (k/2) t is checked beyond it.
    """
    x, log_z, log_zx, log_v, log_vx, v_out = _log_fields(traj)
    k1, k2 = gains.k1, gains.k2
    log_vd = np.where(v_out != 0.0, _log_abs(v_out), _NEG_INF)
    comps = np.stack([
        (-k1 * x + log_z).max(axis=1),
        (-k1 * x + log_zx).max(axis=1),
        math.log(gains.k3) + (k2 * x + log_v).max(axis=1),
        math.log(gains.k3) + (k2 * x + log_vx).max(axis=1),
        math.log(gains.k4) + k2 * traj.lc.D + log_vd,
    ])
    log_xi = _lse(comps, axis=0)

    dx = x[1] - x[0]
    c1_series = (np.abs(traj.rho_dev).max(axis=1)
                 + np.abs(np.gradient(traj.rho_dev, dx, axis=1)).max(axis=1)
                 + np.abs(traj.v_dev).max(axis=1)
                 + np.abs(np.gradient(traj.v_dev, dx, axis=1)).max(axis=1))

    t = traj.times
    m = (t >= fit_window[0]) & (t <= fit_window[1]) & np.isfinite(log_xi)
    if m.sum() < 2:
        raise ValidationError("fit window contains fewer than two samples")
    rate_w = -np.polyfit(t[m], log_xi[m], 1)[0]
    with np.errstate(divide="ignore"):
        log_c1 = np.log(c1_series)
    mc = m & np.isfinite(log_c1)
    rate_u = -np.polyfit(t[mc], log_c1[mc], 1)[0]

    mu_mask = (t >= mu_window[0]) & (t <= mu_window[1]) & np.isfinite(log_xi)
    log_mu = np.max(log_xi[mu_mask] + 0.5 * gain.k * t[mu_mask])
    after = t > mu_window[1]
    violations = int(np.sum(log_xi[after]
                            > log_mu - 0.5 * gain.k * t[after]))
    return EnvelopeReport(gain=gain.k, fit_window=tuple(fit_window),
                          rate_weighted=float(rate_w),
                          rate_unweighted=float(rate_u),
                          bound_violations=violations,
                          times=t, log_weighted=log_xi,
                          c1_unweighted=c1_series)


# ---------------------------------------------------------------------------
# convective (string-type) stability
# ---------------------------------------------------------------------------

def convective_gain(x1: float, x2: float, gain: ControlGain,
                    lc: LinearCoeffs) -> float:
    """Exact temporal p-norm gain between stations x1 and upstream x2."""
    if x2 > x1:
        raise ValidationError("x2 must lie upstream of x1 (x2 <= x1)")
    return math.exp(-gain.k * (x1 - x2) / lc.c4)


def temporal_norm(u, dt: float, p) -> float:
    """Temporal p-norm of a sampled signal (p in {1, 2, inf})."""
    u = np.asarray(u, dtype=float)
    if p == 1:
        return float(np.trapezoid(np.abs(u), dx=dt))
    if p == 2:
        return float(math.sqrt(np.trapezoid(u * u, dx=dt)))
    if p in (np.inf, float("inf"), "inf"):
        return float(np.abs(u).max())
    raise ValidationError(f"unsupported p-norm {p!r}")


@dataclass
class ConvectiveCheckResult:
    x1: float
    x2: float
    p_norm: object
    predicted_ratio: float
    measured_ratio: float
    gradient_ratio: float
    gradient_inequality_holds: bool

    @property
    def relative_error(self):
        return abs(self.measured_ratio / self.predicted_ratio - 1.0)


def empirical_convective_check(signal_fn, x1: float, x2, p_norm,
                               gain: ControlGain, lc: LinearCoeffs,
                               duration: float, dx: float = 0.1,
                               cfl: float = 0.9):
    """Measure the station-to-station gain of the speed subsystem.

    Runs the damped-transport simulation on a dedicated fine grid (the
    attenuation across hundreds of metres is far below what the solver's
    coarse grid can resolve), injects ``signal_fn(t)`` at x1, and compares
    temporal p-norms at the requested upstream stations against the
    analytic gain.  Gradient norms use the subsystem relation
    v_x = (v_t + k v) / c4 applied to the station traces.

    Returns one ConvectiveCheckResult, or a list when x2 is a sequence.
    """
    stations = np.atleast_1d(np.asarray(x2, dtype=float))
    if np.any(stations >= x1):
        raise ValidationError("stations must lie strictly upstream of x1")
    dt = cfl * dx / lc.c4
    n_cells = int(math.ceil(x1 / dx)) + 2
    grid = Grid(N=n_cells, dx=dx, dt=dt, T=duration, cfl_max=1.0)
    n_steps = grid.n_steps
    times = np.arange(n_steps + 1) * dt
    sig = np.asarray([signal_fn(t) for t in times], dtype=float)
    if not np.any(sig != 0.0):
        raise ValidationError("zero input signal: ratio undefined")
    hist = simulate_linear_speed_subsystem(
        gain, lc, grid, x1, sig, record_x=list(stations) + [x1],
        snap_stride=max(1, n_steps))
    in_trace = hist.traces[:, -1]
    norm_in = temporal_norm(in_trace, dt, p_norm)
    g_in = (np.gradient(in_trace, dt) + gain.k * in_trace) / lc.c4
    gnorm_in = temporal_norm(g_in, dt, p_norm)

    results = []
    for j, xx in enumerate(stations):
        out = hist.traces[:, j]
        predicted = convective_gain(x1, float(xx), gain, lc)
        measured = temporal_norm(out, dt, p_norm) / norm_in
        g_out = (np.gradient(out, dt) + gain.k * out) / lc.c4
        gnorm_out = temporal_norm(g_out, dt, p_norm)
        results.append(ConvectiveCheckResult(
            x1=x1, x2=float(xx), p_norm=p_norm,
            predicted_ratio=predicted, measured_ratio=measured,
            gradient_ratio=gnorm_out / gnorm_in,
            gradient_inequality_holds=gnorm_out < gnorm_in))
    return results[0] if np.isscalar(x2) else results


def gaussian_pulse(amplitude: float, center: float, width: float):
    """Smooth test signal for the convective checks."""
    def fn(t):
        return amplitude * math.exp(-0.5 * ((t - center) / width) ** 2)
    return fn
