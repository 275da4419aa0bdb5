"""Hot numeric kernels with two interchangeable backends.

Every kernel exists twice: a scalar-loop version compiled with numba's
``@njit`` and a vectorized pure-numpy fallback.  The active backend is
chosen at import from the ``GAPFLOW_BACKEND`` environment variable
("numba" or "numpy"; default numba when importable) and can be switched at
runtime with :func:`use` — the benchmark and the cross-backend agreement
tests rely on that.

Kernels are deliberately dumb: plain float64 arrays and scalars in, arrays
and status codes out.  All physics bookkeeping (errors, diagnostics,
objects) lives in the calling modules.

Status codes: 0 ok, 2 state outside the admissible region (bad cell index
returned alongside).
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        return wrap


OK = 0
REGION_EXIT = 2


# ---------------------------------------------------------------------------
# nonlinear finite-volume step (centered flux + local-speed diffusion)
# ---------------------------------------------------------------------------

def _nonlinear_step_numpy(rho, v, h, rho_g, v_g, h_g, v_out_next,
                          q_in, dt, dx, L, tau_mix, alpha, a_gap, b_gap,
                          rho_min, v_f):
    n = rho.shape[0]
    rho_max = 1.0 / L
    hm = a_gap * h / (alpha + b_gap * h)
    lam2 = v - 1.0 / (hm * rho)

    bad = ~((rho > rho_min) & (rho < rho_max) & (v > 0.0) & (v < v_f)
            & (lam2 < 0.0))
    if bad.any():
        idx = int(np.argmax(bad))
        return rho, v, 0.0, REGION_EXIT, idx

    hm_g = a_gap * h_g / (alpha + b_gap * h_g)
    lam2_g = v_g - 1.0 / (hm_g * rho_g)
    amax = np.maximum(np.abs(v), np.abs(lam2))
    a_g = max(abs(v_g), abs(lam2_g))
    cfl = max(float(amax.max()), a_g) * dt / dx

    q = rho * v
    a_if = np.maximum(amax[:-1], amax[1:])
    flux = np.empty(n + 1)
    flux[0] = q_in
    flux[1:n] = 0.5 * (q[:-1] + q[1:]) - 0.5 * a_if * (rho[1:] - rho[:-1])
    flux[n] = q[n - 1]
    rho_new = rho - (dt / dx) * (flux[1:] - flux[:-1])

    src = ((1.0 / hm) * (1.0 / rho - L) - v) / tau_mix
    a_left = np.empty(n)
    a_left[0] = max(a_g, amax[0])
    a_left[1:] = a_if
    v_left = np.empty(n)
    v_left[0] = v_g
    v_left[1:] = v[:-1]

    v_new = np.empty(n)
    adv = -lam2[:-1] * (v[1:] - v_left[:-1]) / (2.0 * dx)
    dif = (a_if * (v[1:] - v[:-1])
           - a_left[:-1] * (v[:-1] - v_left[:-1])) / (2.0 * dx)
    v_new[:-1] = v[:-1] + dt * (adv + dif + src[:-1])
    v_new[n - 1] = v_out_next
    return rho_new, v_new, cfl, OK, -1


@njit(cache=True)
def _nonlinear_step_numba(rho, v, h, rho_g, v_g, h_g, v_out_next,
                          q_in, dt, dx, L, tau_mix, alpha, a_gap, b_gap,
                          rho_min, v_f):
    n = rho.shape[0]
    rho_max = 1.0 / L
    hm = np.empty(n)
    lam2 = np.empty(n)
    amax = np.empty(n)
    for i in range(n):
        hm[i] = a_gap * h[i] / (alpha + b_gap * h[i])
        lam2[i] = v[i] - 1.0 / (hm[i] * rho[i])
        if not (rho_min < rho[i] < rho_max and 0.0 < v[i] < v_f
                and lam2[i] < 0.0):
            return rho, v, 0.0, REGION_EXIT, i
        amax[i] = max(abs(v[i]), abs(lam2[i]))

    hm_g = a_gap * h_g / (alpha + b_gap * h_g)
    lam2_g = v_g - 1.0 / (hm_g * rho_g)
    a_g = max(abs(v_g), abs(lam2_g))
    top = a_g
    for i in range(n):
        if amax[i] > top:
            top = amax[i]
    cfl = top * dt / dx

    flux = np.empty(n + 1)
    flux[0] = q_in
    for i in range(n - 1):
        a_if = max(amax[i], amax[i + 1])
        flux[i + 1] = 0.5 * (rho[i] * v[i] + rho[i + 1] * v[i + 1]) \
            - 0.5 * a_if * (rho[i + 1] - rho[i])
    flux[n] = rho[n - 1] * v[n - 1]

    rho_new = np.empty(n)
    v_new = np.empty(n)
    for i in range(n):
        rho_new[i] = rho[i] - (dt / dx) * (flux[i + 1] - flux[i])
    for i in range(n - 1):
        vl = v_g if i == 0 else v[i - 1]
        al = max(a_g, amax[0]) if i == 0 else max(amax[i - 1], amax[i])
        ar = max(amax[i], amax[i + 1])
        adv = -lam2[i] * (v[i + 1] - vl) / (2.0 * dx)
        dif = (ar * (v[i + 1] - v[i]) - al * (v[i] - vl)) / (2.0 * dx)
        src = ((1.0 / hm[i]) * (1.0 / rho[i] - L) - v[i]) / tau_mix
        v_new[i] = v[i] + dt * (adv + dif + src)
    v_new[n - 1] = v_out_next
    return rho_new, v_new, cfl, OK, -1


# ---------------------------------------------------------------------------
# linearized dynamics in diagonal variables (w, v_dev),
# w = rho_dev + h_mix_bar rho_bar^2 v_dev
# ---------------------------------------------------------------------------

def _linear_diag_step_numpy(w, vd, closed, k, v_bar, c4, c1, c2,
                            coupling, refl, dt, dx):
    n = w.shape[0]
    w_g = -refl * vd[0]
    dwx = np.empty(n)
    dwx[0] = (w[0] - w_g) / dx
    dwx[1:] = (w[1:] - w[:-1]) / dx
    dvf = (vd[1:] - vd[:-1]) / dx

    if closed:
        w_t = -v_bar * dwx - k * coupling * vd
        vd_t = np.empty(n)
        vd_t[:-1] = c4 * dvf - k * vd[:-1]
        vd_t[n - 1] = -k * vd[n - 1]
    else:
        w_t = -v_bar * dwx - c2 * w
        vd_t = np.empty(n)
        vd_t[:-1] = c4 * dvf - c1 * w[:-1]
        vd_t[n - 1] = -c1 * w[n - 1]
    return w + dt * w_t, vd + dt * vd_t


@njit(cache=True)
def _linear_diag_step_numba(w, vd, closed, k, v_bar, c4, c1, c2,
                            coupling, refl, dt, dx):
    n = w.shape[0]
    w_new = np.empty(n)
    vd_new = np.empty(n)
    w_g = -refl * vd[0]
    for i in range(n):
        wl = w_g if i == 0 else w[i - 1]
        dwx = (w[i] - wl) / dx
        if closed:
            w_t = -v_bar * dwx - k * coupling * vd[i]
            if i < n - 1:
                vd_t = c4 * (vd[i + 1] - vd[i]) / dx - k * vd[i]
            else:
                vd_t = -k * vd[i]
        else:
            w_t = -v_bar * dwx - c2 * w[i]
            if i < n - 1:
                vd_t = c4 * (vd[i + 1] - vd[i]) / dx - c1 * w[i]
            else:
                vd_t = -c1 * w[i]
        w_new[i] = w[i] + dt * w_t
        vd_new[i] = vd[i] + dt * vd_t
    return w_new, vd_new


# ---------------------------------------------------------------------------
# scalar damped transport (the closed-loop speed subsystem), full run
# ---------------------------------------------------------------------------

def _transport_run_numpy(signal, n_cells, inj, nu, decay, rec_idx,
                         snap_stride):
    n_steps = signal.shape[0] - 1
    u = np.zeros(n_cells)
    u[inj] = signal[0]
    traces = np.empty((n_steps + 1, rec_idx.shape[0]))
    traces[0] = u[rec_idx]
    n_snaps = n_steps // snap_stride + 1
    snaps = np.empty((n_snaps, n_cells))
    snaps[0] = u
    for n in range(n_steps):
        u[inj] = signal[n]
        upd = decay * (u[:inj] + nu * (u[1:inj + 1] - u[:inj]))
        u[:inj] = upd
        u[inj] = signal[n + 1]
        traces[n + 1] = u[rec_idx]
        if (n + 1) % snap_stride == 0:
            snaps[(n + 1) // snap_stride] = u
    return traces, snaps


@njit(cache=True)
def _transport_run_numba(signal, n_cells, inj, nu, decay, rec_idx,
                         snap_stride):
    n_steps = signal.shape[0] - 1
    u = np.zeros(n_cells)
    u[inj] = signal[0]
    traces = np.empty((n_steps + 1, rec_idx.shape[0]))
    for j in range(rec_idx.shape[0]):
        traces[0, j] = u[rec_idx[j]]
    n_snaps = n_steps // snap_stride + 1
    snaps = np.empty((n_snaps, n_cells))
    snaps[0] = u
    scratch = np.empty(n_cells)
    for n in range(n_steps):
        u[inj] = signal[n]
        for i in range(inj):
            scratch[i] = decay * (u[i] + nu * (u[i + 1] - u[i]))
        for i in range(inj):
            u[i] = scratch[i]
        u[inj] = signal[n + 1]
        for j in range(rec_idx.shape[0]):
            traces[n + 1, j] = u[rec_idx[j]]
        if (n + 1) % snap_stride == 0:
            snaps[(n + 1) // snap_stride] = u
    return traces, snaps


# ---------------------------------------------------------------------------
# backend registry
# ---------------------------------------------------------------------------

_IMPLS = {
    "numpy": {
        "nonlinear_step": _nonlinear_step_numpy,
        "linear_diag_step": _linear_diag_step_numpy,
        "transport_run": _transport_run_numpy,
    },
}
if HAVE_NUMBA:
    _IMPLS["numba"] = {
        "nonlinear_step": _nonlinear_step_numba,
        "linear_diag_step": _linear_diag_step_numba,
        "transport_run": _transport_run_numba,
    }

_DEFAULT = "numba" if HAVE_NUMBA else "numpy"
_active = os.environ.get("GAPFLOW_BACKEND", _DEFAULT).lower()
if _active not in _IMPLS:
    import warnings

    warnings.warn(f"GAPFLOW_BACKEND={_active!r} unavailable, "
                  f"falling back to {_DEFAULT}")
    _active = _DEFAULT


def use(name: str):
    """Switch the active backend ('numba' or 'numpy')."""
    global _active
    if name not in _IMPLS:
        raise ValueError(f"unknown backend {name!r}; "
                         f"have {sorted(_IMPLS)}")
    _active = name


def active_name() -> str:
    return _active


def available() -> list:
    return sorted(_IMPLS)


def get(kernel: str):
    """Resolve a kernel by name on the active backend."""
    return _IMPLS[_active][kernel]


def warmup():
    """Trigger JIT compilation of every kernel on tiny inputs."""
    impl = _IMPLS[_active]
    rho = np.full(4, 0.1)
    v = np.full(4, 3.0)
    h = np.full(4, 1.5)
    impl["nonlinear_step"](rho, v, h, 0.1, 3.0, 1.5, 3.0, 1.0 / 3.0,
                           0.1, 10.0, 5.0, 11.2, 0.15, 0.178, 0.0283,
                           0.037, 27.8)
    impl["linear_diag_step"](np.zeros(4), np.zeros(4), True, 0.25, 3.1,
                             3.6, 5.6, 0.089, 0.016, 0.0186, 0.1, 10.0)
    impl["transport_run"](np.zeros(3), 4, 2, 0.9, 0.99,
                          np.array([0, 1], dtype=np.int64), 2)
