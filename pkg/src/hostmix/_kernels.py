"""Dormand-Prince 5(4) kernels shared by every integration in the package.

This file is imported twice: normally as ``hostmix._kernels`` (numba-compiled,
cached on disk) and once more by :mod:`hostmix.integrate` with
``PURE_PYTHON = True`` injected, which leaves every function as plain Python
so it accepts arbitrary callables and array shapes.
"""

import math

import numba
import numpy as np

PURE_PYTHON = globals().get("PURE_PYTHON", False)

OK = 0
STEP_UNDERFLOW = 1
ESCAPE = 2
NONFINITE = 3
EVENT_OVERFLOW = 4

# Dormand-Prince coefficients (Hairer, Norsett & Wanner, table 5.2)
C2, C3, C4, C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0
A21 = 1.0 / 5.0
A31, A32 = 3.0 / 40.0, 9.0 / 40.0
A41, A42, A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
A51, A52, A53, A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
A61, A62, A63, A64, A65 = 9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0
B1, B3, B4, B5, B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
E1 = 71.0 / 57600.0
E3 = -71.0 / 16695.0
E4 = 71.0 / 1920.0
E5 = -17253.0 / 339200.0
E6 = 22.0 / 525.0
E7 = -1.0 / 40.0

SAFETY = 0.9
PI_BETA = 0.04
PI_ALPHA = 0.2 - 0.75 * PI_BETA
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
INITIAL_STEP = 1e-3
CLASSIFY_CHUNK = 0.25

FIELD_SIGNATURE = numba.types.float64[::1](numba.types.float64[::1], numba.types.float64[::1])
FIELD_TYPE = numba.types.FunctionType(FIELD_SIGNATURE)


def _signatures():
    """Explicit types of the Python-facing kernels.

    Taking the field as a first-class function type (rather than as a numba
    dispatcher) keeps compiled code independent of the field's identity, so
    the on-disk cache is reused across processes.
    """
    t = numba.types
    f8, i8 = t.float64, t.int64
    vec, ivec = f8[::1], i8[::1]
    mat, cube = f8[:, ::1], f8[:, :, ::1]
    fn = FIELD_TYPE
    status2 = t.UniTuple(i8, 2)
    rng = numba.typeof(np.random.Generator(np.random.Philox(0)))
    return {
        "advance": status2(fn, mat, mat, f8, vec, f8, f8, f8, f8, f8),
        "flow_on_grid": i8(fn, mat, mat, vec, cube, f8, f8, f8, f8),
        "nearest_label": i8(vec, mat, f8),
        "classify": status2(fn, mat, vec, mat, f8, f8, f8, f8, f8, f8),
        "classify_many": i8(fn, mat, mat, mat, f8, f8, f8, f8, f8, f8, ivec),
        "simulate": status2(fn, mat, mat, vec, ivec, ivec, f8, f8, vec, f8, rng, vec, ivec, ivec, t.boolean,
                            f8, f8, f8, f8, cube, vec, ivec, ivec, cube, cube),
    }


if PURE_PYTHON:
    def jit(func):
        return func

    def entry(name):
        return jit
else:
    jit = numba.njit(nogil=True, cache=True)
    _SIGNATURES = _signatures()

    def entry(name):
        return numba.njit(_SIGNATURES[name], nogil=True, cache=True)

inf = np.inf


@jit
def rhs(field, params, y):
    out = np.empty_like(y)
    for h in range(y.shape[0]):
        out[h, :] = field(y[h], params[h])
    return out

@jit
def dopri_step(field, params, y, k1, h):
    k2 = rhs(field, params, y + h * (A21 * k1))
    k3 = rhs(field, params, y + h * (A31 * k1 + A32 * k2))
    k4 = rhs(field, params, y + h * (A41 * k1 + A42 * k2 + A43 * k3))
    k5 = rhs(field, params, y + h * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4))
    k6 = rhs(field, params, y + h * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5))
    y_new = y + h * (B1 * k1 + B3 * k3 + B4 * k4 + B5 * k5 + B6 * k6)
    k7 = rhs(field, params, y_new)
    err = h * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7)
    return y_new, k7, err

@entry("advance")
def advance(field, params, y, duration, hstate, rtol, atol, max_step, lower, bound):
    """Integrate ``y`` in place over ``duration``.

    ``hstate`` carries ``[proposed step, previous error]`` between calls so
    consecutive segments of one trajectory share the step controller.
    Returns ``(status, accepted_steps)``.
    """
    if duration <= 0.0:
        return OK, 0
    k1 = rhs(field, params, y)
    if not np.all(np.isfinite(k1)):
        return NONFINITE, 0
    h = hstate[0]
    err_prev = hstate[1]
    h_min = 1e-13 * max(1.0, duration)
    t = 0.0
    steps = 0
    while True:
        remaining = duration - t
        hh = min(h, max_step)
        last = False
        if hh >= remaining:
            hh = remaining
            last = True
        y_new, k7, err = dopri_step(field, params, y, k1, hh)
        if not (np.all(np.isfinite(k7)) and np.all(np.isfinite(y_new))):
            h = 0.25 * hh
            if h < h_min:
                return NONFINITE, steps
            continue
        sc = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        e = math.sqrt(np.mean((err / sc) ** 2))
        if e <= 1.0:
            steps += 1
            y[:, :] = y_new
            k1 = k7
            fac = SAFETY * max(e, 1e-10) ** (-PI_ALPHA) * err_prev ** PI_BETA
            fac = min(max(fac, MIN_FACTOR), MAX_FACTOR)
            err_prev = max(e, 1e-4)
            if last:
                # keep the untruncated proposal for the next segment
                if hh >= min(h, max_step):
                    h = hh * fac
                break
            h = hh * fac
            t += hh
        else:
            fac = max(MIN_FACTOR, SAFETY * e ** (-PI_ALPHA))
            h = hh * fac
            if h < h_min:
                return STEP_UNDERFLOW, steps
    hstate[0] = h
    hstate[1] = err_prev
    tol = 10.0 * atol
    if np.any(y < lower - tol) or np.any(y > bound + tol):
        return ESCAPE, steps
    y[:, :] = np.minimum(np.maximum(y, lower), bound)
    return OK, steps

@entry("flow_on_grid")
def flow_on_grid(field, params, y, times, out, rtol, atol, max_step, bound):
    """Record ``y`` at each of ``times`` (first must be 0) into ``out``."""
    hstate = np.array([INITIAL_STEP, 1e-4])
    t = 0.0
    for k in range(times.shape[0]):
        status, _ = advance(field, params, y, times[k] - t, hstate, rtol, atol, max_step, 0.0, bound)
        if status != OK:
            return status
        t = times[k]
        out[k] = y
    return OK

@entry("nearest_label")
def nearest_label(x, attractors, radius):
    """1-based label of the unique attractor within ``radius`` of x, else 0."""
    label = 0
    for a in range(attractors.shape[0]):
        d = math.sqrt(np.sum((x - attractors[a]) ** 2))
        if d <= radius:
            if label != 0:
                return 0
            label = a + 1
    return label

@entry("classify")
def classify(field, params, x, attractors, radius, max_time, rtol, atol, max_step, bound):
    """Return ``(status, label)``; label 0 means unresolved."""
    y = x.copy().reshape(1, x.shape[0])
    label = nearest_label(y[0], attractors, radius)
    if label != 0:
        return OK, label
    hstate = np.array([INITIAL_STEP, 1e-4])
    t = 0.0
    while t < max_time:
        chunk = min(CLASSIFY_CHUNK, max_time - t)
        status, _ = advance(field, params, y, chunk, hstate, rtol, atol, max_step, 0.0, bound)
        if status != OK:
            return status, 0
        t += chunk
        label = nearest_label(y[0], attractors, radius)
        if label != 0:
            return OK, label
    return OK, 0

@entry("classify_many")
def classify_many(field, params, points, attractors, radius, max_time, rtol, atol, max_step,
                  bound, labels):
    for p in range(points.shape[0]):
        status, label = classify(field, params, points[p], attractors, radius, max_time,
                                 rtol, atol, max_step, bound)
        if status != OK:
            return status
        labels[p] = label
    return OK

@entry("simulate")
def simulate(field, params, y, cdf, pair_i, pair_j, lam_tot, gamma, sample_times, horizon,
             rng, sched_t, sched_i, sched_j, use_schedule, rtol, atol, max_step, bound,
             states_out, ev_t, ev_i, ev_j, pre_out, post_out):
    """Event-driven run; returns ``(status, event_count)``.

    Waiting times are ``-log(u) / lam_tot`` with ``u = 1 - rng.random()``;
    the interacting pair is the first edge whose cumulative relative rate
    exceeds a second uniform draw.
    """
    record = pre_out.shape[0] > 0
    cap = ev_t.shape[0]
    hstate = np.array([INITIAL_STEP, 1e-4])
    keep = 1.0 - gamma
    t = 0.0
    states_out[0] = y
    k = 1
    n_ev = 0
    s_idx = 0
    if use_schedule:
        next_ev = sched_t[0] if sched_t.shape[0] > 0 else inf
    elif lam_tot > 0.0:
        next_ev = -math.log(1.0 - rng.random()) / lam_tot
    else:
        next_ev = inf
    n_samples = sample_times.shape[0]
    while k < n_samples:
        ts = sample_times[k]
        if next_ev <= ts and next_ev <= horizon:
            status, _ = advance(field, params, y, next_ev - t, hstate, rtol, atol, max_step, 0.0, bound)
            if status != OK:
                return status, n_ev
            t = next_ev
            if use_schedule:
                a = sched_i[s_idx]
                b = sched_j[s_idx]
            else:
                idx = np.searchsorted(cdf, rng.random(), side="right")
                if idx >= cdf.shape[0]:
                    idx = cdf.shape[0] - 1
                a = pair_i[idx]
                b = pair_j[idx]
            if n_ev >= cap:
                return EVENT_OVERFLOW, n_ev
            if record:
                pre_out[n_ev] = y
            xa = y[a].copy()
            xb = y[b].copy()
            y[a] = keep * xa + gamma * xb
            y[b] = keep * xb + gamma * xa
            if record:
                post_out[n_ev] = y
            ev_t[n_ev] = t
            ev_i[n_ev] = a
            ev_j[n_ev] = b
            n_ev += 1
            if use_schedule:
                s_idx += 1
                next_ev = sched_t[s_idx] if s_idx < sched_t.shape[0] else inf
            else:
                next_ev = t + (-math.log(1.0 - rng.random()) / lam_tot)
        else:
            status, _ = advance(field, params, y, ts - t, hstate, rtol, atol, max_step, 0.0, bound)
            if status != OK:
                return status, n_ev
            t = ts
            states_out[k] = y
            k += 1
    return OK, n_ev
