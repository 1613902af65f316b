# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled RK4 stepping for networks of built-in zoo models.

Mirrors the generic loop in integrate.py for the oscillator and pendulum
models: control recomputed at every stage, outputs/controls/goal recorded
on the sampling grid.  Modes: 0 open loop, 1 cyclic alignment, 2 tracking
(single subsystem).
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, isfinite

cnp.import_array()

cdef int KIND_OSC = 0
cdef int KIND_PEND = 1


cdef inline double _h_of(long kind, const double* par, double q, double p) noexcept nogil:
    cdef double w2, ml2, mgl
    if kind == 0:
        w2 = par[0] * par[0]
        return 0.5 * (w2 * q * q + p * p)
    ml2 = par[0] * par[1] * par[1]
    mgl = par[0] * par[2] * par[1]
    return p * p / (2.0 * ml2) + mgl * (1.0 - cos(q))


cdef inline double _lie_of(long kind, const double* par, double q, double p) noexcept nogil:
    # grad(h) . g with g = (0, 1)
    if kind == 0:
        return p
    return p / (par[0] * par[1] * par[1])


cdef inline void _f_of(long kind, const double* par, double q, double p,
                       double* fq, double* fp) noexcept nogil:
    cdef double ml2, mgl
    if kind == 0:
        fq[0] = p
        fp[0] = -par[0] * par[0] * q
    else:
        ml2 = par[0] * par[1] * par[1]
        mgl = par[0] * par[2] * par[1]
        fq[0] = p / ml2
        fp[0] = -mgl * sin(q)


cdef inline int _stage(int n, const long* kinds, const double* params,
                       const double* xs, int mode, double gamma,
                       double target, double sat,
                       double* y, double* lie, double* u,
                       double* kout) noexcept nogil:
    """Stage derivative; fills y, lie, u, kout; returns 1 if any clip."""
    cdef int i, clipped = 0
    cdef double err, ui, fq, fp
    for i in range(n):
        y[i] = _h_of(kinds[i], params + 3 * i, xs[2 * i], xs[2 * i + 1])
        lie[i] = _lie_of(kinds[i], params + 3 * i, xs[2 * i], xs[2 * i + 1])
    for i in range(n):
        if mode == 1:
            err = 2.0 * y[i] - y[(i - 1 + n) % n] - y[(i + 1) % n]
            ui = -gamma * (2.0 * lie[i]) * err
        elif mode == 2:
            ui = -gamma * lie[i] * (y[i] - target)
        else:
            ui = 0.0
        if sat > 0.0:
            if ui > sat:
                ui = sat
                clipped = 1
            elif ui < -sat:
                ui = -sat
                clipped = 1
        u[i] = ui
        _f_of(kinds[i], params + 3 * i, xs[2 * i], xs[2 * i + 1], &fq, &fp)
        kout[2 * i] = fq
        kout[2 * i + 1] = fp + ui  # g = (0, 1)
    return clipped


cdef inline double _goal(int n, int mode, const double* y, double target) noexcept nogil:
    cdef int i
    cdef double q = 0.0, d
    if mode == 2:
        d = y[0] - target
        return 0.5 * d * d
    if n < 2:
        return 0.0
    for i in range(n):
        d = y[i] - y[(i + 1) % n]
        q += d * d
    return q


cdef inline double _rate(int n, int mode, const double* y, const double* lie,
                         double gamma, double target) noexcept nogil:
    cdef int i
    cdef double total = 0.0, err, l2
    if mode == 1:
        for i in range(n):
            err = 2.0 * y[i] - y[(i - 1 + n) % n] - y[(i + 1) % n]
            l2 = 2.0 * lie[i]
            total += l2 * l2 * err * err
        return -gamma * total
    if mode == 2:
        err = y[0] - target
        return -gamma * lie[0] * lie[0] * err * err
    return 0.0


def run_rk4(long[::1] kinds, double[:, ::1] params, double[:, ::1] x0,
            int mode, double gamma, double target, double sat,
            double h, long n_steps, long record_every):
    cdef int n = kinds.shape[0]
    cdef long k, rec = 0
    cdef int i, j, clip_acc = 0, clip_now
    cdef long n_rec = 1 + n_steps // record_every
    if n_steps % record_every != 0:
        n_rec += 1

    times_a = np.empty(n_rec)
    states_a = np.empty((n_rec, n, 2))
    outputs_a = np.empty((n_rec, n))
    controls_a = np.empty((n_rec, n))
    goal_a = np.empty(n_rec)
    rate_a = np.empty(n_rec)
    clip_a = np.zeros(n_rec, dtype=np.uint8)

    cdef double[::1] times = times_a
    cdef double[:, :, ::1] states = states_a
    cdef double[:, ::1] outputs = outputs_a
    cdef double[:, ::1] controls = controls_a
    cdef double[::1] goal = goal_a
    cdef double[::1] rate = rate_a
    cdef unsigned char[::1] clips = clip_a

    scratch = np.empty(14 * n)
    cdef double[::1] w = scratch
    cdef double* x = &w[0]
    cdef double* xs = &w[2 * n]
    cdef double* k1 = &w[4 * n]
    cdef double* k2 = &w[6 * n]
    cdef double* k3 = &w[8 * n]
    cdef double* k4 = &w[10 * n]
    cdef double* y = &w[12 * n]
    cdef double* lie = &w[13 * n]
    u_scr = np.empty(n)
    cdef double[::1] uv = u_scr
    cdef double* u = &uv[0]
    cdef const long* kp = &kinds[0]
    cdef const double* pp = &params[0, 0]

    for i in range(n):
        x[2 * i] = x0[i, 0]
        x[2 * i + 1] = x0[i, 1]

    # record initial state
    clip_now = _stage(n, kp, pp, x, mode, gamma, target, sat, y, lie, u, k1)
    _record(n, mode, gamma, target, 0.0, x, y, lie, u, clip_now,
            times, states, outputs, controls, goal, rate, clips, 0)
    rec = 1

    cdef long fail = -1
    with nogil:
        for k in range(n_steps):
            clip_acc |= _stage(n, kp, pp, x, mode, gamma, target, sat, y, lie, u, k1)
            for i in range(2 * n):
                xs[i] = x[i] + 0.5 * h * k1[i]
            clip_acc |= _stage(n, kp, pp, xs, mode, gamma, target, sat, y, lie, u, k2)
            for i in range(2 * n):
                xs[i] = x[i] + 0.5 * h * k2[i]
            clip_acc |= _stage(n, kp, pp, xs, mode, gamma, target, sat, y, lie, u, k3)
            for i in range(2 * n):
                xs[i] = x[i] + h * k3[i]
            clip_acc |= _stage(n, kp, pp, xs, mode, gamma, target, sat, y, lie, u, k4)
            for i in range(2 * n):
                x[i] = x[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                if not isfinite(x[i]):
                    fail = k + 1
                    break
            if fail >= 0:
                break
            if (k + 1) % record_every == 0 or (k + 1) == n_steps:
                clip_now = _stage(n, kp, pp, x, mode, gamma, target, sat, y, lie, u, k1)
                _record(n, mode, gamma, target, (k + 1) * h, x, y, lie, u,
                        clip_acc | clip_now,
                        times, states, outputs, controls, goal, rate, clips, rec)
                rec += 1
                clip_acc = 0
    if fail >= 0:
        raise ValueError(f"non-finite state at t={fail * h:g}")
    return times_a, states_a, outputs_a, controls_a, goal_a, rate_a, clip_a


cdef void _record(int n, int mode, double gamma, double target, double t,
                  const double* x, const double* y, const double* lie,
                  const double* u, int clipped,
                  double[::1] times, double[:, :, ::1] states,
                  double[:, ::1] outputs, double[:, ::1] controls,
                  double[::1] goal, double[::1] rate,
                  unsigned char[::1] clips, long rec) noexcept nogil:
    cdef int i
    times[rec] = t
    for i in range(n):
        states[rec, i, 0] = x[2 * i]
        states[rec, i, 1] = x[2 * i + 1]
        outputs[rec, i] = y[i]
        controls[rec, i] = u[i]
    goal[rec] = _goal(n, mode, y, target)
    rate[rec] = _rate(n, mode, y, lie, gamma, target)
    clips[rec] = 1 if clipped else 0
