"""Closed- and open-loop integration of subsystem networks.

Two explicit methods are provided: classical fixed-step RK4 and the
Dormand-Prince 5(4) embedded pair with a standard step controller.  The
control is a static state feedback, so it is recomputed at every stage
evaluation.

Networks built entirely from zoo models integrate through a compiled
kernel when the extension module is available (see :mod:`sgalign.backend`);
custom models and RK45 always take the generic Python path.  Both paths
implement the same arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Union

import numpy as np

from . import backend
from .controller import (
    ControllerKind,
    ControllerSpec,
    _alignment_terms,
    _clip,
    goal_value,
    tracking_control,
)
from .dynamics import (
    NetworkSystem,
    SubsystemModel,
    as_state,
    eval_output,
    lie_input_output,
)
from .errors import ConfigError, NumericDomainError, ParameterError, StiffnessError

System = Union[NetworkSystem, SubsystemModel]


@dataclass(frozen=True)
class IntegratorSpec:
    """Method, step (initial step for RK45), tolerances and horizon."""

    method: str = "rk4"
    step: float = 1e-3
    horizon: float = 200.0
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10

    def __post_init__(self):
        if self.method not in ("rk4", "rk45"):
            raise ConfigError(f"unknown integration method '{self.method}'")
        if not self.step > 0:
            raise ConfigError(f"step must be positive, got {self.step}")
        if not self.horizon > 0:
            raise ConfigError(f"horizon must be positive, got {self.horizon}")
        if not self.step < self.horizon:
            raise ConfigError("step must be smaller than the horizon")
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ConfigError("tolerances must be positive")


@dataclass
class Trajectory:
    """Recorded closed- or open-loop run.

    ``states[i]`` is the (records, state_dim_i) history of subsystem i.
    ``goal_rate_bound`` is the analytic closed-loop rate (unclipped formula);
    it is zero in open loop.  ``clipped[k]`` marks records where saturation
    clipped any control since the previous record.
    """

    times: np.ndarray
    states: List[np.ndarray]
    outputs: np.ndarray
    controls: np.ndarray
    goal: np.ndarray
    goal_rate_bound: np.ndarray
    clipped: np.ndarray
    models: tuple = ()
    controller: Optional[ControllerSpec] = None

    @property
    def records(self) -> int:
        return self.times.shape[0]

    def state_at(self, k: int) -> List[np.ndarray]:
        return [s[k] for s in self.states]


def _models_of(system: System):
    if isinstance(system, NetworkSystem):
        return system.subsystems
    if isinstance(system, SubsystemModel):
        return (system,)
    raise ConfigError(f"expected NetworkSystem or SubsystemModel, got {type(system)!r}")


def _control_and_field(models, states, controller):
    """Clipped controls, per-subsystem derivatives and a did-clip flag."""
    n = len(models)
    if controller is None:
        u = np.zeros(n)
        clipped = False
    elif controller.kind is ControllerKind.ALIGNMENT:
        _, _, u, clipped = _alignment_terms(models, states, controller)
    else:
        u = np.array([tracking_control(models[0], states[0], controller)])
        # tracking_control already clips; recompute the flag for recording
        raw = u[0]
        clipped = controller.saturation is not None and abs(raw) >= controller.saturation
    derivs = [
        np.asarray(m.drift(x), dtype=float) + np.asarray(m.input_map(x), dtype=float) * u[i]
        for i, (m, x) in enumerate(zip(models, states))
    ]
    return u, derivs, clipped


def step_rk4(system: System, states, controller: Optional[ControllerSpec], h: float):
    """One classical RK4 step of the (closed-loop) network dynamics."""
    if not h > 0:
        raise ParameterError(f"step must be positive, got {h}")
    models = _models_of(system)
    states = [as_state(x, m.state_dim) for m, x in zip(models, states)]
    new, _ = _rk4_once(models, states, controller, h)
    return new


def _rk4_once(models, states, controller, h):
    _, k1, c1 = _control_and_field(models, states, controller)
    s2 = [x + 0.5 * h * k for x, k in zip(states, k1)]
    _, k2, c2 = _control_and_field(models, s2, controller)
    s3 = [x + 0.5 * h * k for x, k in zip(states, k2)]
    _, k3, c3 = _control_and_field(models, s3, controller)
    s4 = [x + h * k for x, k in zip(states, k3)]
    _, k4, c4 = _control_and_field(models, s4, controller)
    new = [
        x + (h / 6.0) * (a + 2.0 * b + 2.0 * c + d)
        for x, a, b, c, d in zip(states, k1, k2, k3, k4)
    ]
    return new, (c1 or c2 or c3 or c4)


# Dormand-Prince 5(4) tableau.
_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_DP_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40)

_RK45_SAFETY = 0.9
_RK45_MIN_FACTOR = 0.2
_RK45_MAX_FACTOR = 5.0
_RK45_MIN_STEP = 1e-12


def step_rk45(system: System, states, controller, h, rel_tol, abs_tol):
    """One attempted Dormand-Prince 5(4) step.

    Returns ``(new_states, accepted, next_h)``; on rejection the states are
    returned unchanged.
    """
    if not h > 0:
        raise ParameterError(f"step must be positive, got {h}")
    if not (rel_tol > 0 and abs_tol > 0):
        raise ConfigError("tolerances must be positive")
    global _rk45_rel, _rk45_abs
    _rk45_rel, _rk45_abs = rel_tol, abs_tol
    models = _models_of(system)
    states = [as_state(x, m.state_dim) for m, x in zip(models, states)]
    new, _, err = _rk45_once(models, states, controller, h)
    if err <= 1.0:
        factor = _RK45_MAX_FACTOR if err == 0.0 else min(
            _RK45_MAX_FACTOR, max(_RK45_MIN_FACTOR, _RK45_SAFETY * err ** -0.2)
        )
        return new, True, h * factor
    factor = max(_RK45_MIN_FACTOR, _RK45_SAFETY * err ** -0.2)
    return states, False, h * factor


def _rk45_once(models, states, controller, h):
    ks = []
    clipped = False
    for stage in range(7):
        if stage == 0:
            ys = states
        else:
            coeff = _DP_A[stage]
            ys = [
                x + h * sum(coeff[j] * ks[j][i] for j in range(stage))
                for i, x in enumerate(states)
            ]
        _, k, c = _control_and_field(models, ys, controller)
        ks.append(k)
        clipped = clipped or c
    new = [
        x + h * sum(_DP_B5[j] * ks[j][i] for j in range(7))
        for i, x in enumerate(states)
    ]
    low = [
        x + h * sum(_DP_B4[j] * ks[j][i] for j in range(7))
        for i, x in enumerate(states)
    ]
    # RMS error norm with mixed absolute/relative scaling
    num = 0.0
    count = 0
    for xn, xl, x0 in zip(new, low, states):
        scale = _rk45_abs + _rk45_rel * np.maximum(np.abs(x0), np.abs(xn))
        num += float(np.sum(((xn - xl) / scale) ** 2))
        count += xn.shape[0]
    err = math.sqrt(num / count)
    return new, clipped, err


# module-level scratch for the error norm scaling of the current call
_rk45_rel = 1e-8
_rk45_abs = 1e-10


def _record_row(models, states, controller, n):
    """Outputs, controls, goal, analytic goal rate and clip flag at a state."""
    if controller is not None and controller.kind is ControllerKind.ALIGNMENT:
        y, lie, u, clipped = _alignment_terms(models, states, controller)
        q = goal_value(y)
        rate = 0.0
        for i in range(n):
            err = 2.0 * y[i] - y[(i - 1) % n] - y[(i + 1) % n]
            rate -= controller.gain * (2.0 * lie[i]) ** 2 * err**2
    elif controller is not None:
        y = np.array([eval_output(models[0], states[0])])
        u = np.array([tracking_control(models[0], states[0], controller)])
        lie = lie_input_output(models[0], states[0])
        e = y[0] - controller.target
        q = 0.5 * e * e
        rate = -controller.gain * lie * lie * e * e
        clipped = controller.saturation is not None and abs(u[0]) >= controller.saturation
    else:
        y = np.array([eval_output(m, x) for m, x in zip(models, states)])
        u = np.zeros(n)
        q = goal_value(y) if n >= 2 else 0.0
        rate = 0.0
        clipped = False
    return y, u, q, rate, clipped


def simulate(system: System, initial_states, controller: Optional[ControllerSpec],
             integ: IntegratorSpec, record_every: int = 1,
             backend_choice: str = "auto") -> Trajectory:
    """Integrate from t=0 to the horizon, recording every record_every-th step.

    ``backend_choice`` is "auto" (compiled kernel when eligible), "python"
    (force the generic loop) or "compiled" (fail if the kernel is missing).
    """
    models = _models_of(system)
    n = len(models)
    if record_every < 1:
        raise ConfigError(f"record_every must be >= 1, got {record_every}")
    if controller is not None:
        if controller.kind is ControllerKind.ALIGNMENT and n < 2:
            raise ConfigError("alignment control requires at least 2 subsystems")
        if controller.kind is ControllerKind.TRACKING and n != 1:
            raise ConfigError("tracking control governs a single subsystem")
    states = [as_state(x, m.state_dim) for m, x in zip(models, initial_states)]
    if len(states) != n:
        raise ConfigError(f"got {len(states)} initial states for {n} subsystems")

    if integ.method == "rk4":
        n_steps = max(1, int(round(integ.horizon / integ.step)))
        eligible = all(m.kernel is not None for m in models)
        if backend_choice == "compiled" and not backend.HAVE_COMPILED:
            raise ConfigError("compiled kernel requested but not built")
        if backend_choice == "compiled" and not eligible:
            raise ConfigError("compiled kernel only handles built-in zoo models")
        use_kernel = (
            backend_choice in ("auto", "compiled")
            and backend.HAVE_COMPILED
            and eligible
        )
        if use_kernel:
            return _simulate_kernel(models, states, controller, integ, n_steps, record_every)
        return _simulate_rk4(models, states, controller, integ, n_steps, record_every)
    if backend_choice == "compiled":
        raise ConfigError("compiled kernel only implements the rk4 method")
    return _simulate_rk45(models, states, controller, integ, record_every)


def _make_trajectory(models, controller, rows):
    times, states_seq, ys, us, qs, rates, clips = rows
    n = len(models)
    states = [
        np.array([s[i] for s in states_seq]) for i in range(n)
    ]
    return Trajectory(
        times=np.array(times),
        states=states,
        outputs=np.array(ys),
        controls=np.array(us),
        goal=np.array(qs),
        goal_rate_bound=np.array(rates),
        clipped=np.array(clips, dtype=bool),
        models=tuple(models),
        controller=controller,
    )


def _simulate_rk4(models, states, controller, integ, n_steps, record_every):
    n = len(models)
    h = integ.step
    rows = ([], [], [], [], [], [], [])

    def record(t, states, clip_acc):
        y, u, q, rate, clip_now = _record_row(models, states, controller, n)
        for store, val in zip(rows, (t, [x.copy() for x in states], y, u, q, rate,
                                     clip_acc or clip_now)):
            store.append(val)

    record(0.0, states, False)
    clip_acc = False
    for k in range(n_steps):
        try:
            states, clipped = _rk4_once(models, states, controller, h)
        except NumericDomainError as exc:
            exc.time = (k + 1) * h
            exc.partial = _make_trajectory(models, controller, rows)
            raise
        clip_acc = clip_acc or clipped
        t = (k + 1) * h
        if not all(np.all(np.isfinite(x)) for x in states):
            raise NumericDomainError(
                f"non-finite state at t={t:g}", time=t,
                partial=_make_trajectory(models, controller, rows),
            )
        if (k + 1) % record_every == 0 or (k + 1) == n_steps:
            record(t, states, clip_acc)
            clip_acc = False
    return _make_trajectory(models, controller, rows)


def _simulate_rk45(models, states, controller, integ, record_every):
    global _rk45_rel, _rk45_abs
    _rk45_rel, _rk45_abs = integ.rel_tol, integ.abs_tol
    n = len(models)
    rows = ([], [], [], [], [], [], [])

    def record(t, states, clip_acc):
        y, u, q, rate, clip_now = _record_row(models, states, controller, n)
        for store, val in zip(rows, (t, [x.copy() for x in states], y, u, q, rate,
                                     clip_acc or clip_now)):
            store.append(val)

    record(0.0, states, False)
    t = 0.0
    h = min(integ.step, integ.horizon)
    accepted_count = 0
    clip_acc = False
    while t < integ.horizon - 1e-14 * integ.horizon:
        h = min(h, integ.horizon - t)
        try:
            new, clipped, err = _rk45_once(models, states, controller, h)
        except NumericDomainError as exc:
            exc.time = t
            exc.partial = _make_trajectory(models, controller, rows)
            raise
        if err <= 1.0:
            states = new
            t += h
            clip_acc = clip_acc or clipped
            if not all(np.all(np.isfinite(x)) for x in states):
                raise NumericDomainError(
                    f"non-finite state at t={t:g}", time=t,
                    partial=_make_trajectory(models, controller, rows),
                )
            accepted_count += 1
            at_end = t >= integ.horizon - 1e-14 * integ.horizon
            if accepted_count % record_every == 0 or at_end:
                record(t, states, clip_acc)
                clip_acc = False
            factor = _RK45_MAX_FACTOR if err == 0.0 else min(
                _RK45_MAX_FACTOR, max(_RK45_MIN_FACTOR, _RK45_SAFETY * err ** -0.2)
            )
            h *= factor
        else:
            h *= max(_RK45_MIN_FACTOR, _RK45_SAFETY * err ** -0.2)
        if h < _RK45_MIN_STEP:
            raise StiffnessError(
                f"adaptive step underflow below {_RK45_MIN_STEP:g} at t={t:g}", time=t,
                partial=_make_trajectory(models, controller, rows),
            )
    return _make_trajectory(models, controller, rows)


def _simulate_kernel(models, states, controller, integ, n_steps, record_every):
    kinds = np.array([m.kernel[0] for m in models], dtype=np.int64)
    params = np.array([m.kernel[1] for m in models], dtype=float)
    x0 = np.array(states, dtype=float)
    if controller is None:
        mode, gamma, target, sat = 0, 0.0, 0.0, 0.0
    elif controller.kind is ControllerKind.ALIGNMENT:
        mode, gamma, target = 1, controller.gain, 0.0
        sat = controller.saturation or 0.0
    else:
        mode, gamma, target = 2, controller.gain, controller.target
        sat = controller.saturation or 0.0
    try:
        out = backend.kernel().run_rk4(
            kinds, params, x0, mode, gamma, target, sat,
            integ.step, n_steps, record_every,
        )
    except ValueError as exc:
        raise NumericDomainError(str(exc)) from exc
    times, st, ys, us, qs, rates, clips = out
    n = len(models)
    return Trajectory(
        times=times,
        states=[np.ascontiguousarray(st[:, i, :]) for i in range(n)],
        outputs=ys,
        controls=us,
        goal=qs,
        goal_rate_bound=rates,
        clipped=clips.astype(bool),
        models=tuple(models),
        controller=controller,
    )
