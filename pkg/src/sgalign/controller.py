"""Speed-gradient control laws for output alignment and output tracking.

The alignment goal function is the cyclic sum of squared consecutive
output differences,

    Q(y) = (y_1 - y_2)^2 + ... + (y_N - y_1)^2,

and the alignment law is the speed gradient of its time derivative:

    u_i = -gamma * (2 * grad(h_i).g_i) * (2 y_i - y_{i-1} - y_{i+1})

with indices taken cyclically.  For conservative subsystems (L_f h = 0)
the closed-loop rate of Q is

    dQ/dt = -gamma * sum_i (2 grad(h_i).g_i)^2 (2 y_i - y_{i-1} - y_{i+1})^2

which is nonpositive, so Q never increases along trajectories.

The single-system tracking law drives y = h(x) to a constant target by the
speed gradient of Q_track(x) = (h(x) - y*)^2 / 2:

    u = -gamma * (grad(h).g) * (h(x) - y*).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np

from .dynamics import NetworkSystem, SubsystemModel, as_state, eval_output, lie_input_output
from .errors import ConfigError


class ControllerKind(str, Enum):
    ALIGNMENT = "alignment"
    TRACKING = "tracking"


@dataclass(frozen=True)
class ControllerSpec:
    """Controller kind, gain and optional target / saturation."""

    kind: ControllerKind
    gain: float = 0.5
    target: Optional[float] = None
    saturation: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ControllerKind(self.kind))
        if not self.gain > 0:
            raise ConfigError(f"gain must be positive, got {self.gain}")
        if self.saturation is not None and not self.saturation > 0:
            raise ConfigError(f"saturation must be positive, got {self.saturation}")
        if self.kind is ControllerKind.TRACKING and self.target is None:
            raise ConfigError("tracking controller requires a target output value")


def cyclic_error(outputs: Sequence[float], i: int) -> float:
    """Per-subsystem alignment error 2 y_i - y_{i-1} - y_{i+1}, cyclic indices.

    Subsystems are numbered 0..N-1; the neighbor of the last is the first.
    """
    y = np.asarray(outputs, dtype=float)
    n = y.shape[0]
    if n < 2:
        raise ConfigError(f"cyclic error needs at least 2 outputs, got {n}")
    if not 0 <= i < n:
        raise ConfigError(f"index {i} out of range 0..{n - 1}")
    return float(2.0 * y[i] - y[(i - 1) % n] - y[(i + 1) % n])


def goal_value(outputs: Sequence[float]) -> float:
    """Cyclic sum of squared consecutive output differences; zero iff aligned."""
    y = np.asarray(outputs, dtype=float)
    if y.shape[0] < 2:
        raise ConfigError(f"goal function needs at least 2 outputs, got {y.shape[0]}")
    d = y - np.roll(y, -1)
    return float(np.dot(d, d))


def _clip(u: float, saturation: Optional[float]) -> Tuple[float, bool]:
    if saturation is not None and abs(u) > saturation:
        return (saturation if u > 0 else -saturation), True
    return u, False


def _alignment_terms(models, states, spec):
    """Outputs, Lie factors, clipped controls and a did-clip flag."""
    y = np.array([eval_output(m, x) for m, x in zip(models, states)])
    lie = np.array([lie_input_output(m, x) for m, x in zip(models, states)])
    n = len(models)
    u = np.empty(n)
    clipped = False
    for i in range(n):
        err = 2.0 * y[i] - y[(i - 1) % n] - y[(i + 1) % n]
        ui = -spec.gain * (2.0 * lie[i]) * err
        u[i], did = _clip(ui, spec.saturation)
        clipped = clipped or did
    return y, lie, u, clipped


def alignment_control(net: NetworkSystem, states, spec: ControllerSpec) -> np.ndarray:
    """Control vector of the alignment law, one scalar per subsystem."""
    if spec.kind is not ControllerKind.ALIGNMENT:
        raise ConfigError(f"alignment_control requires an alignment spec, got {spec.kind}")
    states = [as_state(x, m.state_dim) for m, x in zip(net.subsystems, states)]
    _, _, u, _ = _alignment_terms(net.subsystems, states, spec)
    return u


def tracking_control(model: SubsystemModel, x, spec: ControllerSpec) -> float:
    """Scalar tracking control driving h(x) to the target value."""
    if spec.kind is not ControllerKind.TRACKING:
        raise ConfigError(f"tracking_control requires a tracking spec, got {spec.kind}")
    x = as_state(x, model.state_dim)
    u = -spec.gain * lie_input_output(model, x) * (eval_output(model, x) - spec.target)
    u, _ = _clip(u, spec.saturation)
    return u


def goal_rate(net: NetworkSystem, states, spec: ControllerSpec) -> float:
    """Analytic closed-loop rate of the alignment goal; always <= 0.

    For conservative subsystems this equals dQ/dt along the unclipped
    closed loop, so the controller spec must not carry a saturation bound.
    """
    if spec.kind is not ControllerKind.ALIGNMENT:
        raise ConfigError(f"goal_rate requires an alignment spec, got {spec.kind}")
    if spec.saturation is not None:
        raise ConfigError("goal_rate assumes unclipped control; unset saturation")
    states = [as_state(x, m.state_dim) for m, x in zip(net.subsystems, states)]
    y = np.array([eval_output(m, x) for m, x in zip(net.subsystems, states)])
    total = 0.0
    n = net.count
    for i in range(n):
        lie2 = 2.0 * lie_input_output(net.subsystems[i], states[i])
        err = 2.0 * y[i] - y[(i - 1) % n] - y[(i + 1) % n]
        total += lie2 * lie2 * err * err
    return -spec.gain * total


def tracking_goal_value(model: SubsystemModel, x, spec: ControllerSpec) -> float:
    """Tracking goal Q = (h(x) - y*)^2 / 2."""
    e = eval_output(model, x) - spec.target
    return 0.5 * e * e


def tracking_goal_rate(model: SubsystemModel, x, spec: ControllerSpec) -> float:
    """Closed-loop rate of the tracking goal for a conservative model."""
    lie = lie_input_output(model, x)
    e = eval_output(model, x) - spec.target
    return -spec.gain * lie * lie * e * e
