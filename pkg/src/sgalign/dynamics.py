"""Affine-in-control subsystem models and a zoo of conservative systems.

Every model has the form

    xdot = f(x) + g(x) u,    y = h(x)

with a single scalar input u and a single scalar output y.  The built-in
("zoo") models are conservative: h is an exact invariant of the drift, so
L_f h = grad(h) . f vanishes identically.  Zoo models also carry a kernel
tag so that the compiled stepping loop can evaluate them without calling
back into Python; custom models always take the generic path.

Models expose analytic output gradients.  Finite differences live in
:mod:`sgalign.diagnostics` purely as a verification oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from .errors import DimensionError, NumericDomainError, ParameterError

Array = np.ndarray

# Kernel tags for the compiled fast path (see _speedup.pyx).
KERNEL_OSCILLATOR = 0
KERNEL_PENDULUM = 1


def as_state(x, dim: Optional[int] = None) -> Array:
    """Validate and coerce a state to a finite 1-D float array."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise DimensionError(f"state must be 1-D, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise DimensionError(f"state has length {arr.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise NumericDomainError("state contains non-finite entries")
    return arr


@dataclass(frozen=True)
class SubsystemModel:
    """One affine-in-control subsystem with scalar input and scalar output.

    ``kernel`` is ``(kind, params)`` for zoo models handled by the compiled
    stepping loop, ``None`` for custom models.
    """

    state_dim: int
    drift: Callable[[Array], Array]
    input_map: Callable[[Array], Array]
    output: Callable[[Array], float]
    output_gradient: Callable[[Array], Array]
    label: str = ""
    kernel: Optional[Tuple[int, Tuple[float, ...]]] = None

    # This package fixes the input dimension to one per subsystem; the
    # alignment law multiplies a scalar input by a scalar cyclic error.
    input_dim: int = 1


def _checked_vector(model: SubsystemModel, raw, what: str) -> Array:
    vec = np.asarray(raw, dtype=float)
    if vec.shape != (model.state_dim,):
        raise DimensionError(
            f"{what} of '{model.label}' returned shape {vec.shape}, "
            f"expected ({model.state_dim},)"
        )
    if not np.all(np.isfinite(vec)):
        raise NumericDomainError(f"{what} of '{model.label}' is non-finite")
    return vec


def eval_drift(model: SubsystemModel, x) -> Array:
    """Drift vector field f(x)."""
    x = as_state(x, model.state_dim)
    return _checked_vector(model, model.drift(x), "drift")


def eval_input_map(model: SubsystemModel, x) -> Array:
    """Input column g(x)."""
    x = as_state(x, model.state_dim)
    return _checked_vector(model, model.input_map(x), "input map")


def eval_output(model: SubsystemModel, x) -> float:
    """Scalar output y = h(x)."""
    x = as_state(x, model.state_dim)
    y = float(model.output(x))
    if not math.isfinite(y):
        raise NumericDomainError(f"output of '{model.label}' is non-finite")
    return y


def eval_output_gradient(model: SubsystemModel, x) -> Array:
    """Analytic gradient of the output, grad h(x)."""
    x = as_state(x, model.state_dim)
    return _checked_vector(model, model.output_gradient(x), "output gradient")


def lie_drift_output(model: SubsystemModel, x) -> float:
    """Rate of change of the output under zero control: grad(h) . f."""
    x = as_state(x, model.state_dim)
    return float(np.dot(eval_output_gradient(model, x), eval_drift(model, x)))


def lie_input_output(model: SubsystemModel, x) -> float:
    """Control effectiveness on the output: grad(h) . g."""
    x = as_state(x, model.state_dim)
    return float(np.dot(eval_output_gradient(model, x), eval_input_map(model, x)))


def make_oscillator(omega: float) -> SubsystemModel:
    """Harmonic oscillator with energy output.

    State (q, p); f = (p, -omega^2 q); g = (0, 1);
    h = (omega^2 q^2 + p^2) / 2.  h is an exact invariant of the drift.
    """
    if not omega > 0:
        raise ParameterError(f"omega must be positive, got {omega}")
    w2 = omega * omega
    return SubsystemModel(
        state_dim=2,
        drift=lambda x: np.array([x[1], -w2 * x[0]]),
        input_map=lambda x: np.array([0.0, 1.0]),
        output=lambda x: 0.5 * (w2 * x[0] * x[0] + x[1] * x[1]),
        output_gradient=lambda x: np.array([w2 * x[0], x[1]]),
        label=f"oscillator(omega={omega:g})",
        kernel=(KERNEL_OSCILLATOR, (float(omega), 0.0, 0.0)),
    )


def make_pendulum(mass: float, length: float, gravity: float) -> SubsystemModel:
    """Planar pendulum with total-energy output.

    State (q, p) with p the angular momentum; f = (p/(m l^2), -m g l sin q);
    g = (0, 1); h = p^2/(2 m l^2) + m g l (1 - cos q).  The angle is not
    wrapped modulo 2*pi: h depends on q only through cos q, and wrapping
    would break trajectory continuity.
    """
    if not (mass > 0 and length > 0 and gravity > 0):
        raise ParameterError(
            f"pendulum parameters must be positive, got "
            f"mass={mass}, length={length}, gravity={gravity}"
        )
    ml2 = mass * length * length
    mgl = mass * gravity * length
    return SubsystemModel(
        state_dim=2,
        drift=lambda x: np.array([x[1] / ml2, -mgl * math.sin(x[0])]),
        input_map=lambda x: np.array([0.0, 1.0]),
        output=lambda x: x[1] * x[1] / (2.0 * ml2) + mgl * (1.0 - math.cos(x[0])),
        output_gradient=lambda x: np.array([mgl * math.sin(x[0]), x[1] / ml2]),
        label=f"pendulum(m={mass:g},l={length:g},g={gravity:g})",
        kernel=(KERNEL_PENDULUM, (float(mass), float(length), float(gravity))),
    )


def make_custom(state_dim, drift, input_map, output, output_gradient,
                label: str = "custom") -> SubsystemModel:
    """Wrap user-supplied callables; no conservativity is assumed.

    Run :func:`sgalign.diagnostics.check_conservative` and
    :func:`sgalign.diagnostics.check_gradient` explicitly before trusting
    the model in closed loop.
    """
    if state_dim < 1:
        raise ParameterError(f"state_dim must be positive, got {state_dim}")
    return SubsystemModel(
        state_dim=int(state_dim),
        drift=drift,
        input_map=input_map,
        output=output,
        output_gradient=output_gradient,
        label=label,
        kernel=None,
    )


@dataclass(frozen=True)
class NetworkSystem:
    """Ordered collection of N >= 2 subsystems with cyclic neighbor indexing."""

    subsystems: Tuple[SubsystemModel, ...]

    def __post_init__(self):
        object.__setattr__(self, "subsystems", tuple(self.subsystems))
        if len(self.subsystems) < 2:
            raise ParameterError(
                f"NetworkSystem needs at least 2 subsystems, got {len(self.subsystems)}"
            )

    @property
    def count(self) -> int:
        return len(self.subsystems)

    def neighbor_of(self, i: int, offset: int) -> int:
        """Cyclic neighbor index: after subsystem N-1 comes 0 and vice versa."""
        if not 0 <= i < self.count:
            raise DimensionError(f"subsystem index {i} out of range 0..{self.count - 1}")
        return (i + offset) % self.count
