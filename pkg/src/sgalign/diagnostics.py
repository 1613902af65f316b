"""Sampled-point and trajectory-level audits.

Three kinds of checks live here:

* model hygiene at sampled states: conservativity of the output
  (``check_conservative``), analytic-vs-finite-difference gradients
  (``check_gradient``), and monotone decrease of a Lyapunov candidate along
  the uncontrolled flow (``check_lyapunov_decrease``);
* trajectory-level audits of a closed-loop run (``audit_theorem1``):
  the goal never rises, controls decay, and either the outputs align or
  some subsystem's control effectiveness vanishes;
* an advisory numerical rank probe for the output-gradient distribution
  (``probe_rank_condition``).

All sampling is driven by the seeded generator in :mod:`sgalign.sampling`,
so a fixed seed reproduces a report exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .controller import ControllerKind, cyclic_error, goal_value
from .dynamics import (
    NetworkSystem,
    SubsystemModel,
    eval_output,
    eval_output_gradient,
    lie_drift_output,
    lie_input_output,
)
from .errors import ConfigError, ParameterError
from .integrate import Trajectory, _rk4_once
from .sampling import Lcg64


@dataclass(frozen=True)
class BoxSampler:
    """Uniform sampling from an axis-aligned box with a fixed seed."""

    low: tuple
    high: tuple
    count: int = 1000
    seed: int = 0

    def draw(self, dim: int) -> List[np.ndarray]:
        rng = Lcg64(self.seed)
        return [rng.uniform_vector(self.low, self.high, dim) for _ in range(self.count)]


@dataclass
class AuditReport:
    name: str
    samples: int
    violations: int
    worst: float
    worst_location: Optional[object]
    passed: bool
    detail: Optional[str] = None

    def to_dict(self) -> dict:
        loc = self.worst_location
        if isinstance(loc, np.ndarray):
            loc = loc.tolist()
        elif isinstance(loc, (list, tuple)):
            loc = [w.tolist() if isinstance(w, np.ndarray) else w for w in loc]
        return {
            "name": self.name,
            "samples": self.samples,
            "violations": self.violations,
            "worst": self.worst,
            "worst_location": loc,
            "passed": self.passed,
            "detail": self.detail,
        }


def _report(name, magnitudes, locations, tol, detail=None) -> AuditReport:
    mags = np.asarray(magnitudes)
    violations = int(np.sum(mags > tol))
    worst_idx = int(np.argmax(mags)) if mags.size else 0
    return AuditReport(
        name=name,
        samples=int(mags.size),
        violations=violations,
        worst=float(mags[worst_idx]) if mags.size else 0.0,
        worst_location=locations[worst_idx] if mags.size else None,
        passed=violations == 0,
        detail=detail,
    )


def check_conservative(model: SubsystemModel, sampler: BoxSampler,
                       tol: float = 1e-10) -> AuditReport:
    """Fail any sampled state where |grad(h) . f| exceeds tol."""
    points = sampler.draw(model.state_dim)
    mags = [abs(lie_drift_output(model, x)) for x in points]
    return _report(f"conservative[{model.label}]", mags, points, tol)


def finite_difference_gradient(model: SubsystemModel, x: np.ndarray) -> np.ndarray:
    """Central finite differences of the output, per-coordinate scaled step."""
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for j in range(x.shape[0]):
        step = 1e-6 * max(1.0, abs(x[j]))
        xp = x.copy()
        xm = x.copy()
        xp[j] += step
        xm[j] -= step
        grad[j] = (eval_output(model, xp) - eval_output(model, xm)) / (xp[j] - xm[j])
    return grad


def check_gradient(model: SubsystemModel, sampler: BoxSampler,
                   rel_tol: float = 1e-6) -> AuditReport:
    """Compare the analytic output gradient against central differences.

    The criterion is the vector-norm relative error with an absolute floor
    of 1e-9 on the reference norm.
    """
    points = sampler.draw(model.state_dim)
    errs = []
    for x in points:
        ana = eval_output_gradient(model, x)
        fd = finite_difference_gradient(model, x)
        scale = max(float(np.linalg.norm(ana)), 1e-9)
        errs.append(float(np.linalg.norm(fd - ana)) / scale)
    return _report(f"gradient[{model.label}]", errs, points, rel_tol)


@dataclass(frozen=True)
class LyapunovCandidate:
    """Nonnegative function of the joint subsystem states."""

    value: Callable[[List[np.ndarray]], float]
    label: str = "V"


def goal_candidate(net: NetworkSystem) -> LyapunovCandidate:
    """Default candidate: the alignment goal evaluated on the outputs."""
    def value(states):
        return goal_value([eval_output(m, x) for m, x in zip(net.subsystems, states)])
    return LyapunovCandidate(value=value, label="Q")


def check_lyapunov_decrease(net: NetworkSystem, candidate: LyapunovCandidate,
                            sampler: BoxSampler, tol: float = 1e-10) -> AuditReport:
    """Directional derivative of the candidate along the u=0 flow at samples.

    The derivative is a central difference of V along the flow over a span of
    2h; each half-span is integrated with several RK4 sub-steps so that the
    integration error stays far below the tol floor while the span itself is
    wide enough to keep the difference quotient above roundoff.
    """
    h = 1e-2
    substeps = 10
    rng = Lcg64(sampler.seed)
    derivs = []
    locations = []
    for _ in range(sampler.count):
        states = [
            rng.uniform_vector(sampler.low, sampler.high, m.state_dim)
            for m in net.subsystems
        ]
        fwd, bwd = states, states
        for _ in range(substeps):
            fwd, _ = _rk4_once(net.subsystems, fwd, None, h / substeps)
            bwd, _ = _rk4_once(net.subsystems, bwd, None, -h / substeps)
        derivs.append((candidate.value(fwd) - candidate.value(bwd)) / (2.0 * h))
        locations.append(states)
    return _report(f"lyapunov[{candidate.label}]", derivs, locations, tol)


def audit_theorem1(traj: Trajectory, q_monotone_slack: float = 1e-9,
                   u_final_tol: float = 1e-4, tail_fraction: float = 0.1,
                   branch_tol: float = 1e-3) -> dict:
    """Audit the three conclusions of the alignment convergence result.

    Returns a bundle of reports: ``monotone`` (the goal never rises by more
    than the slack between records), ``control_decay`` (controls over the
    final tail stay below u_final_tol) and ``alternative`` (either the
    cyclic errors vanish over the tail, or some subsystem's control
    effectiveness does; ``detail`` names which branch held).
    """
    if traj.controller is None:
        raise ConfigError("theorem audit requires a closed-loop trajectory")
    if traj.controller.kind is not ControllerKind.ALIGNMENT:
        raise ConfigError("theorem audit applies to alignment runs only")
    if bool(np.any(traj.clipped)):
        raise ConfigError("theorem audit is undefined for saturated trajectories")

    rises = np.maximum(np.diff(traj.goal), 0.0)
    monotone = _report(
        "monotone",
        rises,
        [float(t) for t in traj.times[1:]],
        q_monotone_slack,
    )

    t_end = traj.times[-1]
    tail = traj.times >= t_end - tail_fraction * t_end
    tail_u = np.abs(traj.controls[tail])
    decay = _report(
        "control_decay",
        [float(np.max(tail_u))],
        [float(traj.times[tail][int(np.argmax(np.max(tail_u, axis=1)))])],
        u_final_tol,
    )

    n = traj.outputs.shape[1]
    tail_idx = np.nonzero(tail)[0]
    max_err = 0.0
    for k in tail_idx:
        for i in range(n):
            max_err = max(max_err, abs(cyclic_error(traj.outputs[k], i)))
    lie_max = np.zeros(n)
    for i, model in enumerate(traj.models):
        lie_max[i] = max(
            abs(lie_input_output(model, traj.states[i][k])) for k in tail_idx
        )
    goal_branch = max_err <= branch_tol
    lie_branch = bool(np.any(lie_max <= branch_tol))
    if goal_branch and lie_branch:
        branch = "both"
    elif goal_branch:
        branch = "goal"
    elif lie_branch:
        branch = "lie_vanish"
    else:
        branch = "neither"
    alternative = AuditReport(
        name="alternative",
        samples=int(tail_idx.size),
        violations=0 if branch != "neither" else 1,
        worst=float(min(max_err, float(np.min(lie_max)))),
        worst_location=float(t_end),
        passed=branch != "neither",
        detail=branch,
    )
    return {"monotone": monotone, "control_decay": decay, "alternative": alternative}


@dataclass
class RankProbeReport:
    """Advisory numerical rank of iterated output-gradient derivatives."""

    rank: int
    singular_values: np.ndarray
    depth: int
    samples: int

    def to_dict(self) -> dict:
        return {
            "rank": self.rank,
            "singular_values": self.singular_values.tolist(),
            "depth": self.depth,
            "samples": self.samples,
        }


def probe_rank_condition(model: SubsystemModel, x, depth: int = 2,
                         samples: int = 8, radius: float = 1e-2,
                         seed: int = 0) -> RankProbeReport:
    """Numerically probe the local span of grad(h) and its flow derivatives.

    Row k holds the k-th iterated directional derivative of grad(h) along
    the drift (computed by nested central differences) evaluated at sampled
    points near x; the rank of the stacked matrix estimates the local
    dimension of their span.  Advisory only; never gates execution.
    """
    if depth > 4 or depth < 0:
        raise ParameterError(f"depth must be in 0..4, got {depth}")
    x = np.asarray(x, dtype=float)

    def lie_fn(k):
        if k == 0:
            return lambda w: np.asarray(model.output_gradient(w), dtype=float)
        prev = lie_fn(k - 1)
        eps = 10.0 ** (-5 + k)  # grows with nesting to contain FD noise

        def fn(w):
            v = np.asarray(model.drift(w), dtype=float)
            if not np.any(v):
                return np.zeros_like(np.asarray(w, dtype=float))
            return (prev(w + eps * v) - prev(w - eps * v)) / (2.0 * eps)

        return fn

    rng = Lcg64(seed)
    points = [x] + [
        x + rng.uniform_vector(-radius, radius, model.state_dim)
        for _ in range(samples - 1)
    ]
    rows = []
    for k in range(depth + 1):
        fn = lie_fn(k)
        rows.append(np.concatenate([fn(w) for w in points]))
    matrix = np.vstack(rows)
    svals = np.linalg.svd(matrix, compute_uv=False)
    if svals.size == 0 or svals[0] == 0.0:
        rank = 0
    else:
        rank = int(np.sum(svals > 1e-8 * svals[0]))
    return RankProbeReport(rank=rank, singular_values=svals, depth=depth,
                           samples=samples)
