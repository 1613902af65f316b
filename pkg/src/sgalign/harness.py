"""Declarative experiments: JSON configs, scenario catalog, runs and sweeps.

A config is a single JSON object with a fixed schema; unknown keys are a
hard error so typos cannot silently change an experiment.  Schema, with
defaults in brackets:

    {
      "name": str,
      "subsystems": [
        {"model": str, "parameters": {name: number} [{}],
         "initial_state": [numbers]},
        ...
      ],
      "controller": {"kind": "alignment"|"tracking", "gamma" [0.5],
                     "target", "saturation", "perturb_delta"},
      "integrator": {"method" ["rk4"], "step" [1e-3], "horizon" [200],
                     "rel_tol" [1e-8], "abs_tol" [1e-10],
                     "record_every" [10]},
      "seed": int [0],
      "outputs": {"csv_path", "report_path"} [{}]
    }

``perturb_delta`` adds a seeded uniform perturbation in [-delta, delta] to
every initial-state coordinate; it exists to nudge runs off measure-zero
equilibria (e.g. a pendulum starting exactly at rest) and is disabled by
default so that the degenerate branch stays observable.
"""

from __future__ import annotations

import json
import time as _time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .controller import ControllerKind, ControllerSpec
from .diagnostics import audit_theorem1, AuditReport
from .dynamics import NetworkSystem, make_oscillator, make_pendulum
from .errors import ConfigError
from .integrate import IntegratorSpec, Trajectory, simulate
from .sampling import Lcg64

# name -> (factory, parameter names with defaults)
_MODEL_FACTORIES = {
    "oscillator": (make_oscillator, {"omega": 1.0}),
    "pendulum": (make_pendulum, {"mass": 1.0, "length": 1.0, "gravity": 1.0}),
}


def register_model(name: str, factory, parameter_defaults: Optional[dict] = None):
    """Register a custom model factory for use as a config "model" name."""
    _MODEL_FACTORIES[name] = (factory, dict(parameter_defaults or {}))


@dataclass(frozen=True)
class SubsystemConfig:
    model: str
    initial_state: Tuple[float, ...]
    parameters: Dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class ControllerConfig:
    kind: str
    gamma: float = 0.5
    target: Optional[float] = None
    saturation: Optional[float] = None
    perturb_delta: Optional[float] = None

    def spec(self) -> ControllerSpec:
        return ControllerSpec(
            kind=ControllerKind(self.kind),
            gain=self.gamma,
            target=self.target,
            saturation=self.saturation,
        )


@dataclass(frozen=True)
class OutputConfig:
    csv_path: Optional[str] = None
    report_path: Optional[str] = None


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    subsystems: Tuple[SubsystemConfig, ...]
    controller: ControllerConfig
    integrator: IntegratorSpec = IntegratorSpec()
    record_every: int = 10
    seed: int = 0
    outputs: OutputConfig = OutputConfig()


@dataclass(frozen=True)
class RunMetrics:
    q_initial: float
    q_final: float
    max_q_rise: float
    final_output_spread: float
    u_tail_max: float
    aligned_value: float
    theorem1_branch: Optional[str]
    wall_time: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _check_keys(obj: dict, allowed, where: str):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be a JSON object")
    for key in obj:
        if key not in allowed:
            raise ConfigError(f"unknown key '{key}' in {where}")


def config_from_dict(raw: dict) -> ExperimentConfig:
    _check_keys(raw, {"name", "subsystems", "controller", "integrator", "seed",
                      "outputs"}, "config")
    for key in ("name", "subsystems", "controller"):
        if key not in raw:
            raise ConfigError(f"config is missing required key '{key}'")

    subsystems = []
    if not isinstance(raw["subsystems"], list) or not raw["subsystems"]:
        raise ConfigError("'subsystems' must be a non-empty list")
    for idx, sub in enumerate(raw["subsystems"]):
        where = f"subsystems[{idx}]"
        _check_keys(sub, {"model", "parameters", "initial_state"}, where)
        for key in ("model", "initial_state"):
            if key not in sub:
                raise ConfigError(f"{where} is missing required key '{key}'")
        name = sub["model"]
        if name not in _MODEL_FACTORIES:
            raise ConfigError(
                f"{where}: unknown model '{name}' "
                f"(known: {sorted(_MODEL_FACTORIES)})"
            )
        defaults = _MODEL_FACTORIES[name][1]
        params = dict(sub.get("parameters", {}))
        for pname in params:
            if pname not in defaults:
                raise ConfigError(f"{where}: unknown parameter '{pname}' for '{name}'")
        subsystems.append(SubsystemConfig(
            model=name,
            parameters=params,
            initial_state=tuple(float(v) for v in sub["initial_state"]),
        ))

    ctrl_raw = raw["controller"]
    _check_keys(ctrl_raw, {"kind", "gamma", "target", "saturation",
                           "perturb_delta"}, "controller")
    if "kind" not in ctrl_raw:
        raise ConfigError("controller is missing required key 'kind'")
    if ctrl_raw["kind"] not in ("alignment", "tracking"):
        raise ConfigError(f"unknown controller kind '{ctrl_raw['kind']}'")
    controller = ControllerConfig(
        kind=ctrl_raw["kind"],
        gamma=float(ctrl_raw.get("gamma", 0.5)),
        target=None if ctrl_raw.get("target") is None else float(ctrl_raw["target"]),
        saturation=(None if ctrl_raw.get("saturation") is None
                    else float(ctrl_raw["saturation"])),
        perturb_delta=(None if ctrl_raw.get("perturb_delta") is None
                       else float(ctrl_raw["perturb_delta"])),
    )
    if controller.kind == "alignment" and len(subsystems) < 2:
        raise ConfigError("alignment requires N >= 2 subsystems")
    if controller.kind == "tracking" and len(subsystems) != 1:
        raise ConfigError("tracking governs exactly one subsystem")

    integ_raw = raw.get("integrator", {})
    _check_keys(integ_raw, {"method", "step", "horizon", "rel_tol", "abs_tol",
                            "record_every"}, "integrator")
    integrator = IntegratorSpec(
        method=integ_raw.get("method", "rk4"),
        step=float(integ_raw.get("step", 1e-3)),
        horizon=float(integ_raw.get("horizon", 200.0)),
        rel_tol=float(integ_raw.get("rel_tol", 1e-8)),
        abs_tol=float(integ_raw.get("abs_tol", 1e-10)),
    )
    record_every = int(integ_raw.get("record_every", 10))
    if record_every < 1:
        raise ConfigError(f"record_every must be >= 1, got {record_every}")

    out_raw = raw.get("outputs", {})
    _check_keys(out_raw, {"csv_path", "report_path"}, "outputs")
    outputs = OutputConfig(
        csv_path=out_raw.get("csv_path"),
        report_path=out_raw.get("report_path"),
    )

    # validate the controller spec eagerly so config errors surface at parse time
    controller.spec()

    return ExperimentConfig(
        name=str(raw["name"]),
        subsystems=tuple(subsystems),
        controller=controller,
        integrator=integrator,
        record_every=record_every,
        seed=int(raw.get("seed", 0)),
        outputs=outputs,
    )


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a JSON experiment config."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON at line {exc.lineno}: {exc.msg}") from exc
    return config_from_dict(raw)


def load_config(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def serialize_config(cfg: ExperimentConfig) -> dict:
    return {
        "name": cfg.name,
        "subsystems": [
            {
                "model": s.model,
                "parameters": dict(s.parameters),
                "initial_state": list(s.initial_state),
            }
            for s in cfg.subsystems
        ],
        "controller": {
            "kind": cfg.controller.kind,
            "gamma": cfg.controller.gamma,
            "target": cfg.controller.target,
            "saturation": cfg.controller.saturation,
            "perturb_delta": cfg.controller.perturb_delta,
        },
        "integrator": {
            "method": cfg.integrator.method,
            "step": cfg.integrator.step,
            "horizon": cfg.integrator.horizon,
            "rel_tol": cfg.integrator.rel_tol,
            "abs_tol": cfg.integrator.abs_tol,
            "record_every": cfg.record_every,
        },
        "seed": cfg.seed,
        "outputs": {
            "csv_path": cfg.outputs.csv_path,
            "report_path": cfg.outputs.report_path,
        },
    }


def build_models(cfg: ExperimentConfig):
    """Instantiate the configured models and initial states (unperturbed)."""
    models = []
    states = []
    for sub in cfg.subsystems:
        factory, defaults = _MODEL_FACTORIES[sub.model]
        params = dict(defaults)
        params.update(sub.parameters)
        model = factory(**params)
        if len(sub.initial_state) != model.state_dim:
            raise ConfigError(
                f"initial state for '{sub.model}' has length "
                f"{len(sub.initial_state)}, expected {model.state_dim}"
            )
        models.append(model)
        states.append(np.array(sub.initial_state, dtype=float))
    return models, states


def _perturb(states, delta: float, seed: int):
    rng = Lcg64(seed)
    return [
        x + np.array([rng.uniform(-delta, delta) for _ in range(x.shape[0])])
        for x in states
    ]


def _tail_mask(times: np.ndarray, tail_fraction: float = 0.1) -> np.ndarray:
    return times >= times[-1] - tail_fraction * times[-1]


def compute_metrics(traj: Trajectory, branch: Optional[str],
                    wall_time: float, tail_fraction: float = 0.1) -> RunMetrics:
    tail = _tail_mask(traj.times, tail_fraction)
    y_final = traj.outputs[-1]
    return RunMetrics(
        q_initial=float(traj.goal[0]),
        q_final=float(traj.goal[-1]),
        max_q_rise=float(max(0.0, np.max(np.diff(traj.goal)))),
        final_output_spread=float(np.max(y_final) - np.min(y_final)),
        u_tail_max=float(np.max(np.abs(traj.controls[tail]))),
        aligned_value=float(np.mean(y_final)),
        theorem1_branch=branch,
        wall_time=wall_time,
    )


def _tracking_audits(traj: Trajectory, q_monotone_slack: float,
                     u_final_tol: float, tail_fraction: float,
                     branch_tol: float) -> dict:
    from .dynamics import lie_input_output

    rises = np.maximum(np.diff(traj.goal), 0.0)
    monotone = AuditReport(
        name="monotone",
        samples=int(rises.size),
        violations=int(np.sum(rises > q_monotone_slack)),
        worst=float(np.max(rises)) if rises.size else 0.0,
        worst_location=float(traj.times[1 + int(np.argmax(rises))]) if rises.size else None,
        passed=bool(np.all(rises <= q_monotone_slack)),
    )
    tail = _tail_mask(traj.times, tail_fraction)
    u_max = float(np.max(np.abs(traj.controls[tail])))
    decay = AuditReport(
        name="control_decay", samples=int(np.sum(tail)), violations=int(u_max > u_final_tol),
        worst=u_max, worst_location=float(traj.times[-1]), passed=u_max <= u_final_tol,
    )
    tail_idx = np.nonzero(tail)[0]
    err_max = max(
        abs(traj.outputs[k][0] - traj.controller.target) for k in tail_idx
    )
    lie_max = max(
        abs(lie_input_output(traj.models[0], traj.states[0][k])) for k in tail_idx
    )
    goal_branch = err_max <= branch_tol
    lie_branch = lie_max <= branch_tol
    branch = ("both" if goal_branch and lie_branch else
              "goal" if goal_branch else
              "lie_vanish" if lie_branch else "neither")
    alternative = AuditReport(
        name="alternative", samples=int(tail_idx.size),
        violations=0 if branch != "neither" else 1,
        worst=float(min(err_max, lie_max)), worst_location=float(traj.times[-1]),
        passed=branch != "neither", detail=branch,
    )
    return {"monotone": monotone, "control_decay": decay, "alternative": alternative}


def run_experiment(cfg: ExperimentConfig, q_monotone_slack: float = 1e-9,
                   u_final_tol: float = 1e-4, tail_fraction: float = 0.1,
                   branch_tol: float = 1e-3, backend_choice: str = "auto"):
    """Build, simulate, audit; returns (trajectory, metrics, audit bundle)."""
    models, states = build_models(cfg)
    if cfg.controller.perturb_delta is not None:
        states = _perturb(states, cfg.controller.perturb_delta, cfg.seed)
    spec = cfg.controller.spec()
    if spec.kind is ControllerKind.ALIGNMENT:
        system = NetworkSystem(tuple(models))
    else:
        system = models[0]

    start = _time.perf_counter()
    traj = simulate(system, states, spec, cfg.integrator,
                    record_every=cfg.record_every, backend_choice=backend_choice)
    wall = _time.perf_counter() - start

    if spec.kind is ControllerKind.ALIGNMENT and spec.saturation is None:
        audits = audit_theorem1(traj, q_monotone_slack=q_monotone_slack,
                                u_final_tol=u_final_tol,
                                tail_fraction=tail_fraction,
                                branch_tol=branch_tol)
    else:
        audits = _tracking_audits(traj, q_monotone_slack, u_final_tol,
                                  tail_fraction, branch_tol)
    branch = audits["alternative"].detail
    metrics = compute_metrics(traj, branch, wall, tail_fraction)

    if cfg.outputs.csv_path:
        emit_csv(traj, cfg.outputs.csv_path)
    if cfg.outputs.report_path:
        write_report(cfg, metrics, audits, cfg.outputs.report_path)
    return traj, metrics, audits


def _set_dotted(raw: dict, path: str, value: float):
    parts = path.split(".")
    node = raw
    for part in parts[:-1]:
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(f"config path '{path}' does not resolve")
        node = node[part]
    leaf = parts[-1]
    if not isinstance(node, dict) or leaf not in node or not isinstance(
        node[leaf], (int, float)
    ) or isinstance(node[leaf], bool):
        raise ConfigError(f"config path '{path}' does not name a numeric field")
    node[leaf] = value


def run_sweep(cfg: ExperimentConfig, param_path: str, values,
              out_path: Optional[str] = None, **run_kwargs):
    """One independent run per value of the dotted config parameter.

    Returns a list of (value, RunMetrics) rows; optionally writes them as a
    combined CSV.
    """
    values = list(values)
    if values:
        # validate the path once up front so errors name the path, not a run
        probe = serialize_config(cfg)
        _set_dotted(probe, param_path, values[0])
    rows = []
    for value in values:
        raw = serialize_config(cfg)
        _set_dotted(raw, param_path, value)
        raw["outputs"] = {"csv_path": None, "report_path": None}
        sub_cfg = config_from_dict(raw)
        _, metrics, _ = run_experiment(sub_cfg, **run_kwargs)
        rows.append((value, metrics))
    if out_path is not None:
        _write_sweep_csv(rows, param_path, out_path)
    return rows


_METRIC_FIELDS = ("q_initial", "q_final", "max_q_rise", "final_output_spread",
                  "u_tail_max", "aligned_value", "theorem1_branch", "wall_time")


def _write_sweep_csv(rows, param_path: str, path: str):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join([param_path] + list(_METRIC_FIELDS)) + "\n")
        for value, metrics in rows:
            rec = metrics.to_dict()
            cells = [f"{value:.17g}"]
            for name in _METRIC_FIELDS:
                v = rec[name]
                cells.append(f"{v:.17g}" if isinstance(v, float) else str(v))
            fh.write(",".join(cells) + "\n")


def emit_csv(traj: Trajectory, path: str):
    """Write the trajectory as CSV with 17 significant digits per value.

    Columns: t, then per subsystem i (1-based): x{i}_1..x{i}_n, y{i}, u{i},
    then Q and Qdot_bound.
    """
    header = ["t"]
    for i, model in enumerate(traj.models, start=1):
        header += [f"x{i}_{j}" for j in range(1, model.state_dim + 1)]
        header += [f"y{i}", f"u{i}"]
    header += ["Q", "Qdot_bound"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for k in range(traj.records):
            cells = [f"{traj.times[k]:.17g}"]
            for i in range(len(traj.models)):
                cells += [f"{v:.17g}" for v in traj.states[i][k]]
                cells.append(f"{traj.outputs[k, i]:.17g}")
                cells.append(f"{traj.controls[k, i]:.17g}")
            cells.append(f"{traj.goal[k]:.17g}")
            cells.append(f"{traj.goal_rate_bound[k]:.17g}")
            fh.write(",".join(cells) + "\n")


def write_report(cfg: ExperimentConfig, metrics: RunMetrics, audits: dict,
                 path: str):
    """Single JSON document: config echo, metrics and all audit reports."""
    doc = {
        "config": serialize_config(cfg),
        "metrics": metrics.to_dict(),
        "audits": {name: rep.to_dict() for name, rep in audits.items()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Built-in scenario catalog.  Each scenario exercises a distinct conclusion:
# leveling of two and three subsystems, mixed model classes, the invariant
# aligned manifold, single-output tracking, and the degenerate rest branch.
# ---------------------------------------------------------------------------

CATALOG: Dict[str, dict] = {
    "two-oscillator-leveling": {
        "name": "two-oscillator-leveling",
        "subsystems": [
            {"model": "oscillator", "parameters": {"omega": 1.0},
             "initial_state": [1.0, 1.0]},
            {"model": "oscillator", "parameters": {"omega": 1.0},
             "initial_state": [0.5, 0.5]},
        ],
        "controller": {"kind": "alignment", "gamma": 0.5},
        "integrator": {"method": "rk4", "step": 1e-3, "horizon": 200.0,
                       "record_every": 10},
        "seed": 1,
    },
    "three-pendulum-leveling": {
        "name": "three-pendulum-leveling",
        "subsystems": [
            {"model": "pendulum", "initial_state": [1.5, 0.0]},
            {"model": "pendulum", "initial_state": [0.0, 1.0]},
            {"model": "pendulum", "initial_state": [0.5, -0.5]},
        ],
        "controller": {"kind": "alignment", "gamma": 0.5},
        "integrator": {"method": "rk4", "step": 1e-3, "horizon": 200.0,
                       "record_every": 10},
        "seed": 2,
    },
    "mixed-pendulum-oscillator": {
        "name": "mixed-pendulum-oscillator",
        "subsystems": [
            {"model": "pendulum", "initial_state": [1.2, 0.0]},
            {"model": "oscillator", "parameters": {"omega": 1.0},
             "initial_state": [0.8, 0.3]},
            {"model": "pendulum", "initial_state": [0.5, 0.5]},
            {"model": "oscillator", "parameters": {"omega": 2.0},
             "initial_state": [0.3, 0.4]},
        ],
        "controller": {"kind": "alignment", "gamma": 0.5},
        "integrator": {"method": "rk4", "step": 1e-3, "horizon": 200.0,
                       "record_every": 10},
        "seed": 3,
    },
    "aligned-start": {
        "name": "aligned-start",
        "subsystems": [
            {"model": "oscillator", "parameters": {"omega": 1.0},
             "initial_state": [1.0, 0.0]},
            {"model": "oscillator", "parameters": {"omega": 1.0},
             "initial_state": [0.0, 1.0]},
        ],
        "controller": {"kind": "alignment", "gamma": 0.5},
        "integrator": {"method": "rk4", "step": 1e-3, "horizon": 200.0,
                       "record_every": 10},
        "seed": 4,
    },
    "pendulum-energy-tracking": {
        "name": "pendulum-energy-tracking",
        "subsystems": [
            {"model": "pendulum", "initial_state": [0.1, 0.0]},
        ],
        "controller": {"kind": "tracking", "gamma": 1.0, "target": 1.0},
        "integrator": {"method": "rk4", "step": 1e-3, "horizon": 300.0,
                       "record_every": 10},
        "seed": 5,
    },
    "degenerate-rest": {
        "name": "degenerate-rest",
        "subsystems": [
            {"model": "pendulum", "initial_state": [2.0, 0.0]},
            {"model": "pendulum", "initial_state": [0.0, 0.0]},
        ],
        "controller": {"kind": "alignment", "gamma": 0.5},
        "integrator": {"method": "rk4", "step": 1e-3, "horizon": 200.0,
                       "record_every": 10},
        "seed": 6,
    },
}


def catalog_names() -> List[str]:
    return sorted(CATALOG)


def catalog_config(name: str) -> ExperimentConfig:
    if name not in CATALOG:
        raise ConfigError(f"unknown catalog scenario '{name}' (known: {catalog_names()})")
    return config_from_dict(json.loads(json.dumps(CATALOG[name])))
