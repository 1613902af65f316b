"""Speed-gradient alignment of conserved outputs in affine control networks."""

from .backend import HAVE_COMPILED
from .controller import (
    ControllerKind,
    ControllerSpec,
    alignment_control,
    cyclic_error,
    goal_rate,
    goal_value,
    tracking_control,
)
from .diagnostics import (
    AuditReport,
    BoxSampler,
    LyapunovCandidate,
    audit_theorem1,
    check_conservative,
    check_gradient,
    check_lyapunov_decrease,
    goal_candidate,
    probe_rank_condition,
)
from .dynamics import (
    NetworkSystem,
    SubsystemModel,
    eval_drift,
    eval_output,
    lie_drift_output,
    lie_input_output,
    make_custom,
    make_oscillator,
    make_pendulum,
)
from .errors import (
    ConfigError,
    DimensionError,
    NumericDomainError,
    ParameterError,
    SgalignError,
    StiffnessError,
)
from .harness import (
    CATALOG,
    ExperimentConfig,
    RunMetrics,
    catalog_config,
    catalog_names,
    emit_csv,
    load_config,
    parse_config,
    register_model,
    run_experiment,
    run_sweep,
    serialize_config,
)
from .integrate import IntegratorSpec, Trajectory, simulate, step_rk4, step_rk45

__version__ = "0.1.0"
