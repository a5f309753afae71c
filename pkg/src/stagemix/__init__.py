"""Multi-stage data-mixture schedules: deterministic manifests, loss-curve
stability analytics, and capability score aggregation."""

from .dynamics import (
    DEFAULT_WINDOW,
    GapReport,
    LossTrace,
    RollingWindow,
    SpikeReport,
    StabilitySummary,
    Transition,
    TransitionReport,
    WindowStats,
    detect_spikes,
    gap_report,
    global_std,
    local_fluctuation,
    spike_frequency,
    stability_summary,
    stage_transition_ratio,
    window_stats,
)
from .errors import (
    EvalDataError,
    FormatError,
    InvalidScheduleError,
    StagemixError,
    TraceError,
    ValidationError,
)
from .formats import (
    SCHEDULE_FORMAT,
    TRAJECTORY_COLUMNS,
    load_capability_spec,
    load_conditions,
    load_eval_log,
    load_loss_spec,
    load_loss_trace,
    load_registry,
    read_comparison_csv,
    read_manifest,
    read_manifest_header,
    read_trajectory_csv,
    save_conditions,
    save_eval_log,
    save_loss_trace,
    save_registry,
    write_comparison_csv,
    write_manifest,
    write_trajectory_csv,
)
from .metrics import (
    COMPARISON_COLUMNS,
    TASKS,
    AggregateScores,
    ComparisonTable,
    EvalSnapshot,
    TrajectoryPoint,
    aggregate,
    comparison,
    convergence_step,
    to_score,
    trajectory,
)
from .rounding import fmt_fixed, fmt_percent, round_half_away
from .sampling import (
    GENERATOR_ID,
    MANIFEST_FORMAT,
    STATE_FORMAT,
    Manifest,
    ManifestEvent,
    ManifestSampler,
    assemble_manifest,
    empirical_distribution,
    generate_manifest,
)
from .schedule import (
    BUILTIN_CONDITION_IDS,
    GROUPS,
    DatasetSource,
    ExposureReport,
    ExposureRow,
    ScheduleCondition,
    StagePlan,
    ValidationResult,
    builtin_condition,
    builtin_registry,
    compare_exposure,
    compute_exposure,
    registry_digest,
    validate_condition,
)
from .simulate import (
    CapabilityModelSpec,
    Injection,
    LossTraceSpec,
    SimStage,
    SynthCapability,
    SynthLoss,
    synth_capability,
    synth_loss,
)

__version__ = "0.1.0"

__all__ = [
    "AggregateScores",
    "BUILTIN_CONDITION_IDS",
    "COMPARISON_COLUMNS",
    "CapabilityModelSpec",
    "ComparisonTable",
    "DEFAULT_WINDOW",
    "DatasetSource",
    "EvalDataError",
    "EvalSnapshot",
    "ExposureReport",
    "ExposureRow",
    "FormatError",
    "GENERATOR_ID",
    "GROUPS",
    "GapReport",
    "Injection",
    "InvalidScheduleError",
    "LossTrace",
    "LossTraceSpec",
    "MANIFEST_FORMAT",
    "Manifest",
    "ManifestEvent",
    "ManifestSampler",
    "RollingWindow",
    "SCHEDULE_FORMAT",
    "STATE_FORMAT",
    "ScheduleCondition",
    "SimStage",
    "SpikeReport",
    "StabilitySummary",
    "StagePlan",
    "StagemixError",
    "SynthCapability",
    "SynthLoss",
    "TASKS",
    "TRAJECTORY_COLUMNS",
    "TraceError",
    "TrajectoryPoint",
    "Transition",
    "TransitionReport",
    "ValidationError",
    "ValidationResult",
    "WindowStats",
    "aggregate",
    "assemble_manifest",
    "builtin_condition",
    "builtin_registry",
    "compare_exposure",
    "comparison",
    "compute_exposure",
    "convergence_step",
    "detect_spikes",
    "empirical_distribution",
    "fmt_fixed",
    "fmt_percent",
    "gap_report",
    "generate_manifest",
    "global_std",
    "load_capability_spec",
    "load_conditions",
    "load_eval_log",
    "load_loss_spec",
    "load_loss_trace",
    "load_registry",
    "local_fluctuation",
    "read_comparison_csv",
    "read_manifest",
    "read_manifest_header",
    "read_trajectory_csv",
    "registry_digest",
    "round_half_away",
    "save_conditions",
    "save_eval_log",
    "save_loss_trace",
    "save_registry",
    "spike_frequency",
    "stability_summary",
    "stage_transition_ratio",
    "synth_capability",
    "synth_loss",
    "to_score",
    "trajectory",
    "validate_condition",
    "window_stats",
    "write_comparison_csv",
    "write_manifest",
    "write_trajectory_csv",
]
