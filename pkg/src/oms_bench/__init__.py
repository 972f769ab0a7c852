"""oms-bench: fit runtime monitors on exported classifier tensors and
evaluate them under the OOD and OMS settings."""

from .errors import (
    ConfigError,
    FitError,
    FormatError,
    OmsBenchError,
    SchemaError,
    UsageError,
    ValidationError,
)
from .evaluation import (
    EvalReport,
    EvalSetting,
    GroundTruth,
    apply_threshold,
    evaluate_binary,
    label_ground_truth,
    metrics,
    optimal_f1_threshold,
    simulate_perfect_ood,
)
from .monitors import MONITOR_KINDS, MonitorConfig, MonitorModel, ScoreVector, fit, score
from .stats import ComparisonMatrix, comparison_matrix, wilcoxon_one_sided
from .synth import SynthConfig, generate
from .tensor_io import (
    ClassifierHead,
    ScenarioBundle,
    Split,
    TensorContainer,
    bundle_to_container,
    load_bundle,
    read_container,
    read_container_file,
    validate_bundle,
    write_container,
    write_container_file,
)

__version__ = "0.1.0"

__all__ = [
    "ClassifierHead",
    "ComparisonMatrix",
    "ConfigError",
    "EvalReport",
    "EvalSetting",
    "FitError",
    "FormatError",
    "GroundTruth",
    "MONITOR_KINDS",
    "MonitorConfig",
    "MonitorModel",
    "OmsBenchError",
    "ScenarioBundle",
    "SchemaError",
    "ScoreVector",
    "Split",
    "SynthConfig",
    "TensorContainer",
    "UsageError",
    "ValidationError",
    "apply_threshold",
    "bundle_to_container",
    "comparison_matrix",
    "evaluate_binary",
    "fit",
    "generate",
    "label_ground_truth",
    "load_bundle",
    "metrics",
    "optimal_f1_threshold",
    "read_container",
    "read_container_file",
    "score",
    "simulate_perfect_ood",
    "validate_bundle",
    "wilcoxon_one_sided",
    "write_container",
    "write_container_file",
]
