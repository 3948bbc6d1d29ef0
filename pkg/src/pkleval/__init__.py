"""Planner-aware evaluation of object detectors.

Scores detections with a planning KL metric (PKL) computed by a deterministic
cost-map planner, alongside mAP, and reproduces the density / speed /
curvature / intersection / weather / congestion analyses on synthetic data.
"""

__version__ = "0.1.0"

from .analysis import (
    AnalysisConfig,
    bin_samples,
    congestion_boxes,
    congestion_sweep,
    curvature_per_sample,
    ego_speed,
    filter_analysis,
    run_full_analysis,
    run_pipeline,
    simulate_congestion,
    threshold_sweep,
)
from .io import emit_report, load_dataset, load_submission, save_dataset, save_submission
from .metrics import (
    ThresholdTable,
    apply_thresholds,
    average_precision,
    f1_optimal_threshold,
    match_boxes,
    mean_ap,
    spearman_rank_correlation,
)
from .planner import (
    PklEvaluator,
    PlannerParams,
    aggregate,
    build_cost_map,
    evaluate_pkl,
    kl_divergence,
    pkl_sample,
    plan_distribution,
)
from .report import BinSpec, BinnedReport, EvaluationReport
from .scene import (
    Dataset,
    ErrorModel,
    GeneratorConfig,
    ObjectBox,
    Pose2D,
    Sample,
    SceneMap,
    ScoreCalibration,
    Submission,
    generate_synthetic_dataset,
    identity_submission,
    is_on_intersection,
    simulate_detector,
)

__all__ = [
    "__version__",
    "aggregate",
    "AnalysisConfig",
    "apply_thresholds",
    "average_precision",
    "bin_samples",
    "BinnedReport",
    "BinSpec",
    "build_cost_map",
    "congestion_boxes",
    "congestion_sweep",
    "curvature_per_sample",
    "Dataset",
    "ego_speed",
    "emit_report",
    "ErrorModel",
    "evaluate_pkl",
    "EvaluationReport",
    "f1_optimal_threshold",
    "filter_analysis",
    "generate_synthetic_dataset",
    "GeneratorConfig",
    "identity_submission",
    "is_on_intersection",
    "kl_divergence",
    "load_dataset",
    "load_submission",
    "match_boxes",
    "mean_ap",
    "ObjectBox",
    "pkl_sample",
    "PklEvaluator",
    "plan_distribution",
    "PlannerParams",
    "Pose2D",
    "run_full_analysis",
    "run_pipeline",
    "Sample",
    "save_dataset",
    "save_submission",
    "SceneMap",
    "ScoreCalibration",
    "simulate_congestion",
    "simulate_detector",
    "spearman_rank_correlation",
    "Submission",
    "threshold_sweep",
    "ThresholdTable",
]
