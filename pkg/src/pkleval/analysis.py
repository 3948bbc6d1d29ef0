"""Conditioned analyses over per-sample PKL: binning, filters, sweeps, congestion."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .metrics import (
    DEFAULT_DIST_THRESHOLDS,
    F1_DIST_THRESHOLD,
    DetectionEvaluator,
    ThresholdTable,
    apply_thresholds,
    optimal_thresholds,
)
from .planner import PklEvaluator, PklValue, PlannerParams, aggregate
from .report import (
    CURVATURE_BINS,
    OBJECT_COUNT_BINS,
    SPEED_BINS,
    BinnedReport,
    BinSpec,
    CongestionTable,
    EvaluationReport,
    FilterResult,
    MetricRow,
    ThresholdSweep,
)
from .scene import CLASS_FOOTPRINTS, Dataset, ObjectBox, Pose2D, Sample, Submission, is_on_intersection, normalize_angle

log = logging.getLogger(__name__)

CURVATURE_OUTLIER = 0.1
DEFAULT_SWEEP = tuple(round(0.1 * i, 1) for i in range(10))
DEFAULT_CONGESTION_N = (5, 10, 20, 30)
DEFAULT_CONGESTION_D = (5.0, 10.0, 15.0, 20.0)


# ---------------------------------------------------------------------------
# Per-sample covariates
# ---------------------------------------------------------------------------

def ego_speed(sample: Sample, trajectory: Sequence[Pose2D]) -> float:
    """Speed at the sample's pose by finite differences over neighbouring poses."""
    if len(trajectory) < 2:
        raise ValueError("trajectory needs at least two poses to estimate speed")
    try:
        i = list(trajectory).index(sample.ego_pose)
    except ValueError:
        raise ValueError(f"sample {sample.sample_id}: pose not in trajectory") from None
    return speed_at(trajectory, i)


def speed_at(trajectory: Sequence[Pose2D], i: int) -> float:
    lo = max(i - 1, 0)
    hi = min(i + 1, len(trajectory) - 1)
    a, b = trajectory[lo], trajectory[hi]
    return math.hypot(b.x - a.x, b.y - a.y) / (b.timestamp - a.timestamp)


def gaussian_smooth(values: np.ndarray, sigma: float) -> np.ndarray:
    """Discrete Gaussian filter truncated at 3 sigma and renormalised at the ends."""
    values = np.asarray(values, dtype=np.float64)
    half = max(1, int(math.ceil(3.0 * sigma)))
    k = np.arange(-half, half + 1)
    w = np.exp(-0.5 * (k / sigma) ** 2)
    n = len(values)
    num = np.convolve(values, w, mode="full")[half:half + n]
    den = np.convolve(np.ones(n), w, mode="full")[half:half + n]
    return num / den


def curvature_per_sample(
    trajectory: Sequence[Pose2D], gaussian_sigma: float = 2.0, zero_tol: float = 1e-9,
    min_speed: float = 1e-6,
) -> np.ndarray:
    """Unsigned curvature (1/m) at every pose of a smoothed trajectory.

    Positions are Gaussian-smoothed over pose steps, then differentiated against
    time.  Poses with (smoothed) speed below ``min_speed`` get curvature 0, and
    values below ``zero_tol`` are snapped to exactly 0.
    """
    if len(trajectory) < 5:
        raise ValueError("curvature needs at least 5 poses")
    if gaussian_sigma <= 0:
        raise ValueError("gaussian_sigma must be positive")
    t = np.array([p.timestamp for p in trajectory])
    x = gaussian_smooth(np.array([p.x for p in trajectory]), gaussian_sigma)
    y = gaussian_smooth(np.array([p.y for p in trajectory]), gaussian_sigma)
    dx, dy = np.gradient(x, t), np.gradient(y, t)
    ddx, ddy = np.gradient(dx, t), np.gradient(dy, t)
    speed2 = dx * dx + dy * dy
    moving = speed2 > min_speed ** 2
    kappa = np.zeros(len(t))
    kappa[moving] = np.abs(dx * ddy - dy * ddx)[moving] / speed2[moving] ** 1.5
    kappa[kappa < zero_tol] = 0.0
    return kappa


def curvature_outliers(curvatures: Sequence[float], threshold: float = CURVATURE_OUTLIER) -> np.ndarray:
    return np.asarray(curvatures) > threshold


def sample_values(dataset: Dataset, kind: str, gaussian_sigma: float = 2.0) -> Dict[str, float]:
    """Covariate per sample id for one of the bin kinds."""
    if kind == "object_count":
        return {s.sample_id: float(len(s.gt_boxes)) for s in dataset.samples}
    if kind == "ego_speed":
        return {
            s.sample_id: speed_at(dataset.ego_trajectories[s.scene_id], dataset.pose_index(s.sample_id))
            for s in dataset.samples
        }
    if kind == "curvature":
        per_scene = {
            sid: curvature_per_sample(traj, gaussian_sigma)
            for sid, traj in dataset.ego_trajectories.items()
        }
        return {
            s.sample_id: float(per_scene[s.scene_id][dataset.pose_index(s.sample_id)])
            for s in dataset.samples
        }
    raise ValueError(f"unknown value kind {kind!r}")


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------

@dataclass
class PipelineResult:
    """Outputs of thresholding + planning for one submission."""

    thresholds: ThresholdTable
    thresholded: Submission
    pkl_values: List[PklValue]
    detections: DetectionEvaluator
    planner: PklEvaluator
    dist_thresholds: Tuple[float, ...] = DEFAULT_DIST_THRESHOLDS

    @property
    def median_pkl(self) -> float:
        return aggregate(self.pkl_values, "median")

    @property
    def mean_pkl(self) -> float:
        return aggregate(self.pkl_values, "mean")

    def map(self, sample_ids=None) -> float:
        return self.detections.mean_ap(self.dist_thresholds, sample_ids)


def run_pipeline(
    dataset: Dataset, submission: Submission, params: PlannerParams,
    dist_thresholds: Sequence[float] = DEFAULT_DIST_THRESHOLDS,
    f1_dist_threshold: float = F1_DIST_THRESHOLD,
    planner: Optional[PklEvaluator] = None,
) -> PipelineResult:
    """F1-optimal thresholds, thresholded PKL, and mAP on the raw submission."""
    submission = submission.validate_against(dataset)
    det = DetectionEvaluator(dataset, submission)
    table = optimal_thresholds(dataset, submission, f1_dist_threshold, evaluator=det)
    kept = apply_thresholds(submission, table)
    planner = planner or PklEvaluator(dataset, params)
    values = planner.evaluate(kept)
    return PipelineResult(table, kept, values, det, planner, tuple(dist_thresholds))


def _row(label: str, ids: Sequence[str], pkl_by_id: Mapping[str, float],
         det: Optional[DetectionEvaluator], dist_thresholds, warn_below: int) -> MetricRow:
    if not ids:
        return MetricRow(label, 0)
    vals = np.array([pkl_by_id[i] for i in ids])
    m = det.mean_ap(dist_thresholds, ids) if det is not None else None
    unstable = len(ids) < warn_below
    if unstable:
        log.debug("bin %s has only %d samples; mAP is unstable", label, len(ids))
    return MetricRow(label, len(ids), float(np.median(vals)), float(vals.mean()), m, unstable)


def _pkl_map(dataset: Dataset, pkl_values: Sequence[PklValue]) -> Dict[str, float]:
    if len(pkl_values) != len(dataset.samples) or any(
        v.sample_id != s.sample_id for v, s in zip(pkl_values, dataset.samples)
    ):
        raise ValueError("pkl_values are not aligned with dataset samples")
    return {v.sample_id: v.pkl for v in pkl_values}


def bin_samples(
    dataset: Dataset, submission: Submission, pkl_values: Sequence[PklValue], spec: BinSpec,
    value_fn: Union[str, Callable[[Sample], float], Mapping[str, float], None] = None,
    *, detections: Optional[DetectionEvaluator] = None,
    dist_thresholds: Sequence[float] = DEFAULT_DIST_THRESHOLDS,
    gaussian_sigma: float = 2.0, warn_below: int = 30,
) -> BinnedReport:
    """Assign samples to ``spec``'s bins and report median PKL and mAP per bin.

    ``value_fn`` defaults to ``spec.kind``; a mapping or callable may supply
    custom per-sample values.  Samples outside every bin are counted in
    ``n_excluded`` (for curvature this includes the > 0.1 outliers).
    """
    pkl_by_id = _pkl_map(dataset, pkl_values)
    if value_fn is None or isinstance(value_fn, str):
        values = sample_values(dataset, value_fn or spec.kind, gaussian_sigma)
    elif callable(value_fn):
        values = {s.sample_id: float(value_fn(s)) for s in dataset.samples}
    else:
        values = dict(value_fn)
    det = detections or DetectionEvaluator(dataset, submission.validate_against(dataset))
    members: List[List[str]] = [[] for _ in range(spec.n_bins)]
    excluded = 0
    for s in dataset.samples:
        b = spec.assign(values[s.sample_id])
        if b is None:
            excluded += 1
        else:
            members[b].append(s.sample_id)
    rows = tuple(
        _row(label, ids, pkl_by_id, det, dist_thresholds, warn_below)
        for label, ids in zip(spec.labels(), members)
    )
    everything = _row("All scenes", dataset.sample_ids, pkl_by_id, det, dist_thresholds, 0)
    return BinnedReport(spec, rows, everything, excluded)


Predicate = Union[str, Callable[[Sample, Dataset], bool]]


def _predicate(pred: Predicate) -> Tuple[str, Callable[[Sample, Dataset], bool]]:
    if callable(pred):
        return getattr(pred, "__name__", "custom"), pred
    if pred == "intersection":
        return "intersection", lambda s, ds: is_on_intersection(s, ds.map_for(s))
    if pred in ("rain", "night", "tag=rain", "tag=night"):
        tag = pred.split("=")[-1]
        return tag, lambda s, ds: tag in s.tags
    raise ValueError(f"unknown predicate {pred!r}")


def filter_analysis(
    dataset: Dataset, submission: Submission, pkl_values: Sequence[PklValue], predicate: Predicate,
    *, detections: Optional[DetectionEvaluator] = None,
    dist_thresholds: Sequence[float] = DEFAULT_DIST_THRESHOLDS,
) -> FilterResult:
    pkl_by_id = _pkl_map(dataset, pkl_values)
    name, fn = _predicate(predicate)
    det = detections or DetectionEvaluator(dataset, submission.validate_against(dataset))
    ids = [s.sample_id for s in dataset.samples if fn(s, dataset)]
    row = _row(name, ids, pkl_by_id, det, dist_thresholds, 0)
    everything = _row("All scenes", dataset.sample_ids, pkl_by_id, det, dist_thresholds, 0)
    return FilterResult(name, row, everything)


def threshold_sweep(
    dataset: Dataset, submission: Submission, class_name: str,
    thresholds: Sequence[float] = DEFAULT_SWEEP, base_table: Optional[Mapping[str, float]] = None,
    params: Optional[PlannerParams] = None, *, planner: Optional[PklEvaluator] = None,
) -> List[Tuple[float, float]]:
    """Median PKL with ``class_name``'s threshold overridden by each value in turn."""
    params = params or (planner.params if planner else PlannerParams())
    planner = planner or PklEvaluator(dataset, params)
    submission = submission.validate_against(dataset)
    if base_table is None:
        base_table = optimal_thresholds(dataset, submission)
    base = ThresholdTable(base_table)
    out = []
    for t in thresholds:
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"sweep threshold {t} outside [0, 1]")
        values = planner.evaluate(apply_thresholds(submission, base.with_override(class_name, t)))
        out.append((float(t), aggregate(values)))
    return out


def congestion_boxes(
    ego: Pose2D, n_cars: int, radius: float, footprint: Tuple[float, float] = CLASS_FOOTPRINTS["car"],
) -> List[ObjectBox]:
    """``n_cars`` car detections evenly spaced on a circle around the ego, yawed tangentially.

    The first car sits straight ahead of the ego heading.
    """
    width, length = footprint
    if n_cars < 1:
        raise ValueError("n_cars must be at least 1")
    if radius <= 0.5 * length:
        raise ValueError(
            f"radius {radius} m is too small for {length} m cars around the ego"
        )
    out = []
    for k in range(n_cars):
        a = ego.yaw + 2.0 * math.pi * k / n_cars
        out.append(
            ObjectBox(
                ego.x + radius * math.cos(a), ego.y + radius * math.sin(a), width, length,
                normalize_angle(a + 0.5 * math.pi), "car", 1.0, (0.0, 0.0),
            )
        )
    return out


def simulate_congestion(
    dataset: Dataset, n_cars: int, radius: float, params: Optional[PlannerParams] = None,
    *, keep_gt: bool = True, planner: Optional[PklEvaluator] = None,
) -> float:
    """Median PKL when a ring of hallucinated cars is added around every ego."""
    params = params or (planner.params if planner else PlannerParams())
    planner = planner or PklEvaluator(dataset, params)
    vals = []
    for s in dataset.samples:
        ring = congestion_boxes(s.ego_pose, n_cars, radius)
        dets = (list(s.gt_boxes) if keep_gt else []) + ring
        vals.append(planner.sample_pkl(s, dets))
    return float(np.median(vals))


def congestion_sweep(
    dataset: Dataset, n_cars: Sequence[int] = DEFAULT_CONGESTION_N,
    radii: Sequence[float] = DEFAULT_CONGESTION_D, params: Optional[PlannerParams] = None,
    *, keep_gt: bool = True, planner: Optional[PklEvaluator] = None,
) -> CongestionTable:
    params = params or (planner.params if planner else PlannerParams())
    planner = planner or PklEvaluator(dataset, params)
    values = tuple(
        tuple(simulate_congestion(dataset, n, d, keep_gt=keep_gt, planner=planner) for d in radii)
        for n in n_cars
    )
    return CongestionTable(tuple(int(n) for n in n_cars), tuple(float(d) for d in radii), values, keep_gt)


# ---------------------------------------------------------------------------
# Orchestration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AnalysisConfig:
    bins: Tuple[BinSpec, ...] = (OBJECT_COUNT_BINS, SPEED_BINS, CURVATURE_BINS)
    filters: Tuple[str, ...] = ("intersection", "rain", "night")
    gaussian_sigma: float = 2.0
    dist_thresholds: Tuple[float, ...] = DEFAULT_DIST_THRESHOLDS
    f1_dist_threshold: float = F1_DIST_THRESHOLD
    warn_below: int = 30
    sweep_enabled: bool = False
    sweep_class: str = "car"
    sweep_thresholds: Tuple[float, ...] = DEFAULT_SWEEP
    congestion_enabled: bool = False
    congestion_n_cars: Tuple[int, ...] = DEFAULT_CONGESTION_N
    congestion_radii: Tuple[float, ...] = DEFAULT_CONGESTION_D
    congestion_keep_gt: bool = True

    @classmethod
    def from_dict(cls, data: Mapping) -> "AnalysisConfig":
        data = dict(data)
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown analysis option(s): {sorted(unknown)}")
        if "bins" in data:
            data["bins"] = tuple(
                b if isinstance(b, BinSpec) else BinSpec(b["kind"], tuple(b["edges"]), b.get("include_zero_bin", False))
                for b in data["bins"]
            )
        for key in ("filters", "dist_thresholds", "sweep_thresholds", "congestion_n_cars", "congestion_radii"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)

    def to_dict(self) -> dict:
        return {
            "bins": [
                {"kind": b.kind, "edges": list(b.edges), "include_zero_bin": b.include_zero_bin}
                for b in self.bins
            ],
            "filters": list(self.filters),
            "gaussian_sigma": self.gaussian_sigma,
            "dist_thresholds": list(self.dist_thresholds),
            "f1_dist_threshold": self.f1_dist_threshold,
            "warn_below": self.warn_below,
            "sweep_enabled": self.sweep_enabled,
            "sweep_class": self.sweep_class,
            "sweep_thresholds": list(self.sweep_thresholds),
            "congestion_enabled": self.congestion_enabled,
            "congestion_n_cars": list(self.congestion_n_cars),
            "congestion_radii": list(self.congestion_radii),
            "congestion_keep_gt": self.congestion_keep_gt,
        }


def build_report(
    dataset: Dataset, submission: Submission, result: PipelineResult,
    config: AnalysisConfig = AnalysisConfig(), provenance: Optional[dict] = None,
    *, analyses: bool = True,
) -> EvaluationReport:
    binned: Tuple[BinnedReport, ...] = ()
    filters: Tuple[FilterResult, ...] = ()
    sweep = None
    cong = None
    if analyses:
        binned = tuple(
            bin_samples(
                dataset, submission, result.pkl_values, spec, detections=result.detections,
                dist_thresholds=config.dist_thresholds, gaussian_sigma=config.gaussian_sigma,
                warn_below=config.warn_below,
            )
            for spec in config.bins
        )
        filters = tuple(
            filter_analysis(
                dataset, submission, result.pkl_values, p, detections=result.detections,
                dist_thresholds=config.dist_thresholds,
            )
            for p in config.filters
        )
        if config.sweep_enabled:
            rows = threshold_sweep(
                dataset, submission, config.sweep_class, config.sweep_thresholds,
                result.thresholds, planner=result.planner,
            )
            sweep = ThresholdSweep(
                config.sweep_class, result.thresholds.get(config.sweep_class, 0.0),
                result.median_pkl, tuple(rows),
            )
        if config.congestion_enabled:
            cong = congestion_sweep(
                dataset, config.congestion_n_cars, config.congestion_radii,
                keep_gt=config.congestion_keep_gt, planner=result.planner,
            )
    return EvaluationReport(
        submission.method_name, submission.modality, len(dataset), result.median_pkl,
        result.mean_pkl, result.map(), dict(result.thresholds), binned, filters, sweep, cong,
        dict(provenance or {}),
    )


def run_full_analysis(
    dataset: Dataset, submission: Submission, params: PlannerParams,
    config: AnalysisConfig = AnalysisConfig(), provenance: Optional[dict] = None,
) -> EvaluationReport:
    """Threshold, plan, and run every configured analysis for one submission."""
    result = run_pipeline(
        dataset, submission, params, config.dist_thresholds, config.f1_dist_threshold,
    )
    return build_report(dataset, submission.validate_against(dataset), result, config, provenance)
