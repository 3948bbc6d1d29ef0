"""Deterministic surrogate planner and the planning-KL (PKL) metric.

The planner scores a fixed fan of constant-curvature template trajectories on
a cost map built from boxes and the drivable area, and turns the path costs
into a softmax distribution over the cells each template visits at every
horizon step.  PKL is the per-step KL divergence between the distribution
conditioned on ground truth and the one conditioned on detections, summed
over the horizon.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from . import kernels
from .scene import Dataset, ObjectBox, Pose2D, Sample, SceneMap, Submission, ValidationError

OFF_MAP = -1


@dataclass(frozen=True)
class PlannerParams:
    horizon_steps: int = 8
    step_dt: float = 0.5
    n_templates: int = 25
    speeds_mps: Tuple[float, ...] = (0.0, 1.25, 2.5, 3.75, 5.0)
    max_curvature: float = 0.2
    obstacle_cost_weight: float = 4.0
    offroad_cost_weight: float = 1.0
    obstacle_sigma_m: float = 1.0
    obstacle_cutoff_sigmas: float = 6.0
    temperature: float = 1.0
    epsilon: float = 1e-12
    kl_direction: str = "gt_to_det"

    def __post_init__(self) -> None:
        object.__setattr__(self, "speeds_mps", tuple(float(v) for v in self.speeds_mps))
        if not isinstance(self.horizon_steps, int) or self.horizon_steps <= 0:
            raise ValueError("horizon_steps must be a positive integer")
        if not isinstance(self.n_templates, int) or self.n_templates <= 0:
            raise ValueError("n_templates must be a positive integer")
        if self.step_dt <= 0:
            raise ValueError("step_dt must be positive")
        if not self.speeds_mps or any(v < 0 for v in self.speeds_mps):
            raise ValueError("speeds_mps must be a non-empty list of non-negative speeds")
        if self.max_curvature < 0:
            raise ValueError("max_curvature must be non-negative")
        if self.obstacle_cost_weight < 0 or self.offroad_cost_weight < 0:
            raise ValueError("cost weights must be non-negative")
        if self.obstacle_sigma_m <= 0:
            raise ValueError("obstacle_sigma_m must be positive")
        if self.obstacle_cutoff_sigmas <= 0:
            raise ValueError("obstacle_cutoff_sigmas must be positive")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.kl_direction not in ("gt_to_det", "det_to_gt"):
            raise ValueError("kl_direction must be 'gt_to_det' or 'det_to_gt'")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["speeds_mps"] = list(self.speeds_mps)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "PlannerParams":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown planner parameter(s): {sorted(unknown)}")
        return cls(**data)


class StepDistribution(NamedTuple):
    """Sparse probabilities over flat cell indices (``OFF_MAP`` for outside the grid)."""

    cells: np.ndarray
    probs: np.ndarray


@dataclass(frozen=True, eq=False)
class TrajectoryDistribution:
    steps: Tuple[StepDistribution, ...]
    weights: np.ndarray

    def dense(self, n_cells: int) -> np.ndarray:
        """``(horizon, n_cells + 1)`` array; the last column holds off-map mass."""
        out = np.zeros((len(self.steps), n_cells + 1))
        for t, step in enumerate(self.steps):
            out[t, step.cells] = step.probs
        return out


@dataclass(frozen=True)
class PklValue:
    sample_id: str
    pkl: float


def template_trajectories(params: PlannerParams) -> np.ndarray:
    """Ego-frame waypoints, shape ``(n_speeds * n_templates, horizon, 2)``.

    Curvatures are linearly spaced in ``[-max_curvature, max_curvature]`` and
    repeated for every speed in ``speeds_mps``; x points forward, y to the left.
    """
    return _templates(params.horizon_steps, params.step_dt, params.n_templates,
                      params.speeds_mps, params.max_curvature).copy()


@lru_cache(maxsize=32)
def _templates(horizon, dt, n_templates, speeds, max_curvature) -> np.ndarray:
    if n_templates == 1:
        curvatures = np.zeros(1)
    else:
        curvatures = np.linspace(-max_curvature, max_curvature, n_templates)
    t = dt * np.arange(1, horizon + 1)
    out = []
    for v in speeds:
        s = v * t
        for k in curvatures:
            if abs(k) < 1e-12:
                x, y = s, np.zeros_like(s)
            else:
                x = np.sin(k * s) / k
                y = (1.0 - np.cos(k * s)) / k
            out.append(np.stack([x, y], axis=1))
    arr = np.asarray(out, dtype=np.float64)
    arr.flags.writeable = False
    return arr


def _box_array(boxes: Sequence[ObjectBox]) -> np.ndarray:
    return np.array(
        [(b.center_x, b.center_y, 0.5 * b.length, 0.5 * b.width, b.yaw) for b in boxes],
        dtype=np.float64,
    ).reshape(-1, 5)


def obstacle_cost(boxes: Sequence[ObjectBox], scene_map: SceneMap, params: PlannerParams) -> np.ndarray:
    """Unweighted obstacle field: sum over boxes of the Gaussian footprint kernel."""
    height, width = scene_map.shape
    return kernels.obstacle_field(
        _box_array(boxes), scene_map.origin[0], scene_map.origin[1], scene_map.resolution,
        height, width, params.obstacle_sigma_m,
        params.obstacle_cutoff_sigmas * params.obstacle_sigma_m,
    )


def build_cost_map(boxes: Sequence[ObjectBox], scene_map: SceneMap, params: PlannerParams) -> np.ndarray:
    """Cost grid with the map's shape: off-road penalty plus weighted obstacle field.

    Each box contributes ``exp(-d^2 / (2 sigma^2))`` where ``d`` is the distance
    from the cell centre to the box footprint (0 inside).  Contributions are
    truncated beyond ``obstacle_cutoff_sigmas * sigma``; boxes whose reach
    misses the grid add nothing.
    """
    field = obstacle_cost(boxes, scene_map, params)
    cost = params.obstacle_cost_weight * field
    cost += params.offroad_cost_weight * (~scene_map.drivable)
    return cost


def _waypoint_cells(scene_map: SceneMap, ego: Pose2D, params: PlannerParams) -> np.ndarray:
    tpl = _templates(params.horizon_steps, params.step_dt, params.n_templates,
                     params.speeds_mps, params.max_curvature)
    cs, sn = math.cos(ego.yaw), math.sin(ego.yaw)
    wx = ego.x + cs * tpl[..., 0] - sn * tpl[..., 1]
    wy = ego.y + sn * tpl[..., 0] + cs * tpl[..., 1]
    height, width = scene_map.shape
    cols = np.floor((wx - scene_map.origin[0]) / scene_map.resolution).astype(np.int64)
    rows = np.floor((wy - scene_map.origin[1]) / scene_map.resolution).astype(np.int64)
    inside = (cols >= 0) & (cols < width) & (rows >= 0) & (rows < height)
    return np.where(inside, rows * width + cols, OFF_MAP)


def _softmax_neg(costs: np.ndarray, temperature: float) -> np.ndarray:
    z = -(costs - costs.min()) / temperature
    w = np.exp(z)
    return w / w.sum()


def plan_distribution(
    cost: np.ndarray, scene_map: SceneMap, ego: Pose2D, params: PlannerParams
) -> TrajectoryDistribution:
    """Softmax-over-templates distribution of future ego cells.

    A template's cost is the sum of ``cost`` at the cells of its waypoints;
    waypoints leaving the grid pay the off-road weight.
    """
    if scene_map.cell_of(ego.x, ego.y) is None:
        raise ValidationError("ego pose outside map bounds")
    cells = _waypoint_cells(scene_map, ego, params)
    flat = cost.reshape(-1)
    per_wp = np.where(cells >= 0, flat[np.maximum(cells, 0)], params.offroad_cost_weight)
    weights = _softmax_neg(per_wp.sum(axis=1), params.temperature)
    steps = []
    for t in range(params.horizon_steps):
        uniq, inverse = np.unique(cells[:, t], return_inverse=True)
        probs = np.bincount(inverse, weights=weights, minlength=len(uniq))
        probs = probs / probs.sum()
        steps.append(StepDistribution(uniq, probs))
    return TrajectoryDistribution(tuple(steps), weights)


def template_weights(costs: Sequence[float], temperature: float = 1.0) -> np.ndarray:
    """Softmax of negated path costs; exposed for inspecting the planner's choice rule."""
    return _softmax_neg(np.asarray(costs, dtype=np.float64), temperature)


DistLike = Union[StepDistribution, Sequence[float], np.ndarray]


def _as_step(d: DistLike) -> StepDistribution:
    if isinstance(d, StepDistribution):
        return d
    probs = np.asarray(d, dtype=np.float64).reshape(-1)
    return StepDistribution(np.arange(len(probs)), probs)


def kl_divergence(p: DistLike, q: DistLike, epsilon: float = 1e-12, atol: float = 1e-6) -> float:
    """Smoothed ``KL(p || q)`` in nats over the union of both supports.

    Dense inputs are treated as probabilities over positions ``0..n-1``.
    """
    ps, qs = _as_step(p), _as_step(q)
    for name, d in (("p", ps), ("q", qs)):
        if np.any(d.probs < 0) or abs(float(d.probs.sum()) - 1.0) > atol:
            raise ValueError(f"{name} is not a normalised distribution")
    if len(ps.cells) == len(qs.cells) and np.array_equal(ps.cells, qs.cells):
        pv, qv = ps.probs, qs.probs
    else:
        support = np.union1d(ps.cells, qs.cells)
        pv = np.zeros(len(support))
        qv = np.zeros(len(support))
        pv[np.searchsorted(support, ps.cells)] = ps.probs
        qv[np.searchsorted(support, qs.cells)] = qs.probs
    mask = pv > 0
    terms = pv[mask] * np.log((pv[mask] + epsilon) / (qv[mask] + epsilon))
    return max(0.0, float(terms.sum()))


def distribution_kl(
    p: TrajectoryDistribution, q: TrajectoryDistribution, epsilon: float = 1e-12
) -> float:
    """Sum of per-step KL divergences over the horizon."""
    return float(sum(kl_divergence(a, b, epsilon) for a, b in zip(p.steps, q.steps)))


def _pkl_from(gt: TrajectoryDistribution, det: TrajectoryDistribution, params: PlannerParams) -> float:
    if params.kl_direction == "gt_to_det":
        return distribution_kl(gt, det, params.epsilon)
    return distribution_kl(det, gt, params.epsilon)


def sample_distribution(
    boxes: Sequence[ObjectBox], ego: Pose2D, scene_map: SceneMap, params: PlannerParams
) -> TrajectoryDistribution:
    return plan_distribution(build_cost_map(boxes, scene_map, params), scene_map, ego, params)


def pkl_sample(
    sample: Sample, det_boxes: Sequence[ObjectBox], scene_map: SceneMap, params: PlannerParams
) -> PklValue:
    gt = sample_distribution(sample.gt_boxes, sample.ego_pose, scene_map, params)
    det = sample_distribution(det_boxes, sample.ego_pose, scene_map, params)
    return PklValue(sample.sample_id, _pkl_from(gt, det, params))


class PklEvaluator:
    """Evaluates PKL over a dataset, caching the ground-truth-conditioned plans.

    Sweeps (thresholds, congestion) re-plan only the detection side.
    """

    def __init__(self, dataset: Dataset, params: PlannerParams):
        self.dataset = dataset
        self.params = params
        self._gt: Dict[str, TrajectoryDistribution] = {}

    def gt_distribution(self, sample: Sample) -> TrajectoryDistribution:
        dist = self._gt.get(sample.sample_id)
        if dist is None:
            dist = sample_distribution(
                sample.gt_boxes, sample.ego_pose, self.dataset.map_for(sample), self.params
            )
            self._gt[sample.sample_id] = dist
        return dist

    def sample_pkl(self, sample: Sample, det_boxes: Sequence[ObjectBox]) -> float:
        gt = self.gt_distribution(sample)
        det = sample_distribution(det_boxes, sample.ego_pose, self.dataset.map_for(sample), self.params)
        return _pkl_from(gt, det, self.params)

    def evaluate(self, submission: Submission) -> List[PklValue]:
        return [
            PklValue(s.sample_id, self.sample_pkl(s, submission.for_sample(s.sample_id)))
            for s in self.dataset.samples
        ]


def evaluate_pkl(
    dataset: Dataset, submission: Submission, params: PlannerParams,
    evaluator: Optional[PklEvaluator] = None,
) -> List[PklValue]:
    """One PKL value per sample in dataset order; ``submission`` should already be thresholded."""
    if evaluator is None:
        evaluator = PklEvaluator(dataset, params)
    return evaluator.evaluate(submission)


def aggregate(values: Sequence[Union[PklValue, float]], mode: str = "median") -> float:
    if len(values) == 0:
        raise ValueError("cannot aggregate an empty list of PKL values")
    arr = np.array([v.pkl if isinstance(v, PklValue) else float(v) for v in values])
    if mode == "median":
        return float(np.median(arr))
    if mode == "mean":
        return float(arr.mean())
    raise ValueError(f"unknown aggregation mode {mode!r}")
