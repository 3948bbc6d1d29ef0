"""Scene, box, map and submission types plus the seeded synthetic data sources.

Grids are indexed ``[row, col]`` with rows along +y and columns along +x.  The
centre of cell ``(r, c)`` sits at ``origin + ((c + 0.5) * res, (r + 0.5) * res)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage, stats

DEFAULT_CLASSES: Tuple[str, ...] = ("car", "pedestrian", "truck", "bicycle")
TAGS = frozenset({"rain", "night"})
MODALITIES = frozenset({"camera", "lidar", "synthetic"})

# (width, length) in metres
CLASS_FOOTPRINTS: Dict[str, Tuple[float, float]] = {
    "car": (1.9, 4.6),
    "pedestrian": (0.7, 0.7),
    "truck": (2.5, 8.0),
    "bicycle": (0.6, 1.8),
}
_CLASS_MIX = {"car": 0.55, "pedestrian": 0.25, "truck": 0.1, "bicycle": 0.1}
_VEHICLES = frozenset({"car", "truck", "bus", "trailer", "construction_vehicle"})

KEYFRAME_DT = 0.5


class ConfigError(ValueError):
    """Raised for invalid generator or detector parameters."""


class ValidationError(ValueError):
    """Raised when a dataset or submission violates its invariants."""


def normalize_angle(angle: float) -> float:
    """Wrap ``angle`` into (-pi, pi]; values already in range are returned as-is."""
    if -math.pi < angle <= math.pi:
        return float(angle)
    wrapped = math.pi - math.fmod(math.pi - angle, 2.0 * math.pi)
    if wrapped > math.pi:
        wrapped -= 2.0 * math.pi
    elif wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    yaw: float
    timestamp: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "yaw", normalize_angle(self.yaw))
        if self.timestamp < 0:
            raise ValidationError(f"negative timestamp {self.timestamp}")


@dataclass(frozen=True)
class ObjectBox:
    center_x: float
    center_y: float
    width: float
    length: float
    yaw: float
    class_name: str
    score: Optional[float] = None
    velocity: Optional[Tuple[float, float]] = None

    def __post_init__(self) -> None:
        if not (self.width > 0 and self.length > 0):
            raise ValidationError(
                f"box size must be positive, got width={self.width} length={self.length}"
            )
        if self.score is not None and not (0.0 <= self.score <= 1.0):
            raise ValidationError(f"score {self.score} outside [0, 1]")
        if self.velocity is not None:
            object.__setattr__(self, "velocity", (float(self.velocity[0]), float(self.velocity[1])))

    def with_score(self, score: Optional[float]) -> "ObjectBox":
        return ObjectBox(
            self.center_x, self.center_y, self.width, self.length, self.yaw,
            self.class_name, score, self.velocity,
        )


@dataclass(frozen=True)
class Sample:
    sample_id: str
    scene_id: str
    ego_pose: Pose2D
    gt_boxes: Tuple[ObjectBox, ...] = ()
    tags: frozenset = frozenset()

    def __post_init__(self) -> None:
        object.__setattr__(self, "gt_boxes", tuple(self.gt_boxes))
        object.__setattr__(self, "tags", frozenset(self.tags))
        unknown = self.tags - TAGS
        if unknown:
            raise ValidationError(f"sample {self.sample_id}: unknown tags {sorted(unknown)}")
        for box in self.gt_boxes:
            if box.score is not None:
                raise ValidationError(f"sample {self.sample_id}: ground-truth box carries a score")


@dataclass(frozen=True, eq=False)
class SceneMap:
    """Rasterised drivable area and intersection mask over a metric grid."""

    origin: Tuple[float, float]
    resolution: float
    drivable: np.ndarray
    intersection: np.ndarray

    def __post_init__(self) -> None:
        drivable = np.array(self.drivable, dtype=bool)
        intersection = np.array(self.intersection, dtype=bool)
        if self.resolution <= 0:
            raise ValidationError(f"map resolution must be positive, got {self.resolution}")
        if drivable.ndim != 2 or drivable.size == 0:
            raise ValidationError("drivable grid must be a non-empty 2-D array")
        if drivable.shape != intersection.shape:
            raise ValidationError(
                f"grid shapes differ: drivable {drivable.shape} vs intersection {intersection.shape}"
            )
        if np.any(intersection & ~drivable):
            raise ValidationError("intersection cells must be drivable")
        drivable.flags.writeable = False
        intersection.flags.writeable = False
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        object.__setattr__(self, "drivable", drivable)
        object.__setattr__(self, "intersection", intersection)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.drivable.shape

    def cell_of(self, x: float, y: float) -> Optional[Tuple[int, int]]:
        """Return ``(row, col)`` of the cell containing ``(x, y)``, or None if outside."""
        col = math.floor((x - self.origin[0]) / self.resolution)
        row = math.floor((y - self.origin[1]) / self.resolution)
        height, width = self.shape
        if 0 <= row < height and 0 <= col < width:
            return row, col
        return None

    def cell_centers(self) -> Tuple[np.ndarray, np.ndarray]:
        height, width = self.shape
        xs = self.origin[0] + (np.arange(width) + 0.5) * self.resolution
        ys = self.origin[1] + (np.arange(height) + 0.5) * self.resolution
        return xs, ys

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SceneMap):
            return NotImplemented
        return (
            self.origin == other.origin
            and self.resolution == other.resolution
            and np.array_equal(self.drivable, other.drivable)
            and np.array_equal(self.intersection, other.intersection)
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class Dataset:
    samples: Tuple[Sample, ...]
    maps: Mapping[str, SceneMap]
    ego_trajectories: Mapping[str, Tuple[Pose2D, ...]]
    classes: Tuple[str, ...] = DEFAULT_CLASSES
    _pose_index: Dict[str, int] = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "samples", tuple(self.samples))
        object.__setattr__(self, "classes", tuple(self.classes))
        object.__setattr__(
            self, "ego_trajectories",
            {k: tuple(v) for k, v in self.ego_trajectories.items()},
        )
        seen = set()
        index: Dict[str, int] = {}
        finished_scenes = set()
        prev_scene = None
        for sample in self.samples:
            if sample.scene_id != prev_scene:
                if sample.scene_id in finished_scenes:
                    raise ValidationError(
                        f"sample {sample.sample_id}: samples of scene {sample.scene_id} are not contiguous"
                    )
                if prev_scene is not None:
                    finished_scenes.add(prev_scene)
                prev_scene = sample.scene_id
            if sample.sample_id in seen:
                raise ValidationError(f"duplicate sample_id {sample.sample_id}")
            seen.add(sample.sample_id)
            if sample.scene_id not in self.maps:
                raise ValidationError(
                    f"sample {sample.sample_id} references unknown scene_id {sample.scene_id}"
                )
            traj = self.ego_trajectories.get(sample.scene_id)
            if traj is None:
                raise ValidationError(
                    f"sample {sample.sample_id}: scene {sample.scene_id} has no ego trajectory"
                )
            pos = _find_pose(traj, sample.ego_pose)
            if pos is None:
                raise ValidationError(
                    f"sample {sample.sample_id}: ego pose not found in scene trajectory"
                )
            index[sample.sample_id] = pos
            for box in sample.gt_boxes:
                if box.class_name not in self.classes:
                    raise ValidationError(
                        f"sample {sample.sample_id}: class {box.class_name!r} not in vocabulary"
                    )
        for scene_id, traj in self.ego_trajectories.items():
            ts = [p.timestamp for p in traj]
            if any(b <= a for a, b in zip(ts, ts[1:])):
                raise ValidationError(f"scene {scene_id}: trajectory timestamps not strictly increasing")
        object.__setattr__(self, "_pose_index", index)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def sample_ids(self) -> List[str]:
        return [s.sample_id for s in self.samples]

    def pose_index(self, sample_id: str) -> int:
        """Index of the sample's ego pose within its scene trajectory."""
        return self._pose_index[sample_id]

    def map_for(self, sample: Sample) -> SceneMap:
        return self.maps[sample.scene_id]


def _find_pose(traj: Sequence[Pose2D], pose: Pose2D) -> Optional[int]:
    times = [p.timestamp for p in traj]
    lo, hi = 0, len(times)
    while lo < hi:
        mid = (lo + hi) // 2
        if times[mid] < pose.timestamp:
            lo = mid + 1
        else:
            hi = mid
    if lo < len(traj) and traj[lo] == pose:
        return lo
    return None


@dataclass(frozen=True)
class Submission:
    method_name: str
    modality: str
    boxes: Mapping[str, Tuple[ObjectBox, ...]]

    def __post_init__(self) -> None:
        if self.modality not in MODALITIES:
            raise ValidationError(f"unknown modality {self.modality!r}")
        object.__setattr__(self, "boxes", {k: tuple(v) for k, v in self.boxes.items()})
        for sample_id, boxes in self.boxes.items():
            for box in boxes:
                if box.score is None:
                    raise ValidationError(f"sample {sample_id}: detection without score")

    def for_sample(self, sample_id: str) -> Tuple[ObjectBox, ...]:
        return self.boxes.get(sample_id, ())

    def validate_against(self, dataset: Dataset) -> "Submission":
        """Check keys against ``dataset`` and fill omitted samples with empty lists."""
        known = set(dataset.sample_ids)
        for sample_id in self.boxes:
            if sample_id not in known:
                raise ValidationError(f"submission references unknown sample_id {sample_id}")
        filled = {sid: self.boxes.get(sid, ()) for sid in dataset.sample_ids}
        return Submission(self.method_name, self.modality, filled)


def identity_submission(dataset: Dataset, method_name: str = "identity") -> Submission:
    """Detections equal to ground truth with score 1.0."""
    boxes = {s.sample_id: tuple(b.with_score(1.0) for b in s.gt_boxes) for s in dataset.samples}
    return Submission(method_name, "synthetic", boxes)


def is_on_intersection(sample: Sample, scene_map: SceneMap) -> bool:
    cell = scene_map.cell_of(sample.ego_pose.x, sample.ego_pose.y)
    if cell is None:
        raise ValidationError(f"sample {sample.sample_id}: ego pose outside map bounds")
    return bool(scene_map.intersection[cell])


# ---------------------------------------------------------------------------
# Synthetic dataset generator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GeneratorConfig:
    n_scenes: int = 60
    samples_per_scene: int = 10
    map_size_m: float = 100.0
    intersection_fraction: float = 0.3
    mean_objects: float = 30.0
    rain_fraction: float = 0.2
    night_fraction: float = 0.1
    resolution: float = 0.5
    road_width_m: float = 10.0
    pose_rate_hz: float = 10.0
    localization_noise_m: float = 0.01
    object_radius_m: float = 40.0
    classes: Tuple[str, ...] = DEFAULT_CLASSES

    def __post_init__(self) -> None:
        object.__setattr__(self, "classes", tuple(self.classes))
        for name in ("n_scenes", "samples_per_scene"):
            value = getattr(self, name)
            if not isinstance(value, int) or value <= 0:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        for name in ("map_size_m", "mean_objects", "resolution", "road_width_m",
                     "pose_rate_hz", "object_radius_m"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)!r}")
        for name in ("intersection_fraction", "rain_fraction", "night_fraction"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {value!r}")
        if self.localization_noise_m < 0:
            raise ConfigError("localization_noise_m must be non-negative")
        steps = KEYFRAME_DT * self.pose_rate_hz
        if abs(steps - round(steps)) > 1e-9:
            raise ConfigError("pose_rate_hz must give an integer number of poses per keyframe")
        if not self.classes:
            raise ConfigError("classes must be non-empty")
        if self.max_speed <= 0:
            raise ConfigError(
                f"map_size_m={self.map_size_m} leaves no room for ego motion; increase it"
            )

    @property
    def margin_m(self) -> float:
        return 20.0

    @property
    def duration_s(self) -> float:
        return (self.samples_per_scene - 1) * KEYFRAME_DT + 2 * KEYFRAME_DT

    @property
    def max_speed(self) -> float:
        return min(12.0, (self.map_size_m - 2 * self.margin_m) / self.duration_s)


_SCENE_KINDS = ("stationary", "stopgo", "cruise")
_SCENE_KIND_P = (0.12, 0.18, 0.70)


def _speed_profile(rng: np.random.Generator, t: np.ndarray, cfg: GeneratorConfig) -> np.ndarray:
    kind = _SCENE_KINDS[rng.choice(3, p=_SCENE_KIND_P)]
    v0 = rng.uniform(0.5, cfg.max_speed)
    phase = rng.uniform(0, 2 * np.pi)
    if kind == "stationary":
        return np.zeros_like(t)
    v = v0 * (1.0 + 0.1 * np.sin(2 * np.pi * t / max(t[-1], 1e-9) + phase))
    v = np.minimum(v, cfg.max_speed)
    if kind == "stopgo":
        t_stop = rng.uniform(0.2, 0.5) * t[-1]
        t_go = t_stop + rng.uniform(0.2, 0.4) * t[-1]
        ramp = 1.0
        scale = np.clip(np.maximum((t_stop - t) / ramp, (t - t_go) / ramp), 0.0, 1.0)
        v = v * scale
    return v


def _curvature_profile(rng: np.random.Generator, s_grid: np.ndarray, length: float) -> np.ndarray:
    kappa = np.zeros_like(s_grid)
    roll = rng.random()
    if roll < 0.35 and length > 1.0:
        k = rng.uniform(0.02, 0.15) * rng.choice((-1.0, 1.0))
        angle = rng.uniform(np.pi / 6, np.pi / 2)
        span = angle / abs(k)
        start = rng.uniform(0.0, length)
        kappa[(s_grid >= start) & (s_grid < start + span)] = k
    elif roll < 0.7:
        kappa[(s_grid >= 0) & (s_grid <= length)] = rng.uniform(0.002, 0.02) * rng.choice((-1.0, 1.0))
    return kappa


def _generate_scene(
    rng: np.random.Generator, scene_id: str, cfg: GeneratorConfig, phase_quantile: float,
) -> Tuple[SceneMap, Tuple[Pose2D, ...], List[Sample]]:
    per_key = int(round(KEYFRAME_DT * cfg.pose_rate_hz))
    n_poses = (cfg.samples_per_scene + 1) * per_key + 1
    t = np.arange(n_poses) / cfg.pose_rate_hz
    v = _speed_profile(rng, t, cfg)
    s_t = np.concatenate(([0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) * np.diff(t))))
    length = float(s_t[-1])

    ext = 45.0
    ds = 0.05
    s_grid = np.arange(-ext, length + ext + ds, ds)
    kappa = _curvature_profile(rng, s_grid, length)
    theta0 = rng.uniform(-np.pi, np.pi)
    i0 = int(np.searchsorted(s_grid, 0.0))
    theta = theta0 + np.cumsum(kappa) * ds
    theta -= theta[i0] - theta0
    px = np.cumsum(np.cos(theta)) * ds
    py = np.cumsum(np.sin(theta)) * ds
    px -= px[i0]
    py -= py[i0]

    ego_x = np.interp(s_t, s_grid, px)
    ego_y = np.interp(s_t, s_grid, py)
    ego_yaw = np.interp(s_t, s_grid, theta)
    if cfg.localization_noise_m > 0:
        unique_s, inverse = np.unique(s_t, return_inverse=True)
        noise = rng.normal(0.0, cfg.localization_noise_m, size=(len(unique_s), 2))
        if len(unique_s) > 1:
            ego_x = ego_x + noise[inverse, 0]
            ego_y = ego_y + noise[inverse, 1]

    # square map centred on the ego path's bounding box, snapped to the grid
    cx = 0.5 * (ego_x.min() + ego_x.max())
    cy = 0.5 * (ego_y.min() + ego_y.max())
    res = cfg.resolution
    n_cells = int(math.ceil(cfg.map_size_m / res))
    origin = (
        math.floor((cx - 0.5 * n_cells * res) / res) * res,
        math.floor((cy - 0.5 * n_cells * res) / res) * res,
    )
    xs = origin[0] + (np.arange(n_cells) + 0.5) * res
    ys = origin[1] + (np.arange(n_cells) + 0.5) * res
    gx, gy = np.meshgrid(xs, ys)

    half_w = 0.5 * cfg.road_width_m
    centerline = np.zeros((n_cells, n_cells), dtype=bool)
    cols = np.floor((px - origin[0]) / res).astype(int)
    rows = np.floor((py - origin[1]) / res).astype(int)
    inside = (cols >= 0) & (cols < n_cells) & (rows >= 0) & (rows < n_cells)
    centerline[rows[inside], cols[inside]] = True
    if centerline.any():
        dist = ndimage.distance_transform_edt(~centerline) * res
        drivable = dist <= half_w
    else:
        drivable = np.zeros_like(centerline)
    intersection = np.zeros_like(drivable)

    f = cfg.intersection_fraction
    if f > 0:
        spacing = cfg.road_width_m / f
        phase = phase_quantile * spacing
        for s_j in np.arange(-spacing + phase, length + spacing, spacing):
            j = int(np.clip(np.searchsorted(s_grid, s_j), 0, len(s_grid) - 1))
            tx, ty = math.cos(theta[j]), math.sin(theta[j])
            along = (gx - px[j]) * tx + (gy - py[j]) * ty
            across = -(gx - px[j]) * ty + (gy - py[j]) * tx
            in_strip = np.abs(along) <= half_w
            drivable |= in_strip & (np.abs(across) <= 40.0)
            intersection |= in_strip & (np.abs(across) <= half_w)
        intersection &= drivable

    scene_map = SceneMap(origin, res, drivable, intersection)

    poses = tuple(
        Pose2D(float(x), float(y), float(yaw), float(ts))
        for x, y, yaw, ts in zip(ego_x, ego_y, ego_yaw, t)
    )
    tags = set()
    if rng.random() < cfg.rain_fraction:
        tags.add("rain")
    if rng.random() < cfg.night_fraction:
        tags.add("night")

    classes = list(cfg.classes)
    mix = np.array([_CLASS_MIX.get(c, 0.1) for c in classes])
    mix = mix / mix.sum()
    samples = []
    for k in range(cfg.samples_per_scene):
        idx = (k + 1) * per_key
        ego = poses[idx]
        boxes = _sample_objects(rng, ego, scene_map, classes, mix, cfg, px, py, theta)
        samples.append(
            Sample(f"{scene_id}-{k:03d}", scene_id, ego, tuple(boxes), frozenset(tags))
        )
    return scene_map, poses, samples


def _sample_objects(rng, ego, scene_map, classes, mix, cfg, px, py, theta):
    shape = 3.0
    lam = rng.gamma(shape, cfg.mean_objects / shape)
    n = int(rng.poisson(lam))
    r_min, r_max = 4.0, cfg.object_radius_m
    boxes = []
    for _ in range(n):
        cls = classes[rng.choice(len(classes), p=mix)]
        vehicle = cls in _VEHICLES
        for _attempt in range(30):
            r = math.sqrt(rng.uniform(r_min ** 2, r_max ** 2))
            a = rng.uniform(-math.pi, math.pi)
            x = ego.x + r * math.cos(a)
            y = ego.y + r * math.sin(a)
            cell = scene_map.cell_of(x, y)
            if not vehicle or (cell is not None and scene_map.drivable[cell]):
                break
        if vehicle:
            j = int(np.argmin((px - x) ** 2 + (py - y) ** 2))
            yaw = theta[j] + (math.pi if rng.random() < 0.5 else 0.0) + rng.normal(0.0, 0.05)
            speed = rng.uniform(0.0, 10.0)
        else:
            yaw = rng.uniform(-math.pi, math.pi)
            speed = rng.uniform(0.0, 1.5)
        w0, l0 = CLASS_FOOTPRINTS.get(cls, (1.0, 1.0))
        scale = rng.uniform(0.9, 1.1)
        yaw = normalize_angle(float(yaw))
        boxes.append(
            ObjectBox(
                float(x), float(y), float(w0 * scale), float(l0 * scale), yaw, cls,
                None, (float(speed * math.cos(yaw)), float(speed * math.sin(yaw))),
            )
        )
    return boxes


def generate_synthetic_dataset(config: GeneratorConfig, seed: int) -> Dataset:
    """Build a deterministic desk-scale dataset for ``(config, seed)``."""
    root = np.random.SeedSequence(seed)
    layout_seq, scene_seq = root.spawn(2)
    children = scene_seq.spawn(config.n_scenes)
    # crossing phases are stratified over scenes so the dataset-level fraction
    # of intersection samples stays close to intersection_fraction
    layout = np.random.default_rng(layout_seq)
    quantiles = (layout.permutation(config.n_scenes) + layout.random(config.n_scenes)) / config.n_scenes
    maps: Dict[str, SceneMap] = {}
    trajectories: Dict[str, Tuple[Pose2D, ...]] = {}
    samples: List[Sample] = []
    for i, child in enumerate(children):
        scene_id = f"scene-{i:04d}"
        scene_map, poses, scene_samples = _generate_scene(
            np.random.default_rng(child), scene_id, config, float(quantiles[i])
        )
        maps[scene_id] = scene_map
        trajectories[scene_id] = poses
        samples.extend(scene_samples)
    return Dataset(tuple(samples), maps, trajectories, config.classes)


# ---------------------------------------------------------------------------
# Synthetic detector
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScoreCalibration:
    """Maps localisation error to confidence.

    A kept box scores ``exp(-error / error_scale_m) + noise_sigma * z`` clipped to
    [0, 1]; false positives score ``Beta(fp_alpha, fp_beta)``.  ``noise_sigma=0``
    is the perfectly calibrated case.
    """

    error_scale_m: float = 1.0
    noise_sigma: float = 0.0
    fp_alpha: float = 2.0
    fp_beta: float = 5.0

    def __post_init__(self) -> None:
        if self.error_scale_m <= 0:
            raise ConfigError("score_calibration.error_scale_m must be positive")
        if self.noise_sigma < 0:
            raise ConfigError("score_calibration.noise_sigma must be non-negative")
        if self.fp_alpha <= 0 or self.fp_beta <= 0:
            raise ConfigError("score_calibration.fp_alpha/fp_beta must be positive")


@dataclass(frozen=True)
class ErrorModel:
    drop_rate: float = 0.0
    fp_rate: float = 0.0
    depth_noise_sigma_m: float = 0.0
    lateral_noise_sigma_m: float = 0.0
    score_calibration: ScoreCalibration = field(default_factory=ScoreCalibration)
    fp_radius_m: float = 40.0

    def __post_init__(self) -> None:
        if isinstance(self.score_calibration, Mapping):
            object.__setattr__(self, "score_calibration", ScoreCalibration(**self.score_calibration))
        for name in ("drop_rate", "fp_rate"):
            value = getattr(self, name)
            if not 0.0 <= value < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1), got {value!r}")
        for name in ("depth_noise_sigma_m", "lateral_noise_sigma_m"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative, got {getattr(self, name)!r}")
        if self.fp_radius_m <= 4.0:
            raise ConfigError("fp_radius_m must exceed 4 m")


def simulate_detector(
    dataset: Dataset, error_model: ErrorModel, seed: int, method_name: str = "synthetic",
    modality: str = "synthetic",
) -> Submission:
    """Perturb ground truth into a scored detection set.

    Random draws per sample are taken in a fixed layout that does not depend on
    the error-model values, so sweeps over one parameter at a fixed seed are
    coupled (the same boxes drop, the same unit noise is scaled).
    """
    em = error_model
    cal = em.score_calibration
    vocab = list(dataset.classes)
    out: Dict[str, Tuple[ObjectBox, ...]] = {}
    for index, sample in enumerate(dataset.samples):
        rng = np.random.default_rng(np.random.SeedSequence([seed, index]))
        gts = sample.gt_boxes
        n = len(gts)
        u_drop = rng.random(n)
        z = rng.standard_normal((n, 3))
        u_fp = rng.random((n, 5))
        ego = sample.ego_pose
        dets: List[ObjectBox] = []
        for i, box in enumerate(gts):
            if u_drop[i] < em.drop_rate:
                continue
            dx, dy = box.center_x - ego.x, box.center_y - ego.y
            dist = math.hypot(dx, dy)
            if dist > 0:
                ux, uy = dx / dist, dy / dist
            else:
                ux, uy = math.cos(ego.yaw), math.sin(ego.yaw)
            d_err = em.depth_noise_sigma_m * z[i, 0]
            l_err = em.lateral_noise_sigma_m * z[i, 1]
            cx = box.center_x + d_err * ux - l_err * uy
            cy = box.center_y + d_err * uy + l_err * ux
            err = math.hypot(d_err, l_err)
            score = math.exp(-err / cal.error_scale_m) + cal.noise_sigma * z[i, 2]
            score = min(1.0, max(0.0, score))
            dets.append(
                ObjectBox(cx, cy, box.width, box.length, box.yaw, box.class_name, score, box.velocity)
            )
        for i in range(n):
            if u_fp[i, 0] >= em.fp_rate:
                continue
            r = math.sqrt(4.0 ** 2 + u_fp[i, 1] * (em.fp_radius_m ** 2 - 4.0 ** 2))
            a = 2 * math.pi * u_fp[i, 2]
            cls = gts[int(u_fp[i, 3] * n) % n].class_name if n else vocab[0]
            w0, l0 = CLASS_FOOTPRINTS.get(cls, (1.0, 1.0))
            score = float(stats.beta.ppf(u_fp[i, 4], cal.fp_alpha, cal.fp_beta))
            dets.append(
                ObjectBox(
                    ego.x + r * math.cos(a), ego.y + r * math.sin(a), w0, l0,
                    normalize_angle(a + math.pi / 2), cls, min(1.0, max(0.0, score)), (0.0, 0.0),
                )
            )
        out[sample.sample_id] = tuple(dets)
    return Submission(method_name, modality, out)
