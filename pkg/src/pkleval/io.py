"""JSON file formats, validation on load, and report rendering.

Dataset file::

    {"format": "pkleval-dataset", "version": 1, "classes": [...],
     "scenes": [{"scene_id": ..., "map": {"origin": [x, y], "resolution": r,
                 "width": W, "height": H, "drivable": [0/1 ...], "intersection": [0/1 ...]},
                 "ego_trajectory": [pose, ...],
                 "samples": [{"sample_id", "timestamp", "ego_pose", "tags", "gt_boxes"}]}]}

Submission file::

    {"method_name": ..., "modality": "camera|lidar|synthetic",
     "results": {sample_id: [box-with-score, ...]}}

Grids are row-major (row 0 is the lowest y).  A pose is ``{x, y, yaw, timestamp}``;
a box is ``{center_x, center_y, width, length, yaw, class_name[, score][, velocity]}``.
"""

from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import os
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np

from .planner import PklValue
from .report import BinnedReport, EvaluationReport, MetricRow
from .scene import (
    Dataset,
    ObjectBox,
    Pose2D,
    Sample,
    SceneMap,
    Submission,
    ValidationError,
)

PathLike = Union[str, os.PathLike]
DATASET_FORMAT = "pkleval-dataset"
FORMATS = ("csv", "markdown", "json")

_BIN_TITLES = {
    "object_count": ("Number of objects", "Number of objects"),
    "ego_speed": ("Ego speed", "Speed range"),
    "curvature": ("Road curvature", "Curvature range"),
}


# ---------------------------------------------------------------------------
# encoding helpers
# ---------------------------------------------------------------------------

def _pose_dict(p: Pose2D) -> dict:
    return {"x": p.x, "y": p.y, "yaw": p.yaw, "timestamp": p.timestamp}


def _box_dict(b: ObjectBox) -> dict:
    d = {
        "center_x": b.center_x, "center_y": b.center_y, "width": b.width, "length": b.length,
        "yaw": b.yaw, "class_name": b.class_name,
    }
    if b.score is not None:
        d["score"] = b.score
    if b.velocity is not None:
        d["velocity"] = list(b.velocity)
    return d


def _grid_list(grid: np.ndarray) -> List[int]:
    return grid.astype(np.uint8).reshape(-1).tolist()


def dataset_to_dict(dataset: Dataset) -> dict:
    scenes: Dict[str, dict] = {}
    for scene_id, m in dataset.maps.items():
        height, width = m.shape
        scenes[scene_id] = {
            "scene_id": scene_id,
            "map": {
                "origin": list(m.origin), "resolution": m.resolution,
                "width": width, "height": height,
                "drivable": _grid_list(m.drivable), "intersection": _grid_list(m.intersection),
            },
            "ego_trajectory": [_pose_dict(p) for p in dataset.ego_trajectories.get(scene_id, ())],
            "samples": [],
        }
    order: List[str] = []
    for s in dataset.samples:
        if s.scene_id not in order:
            order.append(s.scene_id)
        scenes[s.scene_id]["samples"].append({
            "sample_id": s.sample_id,
            "timestamp": s.ego_pose.timestamp,
            "ego_pose": _pose_dict(s.ego_pose),
            "tags": sorted(s.tags),
            "gt_boxes": [_box_dict(b) for b in s.gt_boxes],
        })
    order += [sid for sid in dataset.maps if sid not in order]
    return {
        "format": DATASET_FORMAT, "version": 1, "classes": list(dataset.classes),
        "scenes": [scenes[sid] for sid in order],
    }


def submission_to_dict(submission: Submission) -> dict:
    return {
        "method_name": submission.method_name,
        "modality": submission.modality,
        "results": {sid: [_box_dict(b) for b in boxes] for sid, boxes in submission.boxes.items()},
    }


def _dump(obj: Any, path: PathLike) -> None:
    text = json.dumps(obj, separators=(",", ":"), allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def save_dataset(dataset: Dataset, path: PathLike) -> None:
    _dump(dataset_to_dict(dataset), path)


def save_submission(submission: Submission, path: PathLike) -> None:
    _dump(submission_to_dict(submission), path)


# ---------------------------------------------------------------------------
# decoding helpers
# ---------------------------------------------------------------------------

def _read_json(path: PathLike) -> Any:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"{path}: cannot read file ({exc.strerror})") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: parse error at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def _req(obj: Any, key: str, where: str) -> Any:
    if not isinstance(obj, Mapping):
        raise ValidationError(f"{where}: expected an object")
    if key not in obj:
        raise ValidationError(f"{where}: missing field {key!r}")
    return obj[key]


def _num(obj: Any, key: str, where: str) -> float:
    value = _req(obj, key, where)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{where}.{key}: expected a number, got {value!r}")
    return float(value)


def _pose(obj: Any, where: str) -> Pose2D:
    try:
        return Pose2D(_num(obj, "x", where), _num(obj, "y", where), _num(obj, "yaw", where),
                      _num(obj, "timestamp", where))
    except ValidationError as exc:
        raise ValidationError(f"{where}: {exc}") from None


def _box(obj: Any, where: str) -> ObjectBox:
    score = obj.get("score") if isinstance(obj, Mapping) else None
    vel = obj.get("velocity") if isinstance(obj, Mapping) else None
    if score is not None and (isinstance(score, bool) or not isinstance(score, (int, float))):
        raise ValidationError(f"{where}.score: expected a number")
    if vel is not None and (not isinstance(vel, list) or len(vel) != 2):
        raise ValidationError(f"{where}.velocity: expected [vx, vy]")
    cls = _req(obj, "class_name", where)
    if not isinstance(cls, str):
        raise ValidationError(f"{where}.class_name: expected a string")
    try:
        return ObjectBox(
            _num(obj, "center_x", where), _num(obj, "center_y", where), _num(obj, "width", where),
            _num(obj, "length", where), _num(obj, "yaw", where), cls,
            None if score is None else float(score),
            None if vel is None else (float(vel[0]), float(vel[1])),
        )
    except ValidationError as exc:
        raise ValidationError(f"{where}: {exc}") from None


def _grid(m: Mapping, key: str, width: int, height: int, where: str) -> np.ndarray:
    cells = _req(m, key, where)
    if not isinstance(cells, list) or len(cells) != width * height:
        raise ValidationError(f"{where}.{key}: expected {width * height} cells")
    arr = np.asarray(cells)
    if arr.ndim != 1 or not np.isin(arr, (0, 1)).all():
        raise ValidationError(f"{where}.{key}: cells must be 0 or 1")
    return arr.reshape(height, width).astype(bool)


def dataset_from_dict(data: Any, source: str = "<dataset>") -> Dataset:
    scenes = _req(data, "scenes", source)
    if not isinstance(scenes, list):
        raise ValidationError(f"{source}.scenes: expected a list")
    classes = tuple(data.get("classes", ())) or None
    maps: Dict[str, SceneMap] = {}
    trajectories: Dict[str, tuple] = {}
    samples: List[Sample] = []
    for i, sc in enumerate(scenes):
        where = f"scenes[{i}]"
        scene_id = _req(sc, "scene_id", where)
        m = _req(sc, "map", where)
        mw = f"{where}.map"
        width, height = int(_num(m, "width", mw)), int(_num(m, "height", mw))
        origin = _req(m, "origin", mw)
        if not isinstance(origin, list) or len(origin) != 2:
            raise ValidationError(f"{mw}.origin: expected [x, y]")
        try:
            maps[scene_id] = SceneMap(
                (float(origin[0]), float(origin[1])), _num(m, "resolution", mw),
                _grid(m, "drivable", width, height, mw), _grid(m, "intersection", width, height, mw),
            )
        except ValidationError as exc:
            raise ValidationError(f"{mw}: {exc}") from None
        trajectories[scene_id] = tuple(
            _pose(p, f"{where}.ego_trajectory[{j}]") for j, p in enumerate(_req(sc, "ego_trajectory", where))
        )
        for j, s in enumerate(_req(sc, "samples", where)):
            sw = f"{where}.samples[{j}]"
            sample_id = _req(s, "sample_id", sw)
            sw = f"sample {sample_id}"
            boxes = tuple(_box(b, f"{sw}.gt_boxes[{k}]") for k, b in enumerate(_req(s, "gt_boxes", sw)))
            if any(b.score is not None for b in boxes):
                raise ValidationError(f"{sw}: ground-truth box carries a score")
            scene_ref = s.get("scene_id", scene_id)
            samples.append(Sample(
                sample_id, scene_ref, _pose(_req(s, "ego_pose", sw), f"{sw}.ego_pose"),
                boxes, frozenset(_req(s, "tags", sw)),
            ))
    kwargs = {"classes": classes} if classes else {}
    return Dataset(tuple(samples), maps, trajectories, **kwargs)


def load_dataset(path: PathLike) -> Dataset:
    return dataset_from_dict(_read_json(path), str(path))


def submission_from_dict(data: Any, dataset: Optional[Dataset] = None, source: str = "<submission>") -> Submission:
    name = _req(data, "method_name", source)
    modality = _req(data, "modality", source)
    results = _req(data, "results", source)
    if not isinstance(results, Mapping):
        raise ValidationError(f"{source}.results: expected an object keyed by sample_id")
    boxes = {}
    for sid, items in results.items():
        where = f"sample {sid}"
        parsed = []
        for k, b in enumerate(items):
            score = b.get("score") if isinstance(b, Mapping) else None
            if score is None:
                raise ValidationError(f"{where}: detection {k} has no score")
            if isinstance(score, (int, float)) and not 0.0 <= score <= 1.0:
                raise ValidationError(f"{where}: detection {k} score {score} outside [0, 1]")
            parsed.append(_box(b, f"{where}[{k}]"))
        boxes[sid] = tuple(parsed)
    sub = Submission(name, modality, boxes)
    return sub.validate_against(dataset) if dataset is not None else sub


def load_submission(path: PathLike, dataset: Dataset) -> Submission:
    """Load and validate; samples absent from the file get empty detection lists."""
    return submission_from_dict(_read_json(path), dataset, str(path))


# ---------------------------------------------------------------------------
# per-sample values, hashes, configs
# ---------------------------------------------------------------------------

def save_pkl_values(values: Sequence[PklValue], path: PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["sample_id", "pkl"])
        for v in values:
            w.writerow([v.sample_id, repr(float(v.pkl))])


def load_pkl_values(path: PathLike) -> List[PklValue]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [PklValue(row["sample_id"], float(row["pkl"])) for row in csv.DictReader(fh)]


def file_sha256(path: PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def canonical_hash(obj: Any) -> str:
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def load_config_file(path: PathLike) -> dict:
    """Read a JSON or TOML mapping chosen by file suffix."""
    p = Path(path)
    if p.suffix.lower() == ".toml":
        try:
            import tomllib  # type: ignore[import-not-found]
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        with open(p, "rb") as fh:
            return tomllib.load(fh)
    data = _read_json(p)
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: expected a JSON object")
    return data


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

def _f2(x: Optional[float]) -> str:
    return "-" if x is None else f"{x:.2f}"


def report_to_json(report: EvaluationReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"


def report_from_json(text: str) -> EvaluationReport:
    return EvaluationReport.from_dict(json.loads(text))


def _metric_cells(row: MetricRow) -> List[str]:
    mark = "*" if row.unstable and row.map is not None else ""
    return [row.label, str(row.n_samples), _f2(row.median_pkl), _f2(row.map) + mark]


def binned_table_markdown(b: BinnedReport) -> List[str]:
    title, first = _BIN_TITLES.get(b.spec.kind, (b.spec.kind, "Range"))
    lines = [f"## {title}", "", f"| {first} | Number of samples | PKL | mAP |", "|---|---|---|---|"]
    for row in (b.all_scenes_row,) + tuple(b.rows):
        lines.append("| " + " | ".join(_metric_cells(row)) + " |")
    lines.append("")
    if any(r.unstable and r.map is not None for r in b.rows):
        lines.append("\\* few samples in this bin; mAP is noisy.")
    lines += [f"Excluded samples (outside all bins): {b.n_excluded}", ""]
    return lines


def render_markdown(report: EvaluationReport) -> str:
    lines = [f"# {report.method_name} ({report.modality})", ""]
    lines += [
        "| Scenes | Number of samples | median PKL | mean PKL | mAP |",
        "|---|---|---|---|---|",
        f"| All scenes | {report.n_samples} | {_f2(report.median_pkl)} | {_f2(report.mean_pkl)} | {_f2(report.map)} |",
        "",
    ]
    for b in report.binned:
        lines += binned_table_markdown(b)
    if report.filters:
        lines += ["## Scene filters", "", "| Scenes | Number of samples | PKL | mAP | PKL change |",
                  "|---|---|---|---|---|"]
        lines.append("| " + " | ".join(_metric_cells(report.filters[0].all_scenes_row)) + " | |")
        for f in report.filters:
            delta = f.delta_median_pkl
            d = "-" if delta is None else f"{delta:+.2f} ({f.row.median_pkl:.2f})"
            lines.append("| " + " | ".join(_metric_cells(f.row)) + f" | {d} |")
        lines.append("")
    if report.threshold_sweep is not None:
        sw = report.threshold_sweep
        lines += ["## Confidence threshold", "",
                  f"| Confidence threshold for {sw.class_name} | PKL |", "|---|---|",
                  f"| Threshold from highest F1 ({sw.f1_threshold:.2f}) | {_f2(sw.f1_median_pkl)} |"]
        lines += [f"| {t:g} | {_f2(v)} |" for t, v in sw.rows]
        lines.append("")
    if report.congestion is not None:
        lines += congestion_markdown(report.congestion)
    return "\n".join(lines)


def congestion_markdown(table) -> List[str]:
    head = " | ".join(f"{d:g}" for d in table.radii)
    lines = ["## Simulated congestion", "", "Distance to ego vehicle (m)", "",
             f"| Number of cars | {head} |", "|---" * (len(table.radii) + 1) + "|"]
    for n, row in zip(table.n_cars, table.values):
        lines.append(f"| {n} | " + " | ".join(_f2(v) for v in row) + " |")
    mono = table.row_monotone()
    lines += ["", "Rows strictly decreasing with distance: "
              + ", ".join(f"n={n}: {'yes' if ok else 'no'}" for n, ok in zip(table.n_cars, mono)), ""]
    return lines


CSV_HEADER = ["analysis", "label", "n_samples", "median_pkl", "map"]


def render_csv(report: EvaluationReport) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(CSV_HEADER)
    for b in report.binned:
        for row in (b.all_scenes_row,) + tuple(b.rows):
            w.writerow([b.spec.kind, row.label, row.n_samples, _f2(row.median_pkl), _f2(row.map)])
    for f in report.filters:
        w.writerow([f"filter:{f.name}", f.row.label, f.row.n_samples, _f2(f.row.median_pkl), _f2(f.row.map)])
    if report.threshold_sweep is not None:
        sw = report.threshold_sweep
        w.writerow([f"threshold_sweep:{sw.class_name}", f"f1={sw.f1_threshold:.4f}", report.n_samples,
                    _f2(sw.f1_median_pkl), ""])
        for t, v in sw.rows:
            w.writerow([f"threshold_sweep:{sw.class_name}", f"{t:g}", report.n_samples, _f2(v), ""])
    if report.congestion is not None:
        c = report.congestion
        for n, row in zip(c.n_cars, c.values):
            for d, v in zip(c.radii, row):
                w.writerow(["congestion", f"n={n} d={d:g}", report.n_samples, _f2(v), ""])
    return buf.getvalue()


def render_report(report: EvaluationReport, fmt: str) -> str:
    if fmt == "json":
        return report_to_json(report)
    if fmt == "markdown":
        return render_markdown(report)
    if fmt == "csv":
        return render_csv(report)
    raise ValueError(f"unknown report format {fmt!r}; choose from {FORMATS}")


def emit_report(report: EvaluationReport, fmt: str, path: PathLike) -> None:
    text = render_report(report, fmt)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
