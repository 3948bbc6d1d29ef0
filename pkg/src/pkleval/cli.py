"""Command-line entry point: ``pkleval <subcommand>``.

Subcommands: generate, detect, eval, analyze, congestion, sweep-threshold.
Directory outputs default to ``$PKLEVAL_OUT_DIR`` (or ``./pkleval-out``).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from . import __version__, kernels
from .analysis import (
    DEFAULT_CONGESTION_D,
    DEFAULT_CONGESTION_N,
    DEFAULT_SWEEP,
    AnalysisConfig,
    build_report,
    congestion_sweep,
    run_pipeline,
    threshold_sweep,
)
from .io import (
    FORMATS,
    canonical_hash,
    congestion_markdown,
    emit_report,
    file_sha256,
    load_config_file,
    load_dataset,
    load_submission,
    save_dataset,
    save_pkl_values,
    save_submission,
)
from .metrics import spearman_rank_correlation
from .planner import PlannerParams
from .report import EvaluationReport
from .scene import (
    ConfigError,
    Dataset,
    ErrorModel,
    GeneratorConfig,
    ScoreCalibration,
    ValidationError,
    generate_synthetic_dataset,
    is_on_intersection,
    simulate_detector,
)

log = logging.getLogger("pkleval")

OUT_ENV = "PKLEVAL_OUT_DIR"
COMPETITIVE_MAP = 0.45

DETECTOR_PRESETS: Dict[str, Dict[str, Any]] = {
    "identity": {"modality": "synthetic"},
    "lidar": {
        "modality": "lidar", "drop_rate": 0.1, "fp_rate": 0.1,
        "depth_noise_sigma_m": 0.2, "lateral_noise_sigma_m": 0.15,
        "score_calibration": {"noise_sigma": 0.05},
    },
    "camera": {
        "modality": "camera", "drop_rate": 0.25, "fp_rate": 0.2,
        "depth_noise_sigma_m": 1.5, "lateral_noise_sigma_m": 0.3,
        "score_calibration": {"noise_sigma": 0.1},
    },
}


class CliError(Exception):
    pass


@dataclass
class RunConfig:
    """Resolved inputs for one invocation; file sections are overridden by flags."""

    dataset: Optional[str] = None
    generator: Optional[Dict[str, Any]] = None
    submissions: List[str] = field(default_factory=list)
    detectors: List[Dict[str, Any]] = field(default_factory=list)
    planner: Dict[str, Any] = field(default_factory=dict)
    analysis: Dict[str, Any] = field(default_factory=dict)
    out: Optional[str] = None
    seed: int = 0
    formats: List[str] = field(default_factory=lambda: ["markdown"])

    @classmethod
    def from_file(cls, path: Optional[str]) -> "RunConfig":
        if not path:
            return cls()
        data = load_config_file(path)
        known = {f.name for f in fields(cls)} | {"format"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"{path}: unknown config section(s) {sorted(unknown)}")
        cfg = cls()
        for key, value in data.items():
            if key == "format":
                cfg.formats = [value] if isinstance(value, str) else list(value)
            elif key in ("submissions",):
                cfg.submissions = list(value)
            elif key == "detectors":
                cfg.detectors = [dict(d) for d in value]
            else:
                setattr(cfg, key, value)
        return cfg

    def validate(self, need_submission: bool = True) -> None:
        if (self.dataset is None) == (self.generator is None):
            raise ConfigError("specify exactly one dataset source (dataset path or generator config)")
        if need_submission and not (self.submissions or self.detectors):
            raise ConfigError("specify at least one submission file or detector config")
        for fmt in self.formats:
            if fmt not in FORMATS:
                raise ConfigError(f"unknown format {fmt!r}; choose from {FORMATS}")


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _out_dir(value: Optional[str]) -> Path:
    path = Path(value or os.environ.get(OUT_ENV) or "pkleval-out")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _generator_config(section: Optional[Dict[str, Any]], args) -> GeneratorConfig:
    values = dict(section or {})
    for name in ("n_scenes", "samples_per_scene", "map_size_m", "intersection_fraction",
                 "mean_objects", "rain_fraction", "night_fraction"):
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    unknown = set(values) - {f.name for f in fields(GeneratorConfig)}
    if unknown:
        raise ConfigError(f"unknown generator option(s): {sorted(unknown)}")
    if "classes" in values:
        values["classes"] = tuple(values["classes"])
    return GeneratorConfig(**values)


def _error_model(spec: Dict[str, Any]) -> ErrorModel:
    values = {k: v for k, v in spec.items() if k not in ("name", "method_name", "modality", "seed", "preset")}
    preset = spec.get("preset")
    if preset is not None:
        if preset not in DETECTOR_PRESETS:
            raise ConfigError(f"unknown detector preset {preset!r}")
        base = {k: v for k, v in DETECTOR_PRESETS[preset].items() if k != "modality"}
        base.update(values)
        values = base
    unknown = set(values) - {f.name for f in fields(ErrorModel)}
    if unknown:
        raise ConfigError(f"unknown detector option(s): {sorted(unknown)}")
    if "score_calibration" in values:
        values["score_calibration"] = ScoreCalibration(**values["score_calibration"])
    return ErrorModel(**values)


def _planner(cfg: RunConfig, path: Optional[str]) -> PlannerParams:
    values = dict(cfg.planner)
    if path:
        values.update(load_config_file(path))
    try:
        return PlannerParams.from_dict(values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"planner params: {exc}") from None


def _analysis(cfg: RunConfig) -> AnalysisConfig:
    try:
        return AnalysisConfig.from_dict(cfg.analysis)
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"analysis config: {exc}") from None


def _load_dataset(cfg: RunConfig, args) -> tuple:
    if cfg.dataset is not None:
        return load_dataset(cfg.dataset), {"dataset_sha256": file_sha256(cfg.dataset)}
    gen = _generator_config(cfg.generator, args)
    ds = generate_synthetic_dataset(gen, cfg.seed)
    return ds, {"dataset_generator": _jsonable(gen.__dict__), "dataset_seed": cfg.seed}


def _jsonable(d: Dict[str, Any]) -> Dict[str, Any]:
    return json.loads(json.dumps(d, default=lambda o: o.__dict__ if hasattr(o, "__dict__") else list(o)))


def _submissions(cfg: RunConfig, dataset: Dataset) -> List[tuple]:
    out = []
    for path in cfg.submissions:
        out.append((load_submission(path, dataset), {"submission_sha256": file_sha256(path)}))
    for i, spec in enumerate(cfg.detectors):
        preset = spec.get("preset")
        modality = spec.get("modality") or (DETECTOR_PRESETS[preset]["modality"] if preset in DETECTOR_PRESETS else "synthetic")
        name = spec.get("name") or spec.get("method_name") or preset or f"detector-{i}"
        seed = int(spec.get("seed", cfg.seed))
        sub = simulate_detector(dataset, _error_model(spec), seed, name, modality)
        out.append((sub, {"detector": _jsonable(dict(spec)), "detector_seed": seed}))
    return out


def _provenance(base: Dict[str, Any], extra: Dict[str, Any], params: PlannerParams,
                analysis: AnalysisConfig, seed: int) -> Dict[str, Any]:
    prov = dict(base)
    prov.update(extra)
    prov.update({
        "planner_params": params.to_dict(),
        "config_sha256": canonical_hash({"planner": params.to_dict(), "analysis": analysis.to_dict()}),
        "seed": seed,
        "tool_version": __version__,
        "kernel_backend": kernels.BACKEND,
    })
    return prov


def _safe_name(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in name) or "submission"


def _write_reports(report: EvaluationReport, stem: Path, formats: Sequence[str]) -> List[Path]:
    written = []
    for fmt in ["json"] + [f for f in formats if f != "json"]:
        suffix = {"json": "json", "markdown": "md", "csv": "csv"}[fmt]
        path = stem.with_name(stem.name + f".report.{suffix}")
        emit_report(report, fmt, path)
        written.append(path)
    return written


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_generate(args) -> int:
    cfg = RunConfig.from_file(args.config)
    seed = args.seed if args.seed is not None else cfg.seed
    gen = _generator_config(cfg.generator if cfg.generator is not None else {}, args)
    ds = generate_synthetic_dataset(gen, seed)
    out = Path(args.out or Path(os.environ.get(OUT_ENV) or ".") / "dataset.json")
    save_dataset(ds, out)
    counts = np.array([len(s.gt_boxes) for s in ds.samples])
    inter = np.mean([is_on_intersection(s, ds.map_for(s)) for s in ds.samples])
    print(f"wrote {out}")
    print(f"scenes: {len(ds.maps)}  samples: {len(ds)}")
    print(f"objects per sample: mean {counts.mean():.2f}  min {counts.min()}  max {counts.max()}")
    print(f"intersection samples: {inter:.1%}  rain: {sum('rain' in s.tags for s in ds.samples)}"
          f"  night: {sum('night' in s.tags for s in ds.samples)}")
    return 0


def cmd_detect(args) -> int:
    cfg = RunConfig.from_file(args.config)
    if not cfg.dataset and not args.dataset:
        raise ConfigError("--dataset is required")
    ds = load_dataset(args.dataset or cfg.dataset)
    spec: Dict[str, Any] = dict(cfg.detectors[0]) if cfg.detectors else {}
    if args.preset:
        spec["preset"] = args.preset
    for name in ("drop_rate", "fp_rate", "depth_noise_sigma_m", "lateral_noise_sigma_m"):
        value = getattr(args, name)
        if value is not None:
            spec[name] = value
    if args.score_noise is not None:
        spec.setdefault("score_calibration", {})["noise_sigma"] = args.score_noise
    preset = spec.get("preset")
    modality = args.modality or spec.get("modality") or (
        DETECTOR_PRESETS[preset]["modality"] if preset in DETECTOR_PRESETS else "synthetic")
    name = args.method_name or spec.get("name") or preset or "synthetic"
    seed = args.seed if args.seed is not None else int(spec.get("seed", cfg.seed))
    sub = simulate_detector(ds, _error_model(spec), seed, name, modality)
    out = Path(args.out or Path(os.environ.get(OUT_ENV) or ".") / f"{_safe_name(name)}.submission.json")
    save_submission(sub, out)
    n = sum(len(v) for v in sub.boxes.values())
    print(f"wrote {out}  ({n} detections over {len(ds)} samples)")
    return 0


def _eval_one(dataset, submission, prov_extra, base_prov, params, analysis, cfg, out, analyses):
    result = run_pipeline(dataset, submission, params, analysis.dist_thresholds, analysis.f1_dist_threshold)
    prov = _provenance(base_prov, prov_extra, params, analysis, cfg.seed)
    report = build_report(dataset, submission, result, analysis, prov, analyses=analyses)
    stem = out / _safe_name(submission.method_name)
    written = _write_reports(report, stem, cfg.formats)
    pkl_path = stem.with_name(stem.name + ".pkl.csv")
    save_pkl_values(result.pkl_values, pkl_path)
    return report, written + [pkl_path]


def _resolve(args, need_submission=True) -> RunConfig:
    cfg = RunConfig.from_file(getattr(args, "config", None))
    if getattr(args, "dataset", None):
        cfg.dataset, cfg.generator = args.dataset, None
    if getattr(args, "submission", None):
        cfg.submissions, cfg.detectors = list(args.submission), []
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "format", None):
        cfg.formats = list(args.format)
    if getattr(args, "out", None):
        cfg.out = args.out
    cfg.validate(need_submission)
    return cfg


def cmd_eval(args) -> int:
    cfg = _resolve(args)
    params = _planner(cfg, args.planner_params)
    analysis = _analysis(cfg)
    out = _out_dir(cfg.out)
    dataset, base = _load_dataset(cfg, args)
    subs = _submissions(cfg, dataset)
    for sub, extra in subs:
        report, written = _eval_one(dataset, sub, extra, base, params, analysis, cfg, out, analyses=False)
        print(f"{report.method_name}: median PKL {report.median_pkl:.2f}  mean PKL "
              f"{report.mean_pkl:.2f}  mAP {report.map:.2f}")
        for path in written:
            print(f"  wrote {path}")
    return 0


def correlation_summary(reports: Sequence[EvaluationReport]) -> Dict[str, Any]:
    """Spearman agreement between mAP and -median PKL, overall and for mAP > 0.45."""
    summary: Dict[str, Any] = {"n_submissions": len(reports)}
    maps = [r.map for r in reports]
    neg = [-r.median_pkl for r in reports]
    if len(reports) >= 2:
        rho = spearman_rank_correlation(maps, neg)
        summary["spearman_all"] = None if math.isnan(rho) else rho
    comp = [(m, p) for m, p in zip(maps, neg) if m > COMPETITIVE_MAP]
    summary["n_competitive"] = len(comp)
    if len(comp) >= 2:
        rho = spearman_rank_correlation([c[0] for c in comp], [c[1] for c in comp])
        summary["spearman_competitive"] = None if math.isnan(rho) else rho
    return summary


def _neg_log(x: float) -> str:
    return "inf" if x <= 0 else repr(-math.log(x))


def cmd_analyze(args) -> int:
    cfg = _resolve(args)
    params = _planner(cfg, args.planner_params)
    analysis = _analysis(cfg)
    out = _out_dir(cfg.out)
    dataset, base = _load_dataset(cfg, args)
    reports = []
    for sub, extra in _submissions(cfg, dataset):
        report, written = _eval_one(dataset, sub, extra, base, params, analysis, cfg, out, analyses=True)
        reports.append(report)
        print(f"{report.method_name}: median PKL {report.median_pkl:.2f}  mAP {report.map:.2f}")
        for path in written:
            print(f"  wrote {path}")
    pairs = out / "correlation_pairs.csv"
    with open(pairs, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["method_name", "modality", "map", "median_pkl", "neg_log_median_pkl"])
        for r in reports:
            w.writerow([r.method_name, r.modality, repr(r.map), repr(r.median_pkl), _neg_log(r.median_pkl)])
    print(f"wrote {pairs}")
    if len(reports) >= 2:
        summary = correlation_summary(reports)
        path = out / "correlation.json"
        path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        print(f"Spearman(mAP, -median PKL) over {len(reports)} submissions: {summary.get('spearman_all')}")
        print(f"wrote {path}")
    else:
        print("correlation summary omitted (needs at least two submissions)")
    return 0


def cmd_congestion(args) -> int:
    cfg = _resolve(args, need_submission=False)
    params = _planner(cfg, args.planner_params)
    out = _out_dir(cfg.out)
    dataset, _ = _load_dataset(cfg, args)
    table = congestion_sweep(dataset, args.n_cars, args.radii, params, keep_gt=not args.circle_only)
    text = "\n".join(congestion_markdown(table))
    (out / "congestion.md").write_text(text, encoding="utf-8")
    with open(out / "congestion.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["n_cars"] + [f"{d:g}" for d in table.radii])
        for n, row in zip(table.n_cars, table.values):
            w.writerow([n] + [f"{v:.2f}" for v in row])
    print(text)
    mono = table.row_monotone()
    if args.check_monotone and not all(mono):
        print("error: some rows are not strictly decreasing with distance", file=sys.stderr)
        return 3
    return 0


def cmd_sweep(args) -> int:
    cfg = _resolve(args)
    params = _planner(cfg, args.planner_params)
    analysis = _analysis(cfg)
    out = _out_dir(cfg.out)
    dataset, _ = _load_dataset(cfg, args)
    sub, _ = _submissions(cfg, dataset)[0]
    result = run_pipeline(dataset, sub, params, analysis.dist_thresholds, analysis.f1_dist_threshold)
    rows = threshold_sweep(dataset, sub, args.class_name, args.thresholds, result.thresholds,
                           planner=result.planner)
    f1_t = result.thresholds.get(args.class_name, 0.0)
    lines = [f"| Confidence threshold for {args.class_name} | PKL |", "|---|---|",
             f"| Threshold from highest F1 ({f1_t:.2f}) | {result.median_pkl:.2f} |"]
    lines += [f"| {t:g} | {v:.2f} |" for t, v in rows]
    text = "\n".join(lines) + "\n"
    stem = _safe_name(sub.method_name)
    (out / f"{stem}.threshold_sweep.md").write_text(text, encoding="utf-8")
    with open(out / f"{stem}.threshold_sweep.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["threshold", "median_pkl"])
        w.writerow([f"f1:{f1_t!r}", repr(result.median_pkl)])
        for t, v in rows:
            w.writerow([repr(t), repr(v)])
    print(text, end="")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _common(p, dataset=True, submission=True):
    p.add_argument("--config", help="JSON/TOML run config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory (default $%s)" % OUT_ENV)
    if dataset:
        p.add_argument("--dataset", help="dataset JSON file")
    if submission:
        p.add_argument("--submission", action="append", help="submission JSON file (repeatable)")
    p.add_argument("--planner-params", help="JSON/TOML planner parameters")
    p.add_argument("--format", action="append", choices=FORMATS, help="report format (repeatable)")


def _gen_flags(p):
    p.add_argument("--n-scenes", dest="n_scenes", type=int)
    p.add_argument("--samples-per-scene", dest="samples_per_scene", type=int)
    p.add_argument("--map-size", dest="map_size_m", type=float)
    p.add_argument("--intersection-fraction", dest="intersection_fraction", type=float)
    p.add_argument("--mean-objects", dest="mean_objects", type=float)
    p.add_argument("--rain-fraction", dest="rain_fraction", type=float)
    p.add_argument("--night-fraction", dest="night_fraction", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pkleval", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"pkleval {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a seeded synthetic dataset")
    p.add_argument("--config", help="JSON/TOML with a [generator] section")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="dataset JSON path")
    _gen_flags(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("detect", help="simulate a detector over a dataset")
    p.add_argument("--config", help="JSON/TOML with a [[detectors]] entry")
    p.add_argument("--dataset")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="submission JSON path")
    p.add_argument("--preset", choices=sorted(DETECTOR_PRESETS))
    p.add_argument("--method-name")
    p.add_argument("--modality", choices=["camera", "lidar", "synthetic"])
    p.add_argument("--drop-rate", dest="drop_rate", type=float)
    p.add_argument("--fp-rate", dest="fp_rate", type=float)
    p.add_argument("--depth-noise", dest="depth_noise_sigma_m", type=float)
    p.add_argument("--lateral-noise", dest="lateral_noise_sigma_m", type=float)
    p.add_argument("--score-noise", type=float)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", help="threshold, plan and score submissions")
    _common(p)
    _gen_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("analyze", help="full table set per submission plus rank correlation")
    _common(p)
    _gen_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("congestion", help="median PKL for rings of hallucinated cars")
    _common(p, submission=False)
    _gen_flags(p)
    p.add_argument("--n-cars", type=int, nargs="+", default=list(DEFAULT_CONGESTION_N))
    p.add_argument("--radii", type=float, nargs="+", default=list(DEFAULT_CONGESTION_D))
    p.add_argument("--circle-only", action="store_true", help="drop ground-truth boxes from the detection set")
    p.add_argument("--check-monotone", action="store_true",
                   help="exit 3 unless every row strictly decreases with distance")
    p.set_defaults(func=cmd_congestion)

    p = sub.add_parser("sweep-threshold", help="median PKL over a confidence-threshold sweep for one class")
    _common(p)
    _gen_flags(p)
    p.add_argument("--class", dest="class_name", default="car")
    p.add_argument("--thresholds", type=float, nargs="+", default=list(DEFAULT_SWEEP))
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValidationError, ConfigError, CliError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
