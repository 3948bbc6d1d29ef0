"""Result containers shared by the analysis harness and the report writers."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Tuple

BIN_KINDS = ("object_count", "ego_speed", "curvature")


@dataclass(frozen=True)
class BinSpec:
    """Half-open bins ``(edges[i], edges[i+1]]`` plus an optional exact-zero bin."""

    kind: str
    edges: Tuple[float, ...]
    include_zero_bin: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "edges", tuple(float(e) for e in self.edges))
        if self.kind not in BIN_KINDS:
            raise ValueError(f"unknown bin kind {self.kind!r}")
        if len(self.edges) < 2 and not self.include_zero_bin:
            raise ValueError("a BinSpec needs at least one bin")
        if any(b <= a for a, b in zip(self.edges, self.edges[1:])):
            raise ValueError("bin edges must be strictly increasing")

    @property
    def n_bins(self) -> int:
        return max(len(self.edges) - 1, 0) + int(self.include_zero_bin)

    def labels(self) -> List[str]:
        out = ["0"] if self.include_zero_bin else []
        out += [f"({_fmt_edge(a)}, {_fmt_edge(b)}]" for a, b in zip(self.edges, self.edges[1:])]
        return out

    def assign(self, value: float) -> Optional[int]:
        """Bin index of ``value`` or None when it falls outside every bin."""
        offset = 0
        if self.include_zero_bin:
            if value == 0.0:
                return 0
            offset = 1
        for i, (a, b) in enumerate(zip(self.edges, self.edges[1:])):
            if a < value <= b:
                return i + offset
        return None


def _fmt_edge(x: float) -> str:
    return f"{x:g}"


SPEED_BINS = BinSpec("ego_speed", (0, 2, 4, 6, 8, 10, 12), include_zero_bin=True)
OBJECT_COUNT_BINS = BinSpec("object_count", tuple(range(0, 131, 10)))
CURVATURE_BINS = BinSpec("curvature", (0, 0.02, 0.04, 0.06, 0.08, 0.1), include_zero_bin=True)


@dataclass(frozen=True)
class MetricRow:
    label: str
    n_samples: int
    median_pkl: Optional[float] = None
    mean_pkl: Optional[float] = None
    map: Optional[float] = None
    unstable: bool = False


@dataclass(frozen=True)
class BinnedReport:
    spec: BinSpec
    rows: Tuple[MetricRow, ...]
    all_scenes_row: MetricRow
    n_excluded: int = 0

    @property
    def n_assigned(self) -> int:
        return sum(r.n_samples for r in self.rows)


@dataclass(frozen=True)
class FilterResult:
    name: str
    row: MetricRow
    all_scenes_row: MetricRow

    @property
    def delta_median_pkl(self) -> Optional[float]:
        if self.row.median_pkl is None or self.all_scenes_row.median_pkl is None:
            return None
        return self.row.median_pkl - self.all_scenes_row.median_pkl


@dataclass(frozen=True)
class ThresholdSweep:
    class_name: str
    f1_threshold: float
    f1_median_pkl: float
    rows: Tuple[Tuple[float, float], ...]


@dataclass(frozen=True)
class CongestionTable:
    n_cars: Tuple[int, ...]
    radii: Tuple[float, ...]
    values: Tuple[Tuple[float, ...], ...]
    keep_gt: bool = True

    def row_monotone(self) -> List[bool]:
        """Per row: PKL strictly decreasing as the radius grows."""
        return [all(b < a for a, b in zip(row, row[1:])) for row in self.values]


@dataclass(frozen=True)
class EvaluationReport:
    method_name: str
    modality: str
    n_samples: int
    median_pkl: float
    mean_pkl: float
    map: float
    thresholds: Dict[str, float] = field(default_factory=dict)
    binned: Tuple[BinnedReport, ...] = ()
    filters: Tuple[FilterResult, ...] = ()
    threshold_sweep: Optional[ThresholdSweep] = None
    congestion: Optional[CongestionTable] = None
    provenance: Dict[str, Any] = field(default_factory=dict)

    @property
    def global_row(self) -> MetricRow:
        return MetricRow("All scenes", self.n_samples, self.median_pkl, self.mean_pkl, self.map)

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        d["binned"] = [
            dict(b, n_assigned=sum(r["n_samples"] for r in b["rows"])) for b in d["binned"]
        ]
        d["filters"] = [
            dict(f, delta_median_pkl=obj.delta_median_pkl) for f, obj in zip(d["filters"], self.filters)
        ]
        return _lists(d)

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "EvaluationReport":
        def row(r):
            return MetricRow(**r)

        binned = tuple(
            BinnedReport(
                BinSpec(b["spec"]["kind"], tuple(b["spec"]["edges"]), b["spec"]["include_zero_bin"]),
                tuple(row(r) for r in b["rows"]),
                row(b["all_scenes_row"]),
                b["n_excluded"],
            )
            for b in d.get("binned", [])
        )
        filters = tuple(
            FilterResult(f["name"], row(f["row"]), row(f["all_scenes_row"]))
            for f in d.get("filters", [])
        )
        sweep = d.get("threshold_sweep")
        if sweep is not None:
            sweep = ThresholdSweep(
                sweep["class_name"], sweep["f1_threshold"], sweep["f1_median_pkl"],
                tuple((float(t), float(v)) for t, v in sweep["rows"]),
            )
        cong = d.get("congestion")
        if cong is not None:
            cong = CongestionTable(
                tuple(cong["n_cars"]), tuple(cong["radii"]),
                tuple(tuple(r) for r in cong["values"]), cong["keep_gt"],
            )
        return cls(
            d["method_name"], d["modality"], d["n_samples"], d["median_pkl"], d["mean_pkl"],
            d["map"], dict(d.get("thresholds", {})), binned, filters, sweep, cong,
            dict(d.get("provenance", {})),
        )


def _lists(obj):
    if isinstance(obj, dict):
        return {k: _lists(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_lists(v) for v in obj]
    return obj
