import numpy as np
import pytest

from pkleval import (
    Dataset,
    GeneratorConfig,
    ObjectBox,
    Pose2D,
    Sample,
    SceneMap,
    Submission,
    generate_synthetic_dataset,
)


def open_map(size_cells=40, resolution=1.0, origin=(0.0, 0.0), intersection=None):
    drivable = np.ones((size_cells, size_cells), dtype=bool)
    inter = np.zeros_like(drivable) if intersection is None else intersection
    return SceneMap(origin, resolution, drivable, inter)


def car(x, y, score=None, yaw=0.0, cls="car"):
    return ObjectBox(x, y, 1.9, 4.6, yaw, cls, score)


def toy_dataset(gt_per_sample, scene_map=None, classes=("car", "pedestrian", "truck", "bicycle")):
    """One-scene dataset with one sample per entry of ``gt_per_sample``."""
    scene_map = scene_map or open_map()
    traj = tuple(Pose2D(10.0 + i, 20.0, 0.0, 0.5 * i) for i in range(max(len(gt_per_sample), 2)))
    samples = tuple(
        Sample(f"s{i}", "scene0", traj[i], tuple(gts)) for i, gts in enumerate(gt_per_sample)
    )
    return Dataset(samples, {"scene0": scene_map}, {"scene0": traj}, classes)


def toy_submission(pred_per_sample, name="toy"):
    return Submission(name, "synthetic", {f"s{i}": tuple(p) for i, p in enumerate(pred_per_sample)})


SMALL_CONFIG = GeneratorConfig(n_scenes=6, samples_per_scene=5, mean_objects=15)


@pytest.fixture(scope="session")
def small_dataset():
    return generate_synthetic_dataset(SMALL_CONFIG, seed=3)


@pytest.fixture(scope="session")
def default_dataset():
    return generate_synthetic_dataset(GeneratorConfig(), seed=0)


ACCEPTANCE_LINES = []


def record_acceptance(number, title, ok, detail=""):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title}" + (f" ({detail})" if detail else "")
    ACCEPTANCE_LINES.append((number, line))
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
