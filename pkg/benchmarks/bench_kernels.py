"""Compare the compiled and numpy obstacle-field kernels.

    python3 benchmarks/bench_kernels.py --boxes 30 --grid 200 --repeat 20

Also times a full PKL pass over a small synthetic dataset with each backend.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from pkleval import _pykernels

try:
    from pkleval import _ckernels
except ImportError:  # extension not built
    _ckernels = None

PKL_SNIPPET = """
import time
from pkleval import GeneratorConfig, PlannerParams, generate_synthetic_dataset, identity_submission
from pkleval import kernels
from pkleval.planner import PklEvaluator
from pkleval.scene import Submission
ds = generate_synthetic_dataset(GeneratorConfig(n_scenes={scenes}), 0)
empty = Submission("empty", "synthetic", {{}})
ev = PklEvaluator(ds, PlannerParams())
t = time.perf_counter()
ev.evaluate(empty)
print(kernels.BACKEND, time.perf_counter() - t)
"""


def random_boxes(rng, n, extent):
    return np.column_stack([
        rng.uniform(0, extent, n), rng.uniform(0, extent, n), rng.uniform(0.35, 6.0, n),
        rng.uniform(0.35, 1.5, n), rng.uniform(-np.pi, np.pi, n),
    ])


def bench_kernel(n_boxes, grid, repeat):
    rng = np.random.default_rng(0)
    res = 0.5
    boxes = random_boxes(rng, n_boxes, grid * res)
    args = (boxes, 0.0, 0.0, res, grid, grid, 1.0, 6.0)
    rows = []
    impls = [("python", _pykernels.obstacle_field)]
    if _ckernels is not None:
        impls.insert(0, ("cython", _ckernels.obstacle_field))
    for name, fn in impls:
        best = min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))
        rows.append((name, best))
    if _ckernels is not None:
        diff = np.abs(_ckernels.obstacle_field(*args) - _pykernels.obstacle_field(*args)).max()
        print(f"max |cython - python| = {diff:.2e}")
    return rows


def bench_pkl(scenes):
    for flag in ("0", "1"):
        env = dict(os.environ, PKLEVAL_PURE_PYTHON=flag)
        out = subprocess.run([sys.executable, "-c", PKL_SNIPPET.format(scenes=scenes)],
                             env=env, capture_output=True, text=True, check=True).stdout.split()
        print(f"PKL pass ({scenes * 10} samples, empty detections) backend={out[0]}: {float(out[1]):.2f} s")


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--boxes", type=int, default=30)
    p.add_argument("--grid", type=int, default=200)
    p.add_argument("--repeat", type=int, default=20)
    p.add_argument("--scenes", type=int, default=10, help="scenes for the end-to-end PKL timing (0 skips)")
    args = p.parse_args(argv)
    rows = bench_kernel(args.boxes, args.grid, args.repeat)
    base = dict(rows)["python"]
    print(f"obstacle_field, {args.boxes} boxes on a {args.grid}x{args.grid} grid (best of {args.repeat}):")
    for name, t in rows:
        print(f"  {name:<7} {t * 1e3:8.3f} ms   x{base / t:5.1f}")
    if args.scenes:
        bench_pkl(args.scenes)


if __name__ == "__main__":
    main()
