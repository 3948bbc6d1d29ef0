"""Pure-numpy fallback for the compiled kernels in ``_ckernels.pyx``."""

from __future__ import annotations

import math

import numpy as np


def obstacle_field(
    boxes: np.ndarray,
    origin_x: float,
    origin_y: float,
    resolution: float,
    height: int,
    width: int,
    sigma: float,
    cutoff: float,
) -> np.ndarray:
    """Sum of unit Gaussian bumps of the distance to each oriented footprint.

    ``boxes`` rows are ``(cx, cy, half_length, half_width, yaw)``.  Cells farther
    than ``cutoff`` from a footprint receive nothing from it.
    """
    out = np.zeros((height, width), dtype=np.float64)
    inv2s2 = 1.0 / (2.0 * sigma * sigma)
    cut2 = cutoff * cutoff
    for cx, cy, hl, hw, yaw in np.asarray(boxes, dtype=np.float64).reshape(-1, 5):
        cs, sn = math.cos(yaw), math.sin(yaw)
        reach = math.sqrt(hl * hl + hw * hw) + cutoff
        c0 = max(0, math.floor((cx - reach - origin_x) / resolution))
        c1 = min(width - 1, math.floor((cx + reach - origin_x) / resolution))
        r0 = max(0, math.floor((cy - reach - origin_y) / resolution))
        r1 = min(height - 1, math.floor((cy + reach - origin_y) / resolution))
        if c1 < c0 or r1 < r0:
            continue
        px = origin_x + (np.arange(c0, c1 + 1) + 0.5) * resolution
        py = origin_y + (np.arange(r0, r1 + 1) + 0.5) * resolution
        dx = (px - cx)[None, :]
        dy = (py - cy)[:, None]
        lx = cs * dx + sn * dy
        ly = -sn * dx + cs * dy
        qx = np.maximum(np.abs(lx) - hl, 0.0)
        qy = np.maximum(np.abs(ly) - hw, 0.0)
        d2 = qx * qx + qy * qy
        bump = np.where(d2 <= cut2, np.exp(-d2 * inv2s2), 0.0)
        out[r0:r1 + 1, c0:c1 + 1] += bump
    return out
