# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled obstacle-field rasteriser; mirrors ``pkleval._pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, exp, fabs, floor, sqrt

cnp.import_array()


def obstacle_field(cnp.ndarray[cnp.float64_t, ndim=2] boxes not None,
                   double origin_x, double origin_y, double resolution,
                   Py_ssize_t height, Py_ssize_t width,
                   double sigma, double cutoff):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((height, width), dtype=np.float64)
    cdef double[:, ::1] field = out
    cdef double[:, :] b = boxes
    cdef Py_ssize_t n = b.shape[0]
    cdef Py_ssize_t k, r, c, r0, r1, c0, c1
    cdef double cx, cy, hl, hw, yaw, cs, sn, reach
    cdef double px, py, dx, dy, lx, ly, qx, qy, d2
    cdef double inv2s2 = 1.0 / (2.0 * sigma * sigma)
    cdef double cut2 = cutoff * cutoff
    for k in range(n):
        cx = b[k, 0]
        cy = b[k, 1]
        hl = b[k, 2]
        hw = b[k, 3]
        yaw = b[k, 4]
        cs = cos(yaw)
        sn = sin(yaw)
        reach = sqrt(hl * hl + hw * hw) + cutoff
        c0 = <Py_ssize_t>floor((cx - reach - origin_x) / resolution)
        c1 = <Py_ssize_t>floor((cx + reach - origin_x) / resolution)
        r0 = <Py_ssize_t>floor((cy - reach - origin_y) / resolution)
        r1 = <Py_ssize_t>floor((cy + reach - origin_y) / resolution)
        if c0 < 0:
            c0 = 0
        if r0 < 0:
            r0 = 0
        if c1 > width - 1:
            c1 = width - 1
        if r1 > height - 1:
            r1 = height - 1
        for r in range(r0, r1 + 1):
            py = origin_y + (r + 0.5) * resolution
            dy = py - cy
            for c in range(c0, c1 + 1):
                px = origin_x + (c + 0.5) * resolution
                dx = px - cx
                lx = cs * dx + sn * dy
                ly = -sn * dx + cs * dy
                qx = fabs(lx) - hl
                qy = fabs(ly) - hw
                if qx < 0.0:
                    qx = 0.0
                if qy < 0.0:
                    qy = 0.0
                d2 = qx * qx + qy * qy
                if d2 <= cut2:
                    field[r, c] += exp(-d2 * inv2s2)
    return out
