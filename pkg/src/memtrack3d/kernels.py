"""Hot numeric kernels with numba-compiled and pure-numpy implementations.

Every kernel comes in two flavours: a scalar-loop version compiled with
``numba.njit`` and a vectorized pure-numpy fallback.  The active flavour is
chosen at import time; set the environment variable
``MEMTRACK3D_DISABLE_NUMBA=1`` to force the numpy path (the numpy path is
also used automatically when numba is not installed).  Both flavours are
always importable under ``*_numpy`` / ``*_numba`` names so the test suite
can assert parity and the ``bench`` CLI subcommand can time them against
each other.

All kernels are deterministic: ties in nearest-neighbour and farthest-point
selection are broken by the lowest index.
"""

from __future__ import annotations

import math
import os

import numpy as np

DISABLE_NUMBA = os.environ.get("MEMTRACK3D_DISABLE_NUMBA", "").strip().lower() in {
    "1",
    "true",
    "yes",
}

try:
    if DISABLE_NUMBA:
        raise ImportError("numba disabled via MEMTRACK3D_DISABLE_NUMBA")
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised via the env flag
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if len(args) == 1 and callable(args[0]):
            return args[0]
        return wrap


# ---------------------------------------------------------------------------
# farthest point sampling
# ---------------------------------------------------------------------------


def _fps_loops(points, n_samples, start):
    n = points.shape[0]
    out = np.empty(n_samples, dtype=np.int64)
    dist = np.full(n, np.inf)
    cur = start
    for i in range(n_samples):
        out[i] = cur
        cx, cy, cz = points[cur, 0], points[cur, 1], points[cur, 2]
        best = 0
        best_d = -1.0
        for j in range(n):
            dx = points[j, 0] - cx
            dy = points[j, 1] - cy
            dz = points[j, 2] - cz
            d = dx * dx + dy * dy + dz * dz
            if d < dist[j]:
                dist[j] = d
            if dist[j] > best_d:
                best_d = dist[j]
                best = j
        cur = best
    return out


_fps_numba_impl = njit(cache=True)(_fps_loops)


def fps_indices_numpy(points: np.ndarray, n_samples: int, start: int) -> np.ndarray:
    """Greedy max-min subset selection; returns indices into ``points``."""
    n = points.shape[0]
    out = np.empty(n_samples, dtype=np.int64)
    dist = np.full(n, np.inf)
    cur = int(start)
    for i in range(n_samples):
        out[i] = cur
        d = np.sum((points - points[cur]) ** 2, axis=1)
        np.minimum(dist, d, out=dist)
        cur = int(np.argmax(dist))
    return out


def fps_indices_numba(points: np.ndarray, n_samples: int, start: int) -> np.ndarray:
    return _fps_numba_impl(
        np.ascontiguousarray(points, dtype=np.float64), int(n_samples), int(start)
    )


# ---------------------------------------------------------------------------
# k nearest neighbours (brute force)
# ---------------------------------------------------------------------------


def _knn_loops(query, ref, k):
    nq = query.shape[0]
    nr = ref.shape[0]
    out = np.empty((nq, k), dtype=np.int64)
    dists = np.empty(nr)
    for i in range(nq):
        qx, qy, qz = query[i, 0], query[i, 1], query[i, 2]
        for j in range(nr):
            dx = ref[j, 0] - qx
            dy = ref[j, 1] - qy
            dz = ref[j, 2] - qz
            dists[j] = dx * dx + dy * dy + dz * dz
        # selection of the k smallest, lowest index wins on ties
        for s in range(k):
            best = -1
            best_d = np.inf
            for j in range(nr):
                if dists[j] < best_d:
                    best_d = dists[j]
                    best = j
            out[i, s] = best
            dists[best] = np.inf
    return out


_knn_numba_impl = njit(cache=True)(_knn_loops)


def knn_indices_numpy(query: np.ndarray, ref: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k nearest rows of ``ref`` for every row of ``query``."""
    d = np.sum((query[:, None, :] - ref[None, :, :]) ** 2, axis=2)
    # stable argsort so equal distances resolve to the lowest index
    order = np.argsort(d, axis=1, kind="stable")
    return order[:, :k].astype(np.int64)


def knn_indices_numba(query: np.ndarray, ref: np.ndarray, k: int) -> np.ndarray:
    return _knn_numba_impl(
        np.ascontiguousarray(query, dtype=np.float64),
        np.ascontiguousarray(ref, dtype=np.float64),
        int(k),
    )


# ---------------------------------------------------------------------------
# oriented box containment
# ---------------------------------------------------------------------------


def _points_in_box_loops(points, cx, cy, cz, hw, hl, hh, heading):
    n = points.shape[0]
    out = np.zeros(n, dtype=np.float64)
    c = math.cos(heading)
    s = math.sin(heading)
    for i in range(n):
        px = points[i, 0] - cx
        py = points[i, 1] - cy
        pz = points[i, 2] - cz
        # rotate by -heading into the box frame (x = length axis)
        lx = c * px + s * py
        ly = -s * px + c * py
        if abs(lx) <= hl and abs(ly) <= hw and abs(pz) <= hh:
            out[i] = 1.0
    return out


_points_in_box_numba_impl = njit(cache=True)(_points_in_box_loops)


def points_in_box_numpy(
    points: np.ndarray,
    cx: float,
    cy: float,
    cz: float,
    hw: float,
    hl: float,
    hh: float,
    heading: float,
) -> np.ndarray:
    c = math.cos(heading)
    s = math.sin(heading)
    px = points[:, 0] - cx
    py = points[:, 1] - cy
    pz = points[:, 2] - cz
    lx = c * px + s * py
    ly = -s * px + c * py
    inside = (np.abs(lx) <= hl) & (np.abs(ly) <= hw) & (np.abs(pz) <= hh)
    return inside.astype(np.float64)


def points_in_box_numba(points, cx, cy, cz, hw, hl, hh, heading):
    return _points_in_box_numba_impl(
        np.ascontiguousarray(points, dtype=np.float64),
        float(cx),
        float(cy),
        float(cz),
        float(hw),
        float(hl),
        float(hh),
        float(heading),
    )


# ---------------------------------------------------------------------------
# BEV rectangle intersection (Sutherland-Hodgman clipping + shoelace area)
# ---------------------------------------------------------------------------


def _polygon_intersection_area_loops(subject, clip):
    # subject/clip: (4, 2) counter-clockwise rectangles
    max_v = 16
    cur = np.empty((max_v, 2))
    nxt = np.empty((max_v, 2))
    n_cur = subject.shape[0]
    for i in range(n_cur):
        cur[i, 0] = subject[i, 0]
        cur[i, 1] = subject[i, 1]
    n_clip = clip.shape[0]
    for e in range(n_clip):
        ax = clip[e, 0]
        ay = clip[e, 1]
        bx = clip[(e + 1) % n_clip, 0]
        by = clip[(e + 1) % n_clip, 1]
        ex = bx - ax
        ey = by - ay
        n_nxt = 0
        if n_cur == 0:
            return 0.0
        sx = cur[n_cur - 1, 0]
        sy = cur[n_cur - 1, 1]
        s_in = ex * (sy - ay) - ey * (sx - ax) >= 0.0
        for v in range(n_cur):
            px = cur[v, 0]
            py = cur[v, 1]
            p_in = ex * (py - ay) - ey * (px - ax) >= 0.0
            if p_in != s_in:
                dx = px - sx
                dy = py - sy
                den = ex * dy - ey * dx
                if den != 0.0:
                    t = (ex * (ay - sy) - ey * (ax - sx)) / den
                    nxt[n_nxt, 0] = sx + t * dx
                    nxt[n_nxt, 1] = sy + t * dy
                    n_nxt += 1
            if p_in:
                nxt[n_nxt, 0] = px
                nxt[n_nxt, 1] = py
                n_nxt += 1
            sx = px
            sy = py
            s_in = p_in
        n_cur = n_nxt
        for v in range(n_cur):
            cur[v, 0] = nxt[v, 0]
            cur[v, 1] = nxt[v, 1]
    if n_cur < 3:
        return 0.0
    area = 0.0
    for v in range(n_cur):
        x0 = cur[v, 0]
        y0 = cur[v, 1]
        x1 = cur[(v + 1) % n_cur, 0]
        y1 = cur[(v + 1) % n_cur, 1]
        area += x0 * y1 - x1 * y0
    return abs(area) * 0.5


_polygon_intersection_area_numba_impl = njit(cache=True)(
    _polygon_intersection_area_loops
)


def polygon_intersection_area_numpy(subject: np.ndarray, clip: np.ndarray) -> float:
    """Area of the intersection of a polygon with a convex clip polygon.

    Both polygons must be counter-clockwise.  Clipping by a convex polygon
    with the boundary counted as inside; Sutherland-Hodgman.
    """
    cur = [tuple(p) for p in np.asarray(subject, dtype=np.float64)]
    clip = np.asarray(clip, dtype=np.float64)
    n_clip = clip.shape[0]
    for e in range(n_clip):
        ax, ay = clip[e]
        bx, by = clip[(e + 1) % n_clip]
        ex, ey = bx - ax, by - ay
        if not cur:
            return 0.0
        nxt = []
        sx, sy = cur[-1]
        s_in = ex * (sy - ay) - ey * (sx - ax) >= 0.0
        for px, py in cur:
            p_in = ex * (py - ay) - ey * (px - ax) >= 0.0
            if p_in != s_in:
                dx, dy = px - sx, py - sy
                den = ex * dy - ey * dx
                if den != 0.0:
                    t = (ex * (ay - sy) - ey * (ax - sx)) / den
                    nxt.append((sx + t * dx, sy + t * dy))
            if p_in:
                nxt.append((px, py))
            sx, sy, s_in = px, py, p_in
        cur = nxt
    if len(cur) < 3:
        return 0.0
    poly = np.asarray(cur)
    x, y = poly[:, 0], poly[:, 1]
    return float(abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))) * 0.5)


def polygon_intersection_area_numba(subject: np.ndarray, clip: np.ndarray) -> float:
    return float(
        _polygon_intersection_area_numba_impl(
            np.ascontiguousarray(subject, dtype=np.float64),
            np.ascontiguousarray(clip, dtype=np.float64),
        )
    )


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

if NUMBA_AVAILABLE:
    fps_indices = fps_indices_numba
    knn_indices = knn_indices_numba
    points_in_box_kernel = points_in_box_numba
    polygon_intersection_area = polygon_intersection_area_numba
    BACKEND = "numba"
else:
    fps_indices = fps_indices_numpy
    knn_indices = knn_indices_numpy
    points_in_box_kernel = points_in_box_numpy
    polygon_intersection_area = polygon_intersection_area_numpy
    BACKEND = "numpy"

if not NUMBA_AVAILABLE:
    fps_indices_numba = None  # type: ignore[assignment]
    knn_indices_numba = None  # type: ignore[assignment]
    points_in_box_numba = None  # type: ignore[assignment]
    polygon_intersection_area_numba = None  # type: ignore[assignment]
