"""Oriented 3D bounding-box math shared across the package.

Conventions: a box frame has its length axis ``l`` along +x (the heading
direction), width ``w`` along +y and height ``h`` along +z; the heading is
the yaw of the length axis around +z, normalized to (-pi, pi].  Boundary
points count as inside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels


def normalize_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    a = math.remainder(float(theta), 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    return a


@dataclass(frozen=True)
class Box3D:
    """Oriented box: center (m), size (w, l, h) (m), heading (rad)."""

    center: tuple[float, float, float]
    size: tuple[float, float, float]
    heading: float

    def __post_init__(self):
        center = tuple(float(v) for v in self.center)
        size = tuple(float(v) for v in self.size)
        if len(center) != 3 or len(size) != 3:
            raise ValueError("center and size must be 3-vectors")
        if not all(math.isfinite(v) for v in center + size + (self.heading,)):
            raise ValueError("box parameters must be finite")
        if min(size) <= 0.0:
            raise ValueError(f"box size must be positive, got {size}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "size", size)
        object.__setattr__(self, "heading", normalize_angle(self.heading))

    @property
    def w(self) -> float:
        return self.size[0]

    @property
    def l(self) -> float:  # noqa: E743 - matches the (w, l, h) convention
        return self.size[1]

    @property
    def h(self) -> float:
        return self.size[2]

    def center_array(self) -> np.ndarray:
        return np.asarray(self.center, dtype=np.float64)

    def volume(self) -> float:
        return self.w * self.l * self.h

    def bev_corners(self) -> np.ndarray:
        """Counter-clockwise (4, 2) corners of the box footprint."""
        hl, hw = self.l / 2.0, self.w / 2.0
        local = np.array(
            [[hl, -hw], [hl, hw], [-hl, hw], [-hl, -hw]], dtype=np.float64
        )
        c, s = math.cos(self.heading), math.sin(self.heading)
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.asarray(self.center[:2])

    def corners(self) -> np.ndarray:
        """(8, 3) corners, bottom face first, same BEV order per face."""
        bev = self.bev_corners()
        zlo = self.center[2] - self.h / 2.0
        zhi = self.center[2] + self.h / 2.0
        bottom = np.column_stack([bev, np.full(4, zlo)])
        top = np.column_stack([bev, np.full(4, zhi)])
        return np.vstack([bottom, top])


@dataclass(frozen=True)
class Motion4DOF:
    """Frame-to-frame rigid update: translation in the previous box frame
    plus a heading increment."""

    dx: float
    dy: float
    dz: float
    dtheta: float

    def __post_init__(self):
        vals = (self.dx, self.dy, self.dz, self.dtheta)
        if not all(math.isfinite(float(v)) for v in vals):
            raise ValueError("motion components must be finite")
        object.__setattr__(self, "dx", float(self.dx))
        object.__setattr__(self, "dy", float(self.dy))
        object.__setattr__(self, "dz", float(self.dz))
        object.__setattr__(self, "dtheta", normalize_angle(self.dtheta))

    def translation(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.dz], dtype=np.float64)


def as_cloud(points) -> np.ndarray:
    """Validate and return an (N, 3) float64 point array."""
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"expected an (N, 3) point array, got shape {arr.shape}")
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValueError("point coordinates must be finite")
    return arr


def rotation_z(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def points_in_box(cloud, box: Box3D) -> np.ndarray:
    """Binary mask: 1.0 where the point lies inside ``box`` (boundary in)."""
    pts = as_cloud(cloud)
    if pts.shape[0] == 0:
        return np.zeros(0, dtype=np.float64)
    cx, cy, cz = box.center
    return kernels.points_in_box_kernel(
        pts, cx, cy, cz, box.w / 2.0, box.l / 2.0, box.h / 2.0, box.heading
    )


def apply_motion(box: Box3D, motion: Motion4DOF) -> Box3D:
    """Move a box by a translation expressed in its own frame plus a yaw
    increment; size is preserved."""
    offset = rotation_z(box.heading) @ motion.translation()
    center = box.center_array() + offset
    return Box3D(tuple(center), box.size, box.heading + motion.dtheta)


def relative_motion(prev: Box3D, cur: Box3D) -> Motion4DOF:
    """Motion m with apply_motion(prev, m) == cur (sizes ignored)."""
    delta = cur.center_array() - prev.center_array()
    local = rotation_z(-prev.heading) @ delta
    return Motion4DOF(local[0], local[1], local[2], cur.heading - prev.heading)


def canonicalize(cloud, box: Box3D) -> np.ndarray:
    """Express points in the box frame: R(-heading) @ (p - center)."""
    pts = as_cloud(cloud)
    return (pts - box.center_array()) @ rotation_z(-box.heading).T


def decanonicalize(cloud, box: Box3D) -> np.ndarray:
    """Inverse of :func:`canonicalize`."""
    pts = as_cloud(cloud)
    return pts @ rotation_z(box.heading).T + box.center_array()


def box_in_frame(box: Box3D, frame: Box3D) -> Box3D:
    """Express ``box`` in the canonical frame of ``frame``."""
    center = rotation_z(-frame.heading) @ (box.center_array() - frame.center_array())
    return Box3D(tuple(center), box.size, box.heading - frame.heading)


def crop_search_region(
    cloud,
    prev_box: Box3D,
    margin: float,
    target_count: int,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, bool]:
    """Crop the scene around the previous box and resample to a fixed size.

    Keeps points inside the previous box enlarged by ``margin`` on w and l
    and by ``2 * margin`` on h, canonicalized to the previous box frame.
    The crop is resampled (without replacement when enough points exist) or
    padded by repeating points so exactly ``target_count`` points come back.
    An empty crop yields ``target_count`` origin points and an empty flag.
    """
    if margin < 0:
        raise ValueError("margin must be non-negative")
    if target_count < 1:
        raise ValueError("target_count must be >= 1")
    if rng is None:
        rng = np.random.default_rng(0)
    region = Box3D(
        prev_box.center,
        (prev_box.w + margin, prev_box.l + margin, prev_box.h + 2.0 * margin),
        prev_box.heading,
    )
    pts = as_cloud(cloud)
    keep = points_in_box(pts, region) > 0.5
    local = canonicalize(pts[keep], prev_box)
    n = local.shape[0]
    if n == 0:
        return np.zeros((target_count, 3), dtype=np.float64), True
    if n >= target_count:
        idx = rng.choice(n, size=target_count, replace=False)
    else:
        pad = rng.choice(n, size=target_count - n, replace=True)
        idx = rng.permutation(np.concatenate([np.arange(n), pad]))
    return local[idx], False


def iou3d(a: Box3D, b: Box3D) -> float:
    """Exact oriented-box IoU: BEV polygon clipping times vertical overlap."""
    if a.volume() <= 0.0 or b.volume() <= 0.0:
        raise ValueError("iou3d requires boxes with positive volume")
    inter_area = kernels.polygon_intersection_area(a.bev_corners(), b.bev_corners())
    z_lo = max(a.center[2] - a.h / 2.0, b.center[2] - b.h / 2.0)
    z_hi = min(a.center[2] + a.h / 2.0, b.center[2] + b.h / 2.0)
    inter = inter_area * max(0.0, z_hi - z_lo)
    union = a.volume() + b.volume() - inter
    return float(min(max(inter / union, 0.0), 1.0))


def center_distance(a: Box3D, b: Box3D) -> float:
    return float(np.linalg.norm(a.center_array() - b.center_array()))
