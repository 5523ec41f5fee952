"""KITTI tracking ingestion: velodyne scans, label files and calibration.

Velodyne frames are little-endian float32 (x, y, z, intensity) quadruples;
the intensity channel is dropped for tracking.  Label boxes live in the
rectified camera frame with a bottom-center origin and are transformed
into the LiDAR frame via the inverse rectification and velo-to-cam
matrices; the heading maps as yaw = -rotation_y - pi/2.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..geometry import Box3D, normalize_angle


class KittiError(Exception):
    pass


class MissingFrameError(KittiError):
    pass


class LabelFormatError(KittiError):
    pass


class UnknownTrackError(KittiError):
    pass


def read_velodyne(path) -> np.ndarray:
    """(N, 4) float32 array straight from a .bin scan."""
    path = Path(path)
    if not path.exists():
        raise MissingFrameError(f"missing point file: {path}")
    raw = np.fromfile(path, dtype="<f4")
    if raw.size % 4:
        raise KittiError(f"{path}: byte count is not a multiple of 16")
    return raw.reshape(-1, 4)


def write_velodyne(path, quads: np.ndarray) -> None:
    arr = np.ascontiguousarray(quads, dtype="<f4")
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise ValueError("velodyne data must be (N, 4)")
    arr.tofile(Path(path))


@dataclass
class TrackingLabel:
    frame: int
    track_id: int
    type: str
    truncated: float
    occluded: int
    alpha: float
    bbox: tuple[float, float, float, float]
    h: float
    w: float
    l: float  # noqa: E741
    x: float
    y: float
    z: float
    rotation_y: float


def parse_label_file(path) -> list[TrackingLabel]:
    """Parse a tracking label file (label_02 format, one object per line)."""
    labels = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) < 17:
            raise LabelFormatError(
                f"{path}:{lineno}: expected 17 fields, got {len(parts)}"
            )
        try:
            labels.append(
                TrackingLabel(
                    frame=int(parts[0]),
                    track_id=int(parts[1]),
                    type=parts[2],
                    truncated=float(parts[3]),
                    occluded=int(float(parts[4])),
                    alpha=float(parts[5]),
                    bbox=tuple(float(v) for v in parts[6:10]),
                    h=float(parts[10]),
                    w=float(parts[11]),
                    l=float(parts[12]),
                    x=float(parts[13]),
                    y=float(parts[14]),
                    z=float(parts[15]),
                    rotation_y=float(parts[16]),
                )
            )
        except ValueError as exc:
            raise LabelFormatError(f"{path}:{lineno}: {exc}") from exc
    return labels


def parse_calib_file(path) -> tuple[np.ndarray, np.ndarray]:
    """Return (rectification, velo_to_cam) as 4x4 homogeneous matrices."""
    entries = {}
    for raw in Path(path).read_text().splitlines():
        parts = raw.split()
        if not parts:
            continue
        key = parts[0].rstrip(":")
        try:
            entries[key] = np.array([float(v) for v in parts[1:]])
        except ValueError:
            continue
    rect_key = next((k for k in ("R_rect", "R0_rect") if k in entries), None)
    velo_key = next(
        (k for k in ("Tr_velo_cam", "Tr_velo_to_cam") if k in entries), None
    )
    if rect_key is None or velo_key is None:
        raise KittiError(f"{path}: missing rectification or velo-to-cam entry")
    rect = np.eye(4)
    rect[:3, :3] = entries[rect_key].reshape(3, 3)
    velo_to_cam = np.eye(4)
    velo_to_cam[:3, :4] = entries[velo_key].reshape(3, 4)
    return rect, velo_to_cam


def camera_box_to_velo(
    label: TrackingLabel, rect: np.ndarray, velo_to_cam: np.ndarray
) -> Box3D:
    """Label location is the bottom center in the rectified camera frame;
    the LiDAR-frame box center sits half a height above it."""
    cam = np.array([label.x, label.y, label.z, 1.0])
    velo = np.linalg.inv(velo_to_cam) @ np.linalg.inv(rect) @ cam
    center = velo[:3] / velo[3]
    center[2] += label.h / 2.0
    heading = normalize_angle(-label.rotation_y - np.pi / 2.0)
    return Box3D(tuple(center), (label.w, label.l, label.h), heading)


def load_kitti_tracklet(velodyne_dir, label_file, calib_file, track_id: int):
    """Assemble the contiguous run of ``track_id`` into a Sequence."""
    from .synthetic import Sequence

    rect, velo_to_cam = parse_calib_file(calib_file)
    labels = [lab for lab in parse_label_file(label_file) if lab.track_id == track_id]
    if not labels:
        raise UnknownTrackError(f"track id {track_id} not present in {label_file}")
    labels.sort(key=lambda lab: lab.frame)
    run = [labels[0]]
    for lab in labels[1:]:
        if lab.frame != run[-1].frame + 1:
            break
        run.append(lab)

    velodyne_dir = Path(velodyne_dir)
    frames, boxes = [], []
    for lab in run:
        quads = read_velodyne(velodyne_dir / f"{lab.frame:06d}.bin")
        frames.append(quads[:, :3].astype(np.float64))
        boxes.append(camera_box_to_velo(lab, rect, velo_to_cam))
    return Sequence(
        frames=frames,
        gt_boxes=boxes,
        category=run[0].type.lower(),
        id=f"{Path(label_file).stem}-{track_id:04d}",
    )
