"""Synthetic point-cloud sequences for desk-scale training.

An object template (cuboid shell or cylinder) rides a smooth random
trajectory; each frame resamples the surface with optional coordinate
noise, drops a random contiguous viewing sector per the occlusion
schedule, and scatters static distractor objects of the same template
near the track.  Everything is deterministic per seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..geometry import Box3D, normalize_angle, rotation_z
from ..tracker import TrackStatus, load_trajectory, save_trajectory
from .kitti import read_velodyne, write_velodyne

TEMPLATE_SIZES = {
    "car": (1.8, 4.2, 1.6),
    "pedestrian": (0.6, 0.6, 1.7),
}


@dataclass
class SynthConfig:
    template: str = "car"
    size: tuple[float, float, float] | None = None  # (w, l, h); None = template default
    points_per_frame: int = 192
    max_step: float = 0.12  # per-frame translation bound, meters
    max_turn: float = 0.06  # per-frame heading change bound, radians
    occlusion: tuple[float, ...] = (0.0,)  # drop fraction per frame, cycled
    distractors: int = 2
    noise_std: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.template not in TEMPLATE_SIZES:
            raise ValueError(f"unknown template {self.template!r}")
        occ = (
            (float(self.occlusion),)
            if np.isscalar(self.occlusion)
            else tuple(float(v) for v in self.occlusion)
        )
        if any(not 0.0 <= v <= 1.0 for v in occ):
            raise ValueError("occlusion fractions must lie in [0, 1]")
        object.__setattr__(self, "occlusion", occ)
        if self.points_per_frame < 1 or self.distractors < 0 or self.noise_std < 0:
            raise ValueError("invalid synthetic configuration")

    @property
    def object_size(self) -> tuple[float, float, float]:
        return self.size if self.size is not None else TEMPLATE_SIZES[self.template]


@dataclass
class Sequence:
    frames: list[np.ndarray] = field(default_factory=list)
    gt_boxes: list[Box3D] = field(default_factory=list)
    category: str = "car"
    id: str = "seq"

    def __post_init__(self):
        if len(self.frames) != len(self.gt_boxes):
            raise ValueError("frames and gt_boxes must have equal length")
        if len(self.frames) < 2:
            raise ValueError("a sequence needs at least 2 frames")


def _sample_cuboid_shell(rng, w, l, h, n) -> np.ndarray:
    # faces: +-x (w*h), +-y (l*h), +-z (w*l); length axis is x
    areas = np.array([w * h, w * h, l * h, l * h, w * l, w * l])
    face = rng.choice(6, size=n, p=areas / areas.sum())
    u = rng.uniform(-0.5, 0.5, size=n)
    v = rng.uniform(-0.5, 0.5, size=n)
    pts = np.empty((n, 3))
    for f in range(6):
        sel = face == f
        if f < 2:
            pts[sel] = np.column_stack(
                [np.full(sel.sum(), (l / 2) * (1 if f == 0 else -1)), u[sel] * w, v[sel] * h]
            )
        elif f < 4:
            pts[sel] = np.column_stack(
                [u[sel] * l, np.full(sel.sum(), (w / 2) * (1 if f == 2 else -1)), v[sel] * h]
            )
        else:
            pts[sel] = np.column_stack(
                [u[sel] * l, v[sel] * w, np.full(sel.sum(), (h / 2) * (1 if f == 4 else -1))]
            )
    return pts


def _sample_cylinder(rng, w, l, h, n) -> np.ndarray:
    radius = min(w, l) / 2.0
    lateral = 2.0 * math.pi * radius * h
    cap = math.pi * radius * radius
    areas = np.array([lateral, cap, cap])
    part = rng.choice(3, size=n, p=areas / areas.sum())
    phi = rng.uniform(0.0, 2.0 * math.pi, size=n)
    pts = np.empty((n, 3))
    side = part == 0
    pts[side] = np.column_stack(
        [
            radius * np.cos(phi[side]),
            radius * np.sin(phi[side]),
            rng.uniform(-h / 2, h / 2, size=side.sum()),
        ]
    )
    for f, sign in ((1, 1.0), (2, -1.0)):
        sel = part == f
        rho = radius * np.sqrt(rng.uniform(0.0, 1.0, size=sel.sum()))
        pts[sel] = np.column_stack(
            [
                rho * np.cos(phi[sel]),
                rho * np.sin(phi[sel]),
                np.full(sel.sum(), sign * h / 2),
            ]
        )
    return pts


_RENDERERS = {"car": _sample_cuboid_shell, "pedestrian": _sample_cylinder}


def _render(rng, template, size, pose: Box3D, n) -> np.ndarray:
    local = _RENDERERS[template](rng, *size, n)
    # pull the surface a hair inward so rotation round-off cannot push
    # noise-free points outside their own box
    local *= 1.0 - 1e-9
    return local @ rotation_z(pose.heading).T + pose.center_array()


def _occlude(rng, pts, center, fraction) -> np.ndarray:
    if fraction <= 0.0:
        return pts
    phi = np.arctan2(pts[:, 1] - center[1], pts[:, 0] - center[0])
    start = rng.uniform(0.0, 2.0 * math.pi)
    width = 2.0 * math.pi * fraction
    keep = np.mod(phi - start, 2.0 * math.pi) >= width
    return pts[keep]


def generate_sequence(cfg: SynthConfig, length: int) -> Sequence:
    """Deterministic synthetic tracklet of ``length`` frames."""
    if length < 2:
        raise ValueError("sequences need at least 2 frames")
    rng = np.random.default_rng(cfg.seed)
    size = cfg.object_size
    w, l, h = size

    heading = rng.uniform(-math.pi, math.pi)
    center = np.array([rng.uniform(-1, 1), rng.uniform(-1, 1), h / 2.0])
    speed = rng.uniform(0.5, 1.0) * cfg.max_step
    boxes = []
    for _ in range(length):
        boxes.append(Box3D(tuple(center), size, heading))
        heading = normalize_angle(heading + rng.uniform(-cfg.max_turn, cfg.max_turn))
        center = center + rotation_z(heading) @ np.array([speed, 0.0, 0.0])
        center[2] += rng.uniform(-0.005, 0.005)

    clearance = (max(w, l) + max(w, l)) / 2.0 + 0.6
    traj = np.array([b.center for b in boxes])
    distractor_poses = []
    for _ in range(cfg.distractors):
        for _attempt in range(100):
            anchor = traj[rng.integers(len(traj))]
            offset = rng.uniform(clearance, clearance + 2.5)
            angle = rng.uniform(0.0, 2.0 * math.pi)
            pos = anchor + np.array(
                [offset * math.cos(angle), offset * math.sin(angle), 0.0]
            )
            if np.min(np.linalg.norm(traj[:, :2] - pos[None, :2], axis=1)) >= clearance:
                break
        distractor_poses.append(
            Box3D(tuple(pos), size, rng.uniform(-math.pi, math.pi))
        )

    frames = []
    for t, box in enumerate(boxes):
        target = _render(rng, cfg.template, size, box, cfg.points_per_frame)
        target = _occlude(
            rng, target, box.center_array(), cfg.occlusion[t % len(cfg.occlusion)]
        )
        parts = [target]
        for pose in distractor_poses:
            parts.append(_render(rng, cfg.template, size, pose, cfg.points_per_frame))
        cloud = np.concatenate(parts, axis=0)
        if cfg.noise_std > 0:
            cloud = cloud + rng.normal(0.0, cfg.noise_std, size=cloud.shape)
        frames.append(cloud)

    return Sequence(
        frames=frames,
        gt_boxes=boxes,
        category=cfg.template,
        id=f"{cfg.template}-{cfg.seed:04d}",
    )


# ---------------------------------------------------------------------------
# on-disk layout: <dir>/points/NNNNNN.bin + boxes.txt + meta.txt
# ---------------------------------------------------------------------------


def save_sequence_dir(seq: Sequence, directory) -> None:
    directory = Path(directory)
    (directory / "points").mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(seq.frames):
        quads = np.zeros((frame.shape[0], 4), dtype=np.float32)
        quads[:, :3] = frame.astype(np.float32)
        write_velodyne(directory / "points" / f"{i:06d}.bin", quads)
    save_trajectory(
        directory / "boxes.txt", seq.gt_boxes, [TrackStatus.NORMAL] * len(seq.gt_boxes)
    )
    (directory / "meta.txt").write_text(
        f"category = {seq.category}\nid = {seq.id}\n"
    )


def load_sequence_dir(directory) -> Sequence:
    directory = Path(directory)
    boxes, _ = load_trajectory(directory / "boxes.txt")
    meta = {}
    for line in (directory / "meta.txt").read_text().splitlines():
        if "=" in line:
            key, val = line.split("=", 1)
            meta[key.strip()] = val.strip()
    frames = []
    for i in range(len(boxes)):
        quads = read_velodyne(directory / "points" / f"{i:06d}.bin")
        frames.append(quads[:, :3].astype(np.float64))
    return Sequence(
        frames=frames,
        gt_boxes=boxes,
        category=meta.get("category", "car"),
        id=meta.get("id", directory.name),
    )


def save_dataset(sequences: list[Sequence], root) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for seq in sequences:
        save_sequence_dir(seq, root / seq.id)


def load_dataset(root) -> list[Sequence]:
    root = Path(root)
    dirs = sorted(p for p in root.iterdir() if (p / "boxes.txt").exists())
    if not dirs:
        raise FileNotFoundError(f"no sequences under {root}")
    return [load_sequence_dir(p) for p in dirs]
