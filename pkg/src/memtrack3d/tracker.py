"""Online tracking state machine.

Per frame: crop a search region around the previous box, extract seed
features, propagate memory, vote and refine, turn the winning proposal
into a rigid motion, and write the frame into the memory bank.  When the
mask peak falls below the lost threshold the box is held fixed and the
bank is left untouched.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .autodiff import no_grad
from .config import RunConfig
from .geometry import (
    Box3D,
    apply_motion,
    as_cloud,
    crop_search_region,
    points_in_box,
)
from .localization import select_best
from .model import TrackNet
from .propagation import MemoryBank


class TrackStatus(enum.Enum):
    NORMAL = "NORMAL"
    LOST = "LOST"


@dataclass
class TrackerState:
    current_box: Box3D
    memory: MemoryBank
    status: TrackStatus
    frame_index: int


class Tracker:
    """Single-target tracker around a trained (or fresh) network.

    One instance owns one track; create a new instance (or call ``init``
    again) per sequence.  All sampling is driven by a private generator
    seeded at ``init``, so identical inputs give bit-identical tracks.
    """

    def __init__(
        self,
        net: TrackNet,
        memory_size: int | None = None,
        seed: int | None = None,
    ):
        self.net = net
        self.cfg: RunConfig = net.cfg
        self.memory_size = memory_size if memory_size is not None else self.cfg.memory_test
        self._seed = self.cfg.seed if seed is None else seed
        self._rng = np.random.default_rng(self._seed)
        self.state: TrackerState | None = None

    # -- lifecycle -----------------------------------------------------------

    def init(self, cloud, b1: Box3D) -> TrackerState:
        self._rng = np.random.default_rng(self._seed)
        cloud = as_cloud(cloud)
        with no_grad():
            crop, empty = crop_search_region(
                cloud, b1, self.cfg.margin, self.cfg.crop_size, self._rng
            )
            if empty:
                raise ValueError("cannot initialize on an empty target region")
            local_box = Box3D((0.0, 0.0, 0.0), b1.size, 0.0)
            full_mask = points_in_box(crop, local_box)
            memory = MemoryBank(self.memory_size)
            self.net.bootstrap(crop, full_mask, memory)
        self.state = TrackerState(
            current_box=b1, memory=memory, status=TrackStatus.NORMAL, frame_index=1
        )
        return self.state

    def step(self, cloud) -> tuple[Box3D, np.ndarray, TrackStatus]:
        """Track one frame; returns the world-frame box, the per-point mask
        of the cropped region, and the tracker status."""
        if self.state is None:
            raise RuntimeError("tracker not initialized")
        state = self.state
        cloud = as_cloud(cloud)
        state.frame_index += 1
        with no_grad():
            crop, empty = crop_search_region(
                cloud, state.current_box, self.cfg.margin, self.cfg.crop_size, self._rng
            )
            if empty:
                state.status = TrackStatus.LOST
                return state.current_box, np.zeros(self.cfg.crop_size), state.status
            mask_init = np.full(self.net.cfg.n_seeds, 0.5)
            box = state.current_box
            fwd = self.net.forward_frame(
                crop, mask_init, state.memory, (box.l, box.w, box.h)
            )
            seed_mask = fwd.vote.mask.data
            if float(seed_mask.max()) < self.cfg.lost_threshold:
                state.status = TrackStatus.LOST
                full_mask = self._expand_mask(crop, fwd.seeds.coords, seed_mask)
                return state.current_box, full_mask, state.status
            motion = select_best(fwd.proposals)
            state.current_box = apply_motion(state.current_box, motion)
            state.memory.write(self.net.make_entry(fwd, seed_mask))
            state.status = TrackStatus.NORMAL
            full_mask = self._expand_mask(crop, fwd.seeds.coords, seed_mask)
        return state.current_box, full_mask, state.status

    @staticmethod
    def _expand_mask(crop: np.ndarray, seed_coords: np.ndarray, seed_mask: np.ndarray):
        """Lift the seed-resolution mask back to every cropped point via its
        nearest seed."""
        nearest = kernels.knn_indices(crop, seed_coords, 1)[:, 0]
        return seed_mask[nearest]

    def track_sequence(self, clouds, b1: Box3D) -> list[Box3D]:
        if len(clouds) < 1:
            raise ValueError("need at least one frame")
        self.init(clouds[0], b1)
        boxes = [b1]
        for cloud in clouds[1:]:
            box, _, _ = self.step(cloud)
            boxes.append(box)
        return boxes


class OracleTracker:
    """Echoes ground-truth boxes; a fixture for the evaluation harness."""

    def __init__(self, gt_boxes: list[Box3D]):
        self._boxes = list(gt_boxes)
        self._cursor = 0

    def init(self, cloud, b1: Box3D):
        self._cursor = 0
        return b1

    def step(self, cloud):
        self._cursor += 1
        return self._boxes[self._cursor], np.zeros(0), TrackStatus.NORMAL


# ---------------------------------------------------------------------------
# trajectory text format
# ---------------------------------------------------------------------------

TRAJECTORY_COLUMNS = "frame cx cy cz w l h heading status"


def save_trajectory(path, boxes: list[Box3D], statuses=None) -> None:
    """One record per frame: frame index, center, size, heading, status."""
    if statuses is None:
        statuses = [TrackStatus.NORMAL] * len(boxes)
    lines = [f"# {TRAJECTORY_COLUMNS}"]
    for i, (box, status) in enumerate(zip(boxes, statuses)):
        cx, cy, cz = box.center
        w, l, h = box.size
        name = status.value if isinstance(status, TrackStatus) else str(status)
        lines.append(
            f"{i} {cx:.17g} {cy:.17g} {cz:.17g} {w:.17g} {l:.17g} {h:.17g} "
            f"{box.heading:.17g} {name}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def load_trajectory(path) -> tuple[list[Box3D], list[TrackStatus]]:
    boxes, statuses = [], []
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 9:
            raise ValueError(f"{path}: bad trajectory record: {raw!r}")
        _, cx, cy, cz, w, l, h, heading, status = parts
        boxes.append(
            Box3D(
                (float(cx), float(cy), float(cz)),
                (float(w), float(l), float(h)),
                float(heading),
            )
        )
        statuses.append(TrackStatus(status))
    return boxes, statuses
