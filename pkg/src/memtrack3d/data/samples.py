"""Sliding-window training samples over tracklets."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..geometry import Box3D
from .synthetic import Sequence

NON_RIGID_CATEGORIES = {"pedestrian", "cyclist", "person", "person_sitting"}


def is_rigid(category: str) -> bool:
    return category.lower() not in NON_RIGID_CATEGORIES


@dataclass
class TrainingSample:
    frames: list[np.ndarray]
    boxes: list[Box3D]
    category: str
    rigid: bool
    seq_id: str
    start: int
    memory_size: int


def make_training_samples(
    seq: Sequence, sample_len: int = 8, train_memory: int = 2, stride: int = 1
) -> list[TrainingSample]:
    """Every window of ``sample_len`` consecutive frames (stride 1 covers
    each eligible start exactly once).  The first frame of each window
    initializes the memory; the remaining ``sample_len - 1`` frames are
    supervised."""
    n = len(seq.frames)
    if n < sample_len:
        warnings.warn(
            f"sequence {seq.id} has {n} frames, shorter than sample_len="
            f"{sample_len}; skipped",
            stacklevel=2,
        )
        return []
    samples = []
    for start in range(0, n - sample_len + 1, stride):
        samples.append(
            TrainingSample(
                frames=seq.frames[start : start + sample_len],
                boxes=seq.gt_boxes[start : start + sample_len],
                category=seq.category,
                rigid=is_rigid(seq.category),
                seq_id=seq.id,
                start=start,
                memory_size=train_memory,
            )
        )
    return samples
