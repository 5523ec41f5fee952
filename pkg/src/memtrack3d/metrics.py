"""One Pass Evaluation: Success / Precision AUC and aggregation.

Success is the area under the curve of the fraction of frames whose IoU
exceeds a threshold swept over [0, 1]; in closed form that is simply the
mean IoU (x100).  Precision sweeps a center-distance threshold over
[0, 2] m, i.e. mean(1 - min(d, 2) / 2) x 100.  A discretized mode
(trapezoidal over an explicit threshold step) is kept for parity with
benchmark tooling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Box3D, center_distance, iou3d


@dataclass
class OpeResult:
    ious: np.ndarray
    distances: np.ndarray
    success: float
    precision: float
    frames: int


@dataclass
class AggregateRow:
    category: str
    success: float
    precision: float
    frames: int


@dataclass
class AggregateTable:
    rows: list[AggregateRow]
    mean: AggregateRow


def success_auc(ious, step: float = 0.0) -> float:
    """AUC of the fraction of frames with IoU above a threshold in [0, 1]."""
    ious = np.asarray(ious, dtype=np.float64)
    if ious.size == 0:
        raise ValueError("success_auc needs at least one frame")
    if np.any((ious < 0) | (ious > 1)):
        raise ValueError("IoU values must lie in [0, 1]")
    if step <= 0.0:
        return float(ious.mean() * 100.0)
    thresholds = np.arange(0.0, 1.0 + step / 2, step)
    ratios = (ious[None, :] > thresholds[:, None]).mean(axis=1)
    return float(np.trapezoid(ratios, thresholds) * 100.0)


def precision_auc(dists, step: float = 0.0, beyond_range: str = "clip") -> float:
    """AUC of the fraction of frames with center distance below a threshold
    in [0, 2] m, normalized to [0, 100]."""
    dists = np.asarray(dists, dtype=np.float64)
    if dists.size == 0:
        raise ValueError("precision_auc needs at least one frame")
    if np.any(dists < 0):
        raise ValueError("distances must be non-negative")
    if beyond_range == "drop":
        dists = dists[dists < 2.0]
        if dists.size == 0:
            return 0.0
    elif beyond_range != "clip":
        raise ValueError(f"beyond_range must be clip or drop, got {beyond_range!r}")
    if step <= 0.0:
        return float((1.0 - np.minimum(dists, 2.0) / 2.0).mean() * 100.0)
    thresholds = np.arange(0.0, 2.0 + step / 2, step)
    ratios = (dists[None, :] < thresholds[:, None]).mean(axis=1)
    return float(np.trapezoid(ratios, thresholds) / 2.0 * 100.0)


def ope_run(
    tracker_factory,
    seq,
    include_first: bool = False,
    step: float = 0.0,
    beyond_range: str = "clip",
) -> OpeResult:
    """Initialize once on the first ground-truth box, then track straight
    through with no re-initialization."""
    if len(seq.frames) < 2:
        raise ValueError("OPE needs at least two frames")
    tracker = tracker_factory()
    tracker.init(seq.frames[0], seq.gt_boxes[0])
    ious, dists = [], []
    if include_first:
        ious.append(1.0)
        dists.append(0.0)
    for frame, gt in zip(seq.frames[1:], seq.gt_boxes[1:]):
        box, _, _ = tracker.step(frame)
        ious.append(iou3d(box, gt))
        dists.append(center_distance(box, gt))
    ious = np.asarray(ious)
    dists = np.asarray(dists)
    return OpeResult(
        ious=ious,
        distances=dists,
        success=success_auc(ious, step),
        precision=precision_auc(dists, step, beyond_range),
        frames=len(ious),
    )


def aggregate(results: list[tuple[str, OpeResult]]) -> AggregateTable:
    """Frame-weighted per-category means plus a frame-weighted Mean row."""
    total_frames = sum(r.frames for _, r in results)
    if total_frames == 0:
        raise ValueError("no frames to aggregate")
    by_cat: dict[str, list[OpeResult]] = {}
    for cat, res in results:
        by_cat.setdefault(cat, []).append(res)
    rows = []
    for cat in sorted(by_cat):
        group = by_cat[cat]
        frames = sum(r.frames for r in group)
        success = sum(r.success * r.frames for r in group) / frames
        precision = sum(r.precision * r.frames for r in group) / frames
        rows.append(AggregateRow(cat, success, precision, frames))
    mean = AggregateRow(
        "Mean",
        sum(r.success * r.frames for r in rows) / total_frames,
        sum(r.precision * r.frames for r in rows) / total_frames,
        total_frames,
    )
    return AggregateTable(rows=rows, mean=mean)


def format_table(table: AggregateTable) -> str:
    header = f"{'category':<12} {'Success':>8} {'Precision':>10} {'frames':>7}"
    lines = [header, "-" * len(header)]
    for row in [*table.rows, table.mean]:
        lines.append(
            f"{row.category:<12} {row.success:>8.2f} {row.precision:>10.2f} "
            f"{row.frames:>7d}"
        )
    return "\n".join(lines)


def success_curve(ious, step: float = 0.01) -> tuple[np.ndarray, np.ndarray]:
    ious = np.asarray(ious, dtype=np.float64)
    thresholds = np.arange(0.0, 1.0 + step / 2, step)
    ratios = (ious[None, :] > thresholds[:, None]).mean(axis=1)
    return thresholds, ratios


def precision_curve(dists, step: float = 0.02) -> tuple[np.ndarray, np.ndarray]:
    dists = np.asarray(dists, dtype=np.float64)
    thresholds = np.arange(0.0, 2.0 + step / 2, step)
    ratios = (dists[None, :] < thresholds[:, None]).mean(axis=1)
    return thresholds, ratios
