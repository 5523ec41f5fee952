"""End-to-end training over sliding-window samples.

Each sample replays its window frame by frame with ground-truth boxes as
crop references (teacher forcing): the first frame bootstraps the memory
with its ground-truth mask, every later frame is supervised and then
written to the bank with its predicted, gradient-detached mask.  Memory
entries are constants, so each frame backpropagates independently and
gradients accumulate until the optimizer step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .data.samples import TrainingSample, make_training_samples
from .geometry import (
    Box3D,
    box_in_frame,
    crop_search_region,
    normalize_angle,
    points_in_box,
    relative_motion,
)
from .losses import FrameTargets, LossWeights, compute_losses, positive_sampling
from .model import TrackNet
from .nn import Adam
from .propagation import MemoryBank


@dataclass
class TrainResult:
    net: TrackNet
    history: list[dict]  # per-epoch mean loss components


def _mirror_box(box: Box3D) -> Box3D:
    cx, cy, cz = box.center
    return Box3D((cx, -cy, cz), box.size, -box.heading)


def _mirror_sample(sample: TrainingSample) -> TrainingSample:
    frames = [f * np.array([1.0, -1.0, 1.0]) for f in sample.frames]
    boxes = [_mirror_box(b) for b in sample.boxes]
    return TrainingSample(
        frames=frames,
        boxes=boxes,
        category=sample.category,
        rigid=sample.rigid,
        seq_id=sample.seq_id,
        start=sample.start,
        memory_size=sample.memory_size,
    )


def _jitter_box(box: Box3D, cfg: RunConfig, rng: np.random.Generator) -> Box3D:
    if cfg.augment_shift <= 0 and cfg.augment_yaw <= 0:
        return box
    shift = rng.normal(0.0, cfg.augment_shift, size=3)
    shift[2] *= 0.5
    yaw = rng.normal(0.0, cfg.augment_yaw)
    return Box3D(
        tuple(box.center_array() + shift), box.size, normalize_angle(box.heading + yaw)
    )


def train_sample(
    net: TrackNet,
    sample: TrainingSample,
    cfg: RunConfig,
    rng: np.random.Generator,
    grad_scale: float = 1.0,
    augment: bool = True,
) -> dict:
    """Run one window, backpropagating each supervised frame; returns mean
    loss components."""
    if augment and cfg.augment_flip and rng.random() < 0.5:
        sample = _mirror_sample(sample)
    weights = LossWeights(
        cfg.lambda_mask, cfg.lambda_center, cfg.lambda_quality, cfg.lambda_score
    )
    memory = MemoryBank(sample.memory_size)

    ref = _jitter_box(sample.boxes[0], cfg, rng) if augment else sample.boxes[0]
    crop, empty = crop_search_region(
        sample.frames[0], ref, cfg.margin, cfg.crop_size, rng
    )
    if empty:
        raise ValueError(f"empty first frame in sample {sample.seq_id}@{sample.start}")
    full_mask = points_in_box(crop, box_in_frame(sample.boxes[0], ref))
    net.bootstrap(crop, full_mask, memory)

    totals: dict[str, float] = {}
    n_supervised = 0
    for t in range(1, len(sample.frames)):
        ref = _jitter_box(sample.boxes[t - 1], cfg, rng) if augment else sample.boxes[t - 1]
        crop, empty = crop_search_region(
            sample.frames[t], ref, cfg.margin, cfg.crop_size, rng
        )
        if empty:
            continue
        gt_local = box_in_frame(sample.boxes[t], ref)
        gt_center = gt_local.center_array()

        center_transform = None
        if not sample.rigid and cfg.positive_fraction > 0:
            noise_rng = np.random.default_rng(rng.integers(2**63))

            def center_transform(centers, _gt=gt_center, _rng=noise_rng):
                return positive_sampling(
                    centers,
                    _gt,
                    rigid=False,
                    fraction=cfg.positive_fraction,
                    sigma=cfg.positive_sigma,
                    rng=_rng,
                )

        mask_init = np.full(cfg.n_seeds, 0.5)
        box = sample.boxes[0]
        fwd = net.forward_frame(
            crop, mask_init, memory, (box.l, box.w, box.h), center_transform
        )
        seed_gt_mask = points_in_box(fwd.seeds.coords, gt_local)
        targets = FrameTargets(
            gt_box=gt_local,
            gt_mask=seed_gt_mask,
            gt_center=gt_center,
            gt_motion=relative_motion(ref, sample.boxes[t]),
        )
        breakdown = compute_losses(
            fwd.vote,
            fwd.proposals,
            targets,
            weights,
            cfg.positive_radius,
            cfg.smooth_l1_beta,
        )
        breakdown.total.backward(np.asarray(grad_scale))
        n_supervised += 1
        for key, val in breakdown.components.items():
            totals[key] = totals.get(key, 0.0) + val
        totals["total"] = totals.get("total", 0.0) + float(breakdown.total.data)

        entry_mask = seed_gt_mask if cfg.gt_memory_masks else fwd.vote.mask.data
        memory.write(net.make_entry(fwd, entry_mask))

    if n_supervised == 0:
        return {"total": 0.0}
    return {k: v / n_supervised for k, v in totals.items()}


def train_on_sequences(
    cfg: RunConfig,
    sequences,
    net: TrackNet | None = None,
    progress=None,
) -> TrainResult:
    """Train on every sliding window of the given sequences."""
    if net is None:
        net = TrackNet(cfg, np.random.default_rng(cfg.seed))
    opt = Adam(net.store, lr=cfg.lr)
    samples = []
    for seq in sequences:
        samples.extend(
            make_training_samples(seq, cfg.sample_len, cfg.memory_train, cfg.window_stride)
        )
    if not samples:
        raise ValueError("no training samples (sequences shorter than sample_len?)")
    rng = np.random.default_rng(cfg.seed + 1)
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(samples))
        epoch_totals: dict[str, float] = {}
        pending = 0
        for pos, idx in enumerate(order):
            sample = samples[idx]
            scale = 1.0 / (cfg.batch_size * max(1, len(sample.frames) - 1))
            stats = train_sample(net, sample, cfg, rng, grad_scale=scale)
            pending += 1
            if pending == cfg.batch_size or pos == len(order) - 1:
                opt.step()
                net.store.zero_grad()
                pending = 0
            for key, val in stats.items():
                epoch_totals[key] = epoch_totals.get(key, 0.0) + val
        record = {k: v / len(samples) for k, v in epoch_totals.items()}
        record["epoch"] = epoch
        history.append(record)
        if progress is not None:
            progress(record)
    return TrainResult(net=net, history=history)


def write_loss_log(path, history: list[dict]) -> None:
    keys = ["epoch", "total", "mask", "center", "quality", "score", "bbox"]
    lines = [",".join(keys)]
    for record in history:
        lines.append(",".join(str(record.get(k, "")) for k in keys))
    from pathlib import Path

    Path(path).write_text("\n".join(lines) + "\n")
