"""Training objectives and the positive-sampling augmentation.

The composite loss couples five terms: target-mask cross-entropy, center
MSE over foreground seeds, quality cross-entropy against a 0.3 m radius
around the true center, refined-score cross-entropy against the same
radius on the final predicted centers, and a smooth-L1 box loss over
positive proposals only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, relu, softplus, take0, tmean
from .geometry import Box3D, Motion4DOF
from .localization import ProposalSet, VoteOutput


@dataclass(frozen=True)
class LossWeights:
    lambda_m: float = 0.2
    lambda_c: float = 10.0
    lambda_q: float = 1.0
    lambda_s: float = 1.0

    def __post_init__(self):
        for name in ("lambda_m", "lambda_c", "lambda_q", "lambda_s"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass
class FrameTargets:
    """Ground truth for one supervised frame, in the crop's canonical frame."""

    gt_box: Box3D
    gt_mask: np.ndarray  # (N,) binary at seed resolution
    gt_center: np.ndarray  # (3,)
    gt_motion: Motion4DOF


@dataclass
class LossBreakdown:
    total: Tensor
    components: dict[str, float]
    n_foreground: int
    n_positive: int


def bce_with_logits(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean binary cross-entropy from logits (stable for any magnitude)."""
    labels = np.asarray(labels, dtype=np.float64)
    loss = softplus(logits) - logits * labels
    return tmean(loss)


def smooth_l1(pred, gt, beta: float = 1.0) -> Tensor:
    """Mean smooth-L1: 0.5 e^2 / beta below beta, |e| - beta/2 above."""
    pred = pred if isinstance(pred, Tensor) else Tensor(pred)
    gt = np.asarray(gt if not isinstance(gt, Tensor) else gt.data, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    err = pred - Tensor(gt)
    abs_err = relu(err) + relu(-err)
    quadratic = (abs_err.data < beta).astype(np.float64)
    out = quadratic * (0.5 / beta) * err * err + (1.0 - quadratic) * (
        abs_err - 0.5 * beta
    )
    return tmean(out)


def positive_sampling(
    centers: Tensor,
    gt_center: np.ndarray,
    rigid: bool,
    fraction: float,
    sigma: float,
    rng: np.random.Generator,
) -> Tensor:
    """Replace the proposals farthest from the true center with perturbed
    copies of it (training-time balancing for non-rigid categories).

    Replaced rows become constants (no gradient); vertical noise is halved.
    Rigid categories pass through unchanged.
    """
    if rigid or fraction <= 0.0:
        return centers
    n = centers.shape[0]
    n_replace = int(np.rint(fraction * n))
    if n_replace == 0:
        return centers
    gt_center = np.asarray(gt_center, dtype=np.float64)
    dist = np.linalg.norm(centers.data - gt_center, axis=1)
    replace = np.argsort(-dist, kind="stable")[:n_replace]
    keep = np.ones((n, 1))
    keep[replace] = 0.0
    noise = rng.normal(0.0, sigma, size=(n_replace, 3))
    noise[:, 2] *= 0.5
    repl = np.zeros((n, 3))
    repl[replace] = gt_center + noise
    return centers * Tensor(keep) + Tensor(repl)


def _check_finite(name: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"non-finite values in {name}")


def compute_losses(
    vote: VoteOutput,
    proposals: ProposalSet,
    targets: FrameTargets,
    weights: LossWeights = LossWeights(),
    positive_radius: float = 0.3,
    smooth_l1_beta: float = 1.0,
) -> LossBreakdown:
    """Weighted sum of the five objectives plus per-component values."""
    gt_center = np.asarray(targets.gt_center, dtype=np.float64)
    gt_mask = np.asarray(targets.gt_mask, dtype=np.float64)
    _check_finite("vote centers", vote.centers.data)
    _check_finite("vote mask logits", vote.mask_logits.data)
    _check_finite("proposal box params", proposals.box_params.data)
    _check_finite("proposal score logits", proposals.score_logits.data)
    _check_finite("targets", gt_center)
    _check_finite("gt mask", gt_mask)

    l_mask = bce_with_logits(vote.mask_logits, gt_mask)

    fg = np.flatnonzero(gt_mask > 0.5)
    if fg.size:
        diff = take0(vote.centers, fg) - Tensor(gt_center)
        l_center = tmean(diff * diff)
    else:
        l_center = Tensor(0.0)

    vote_dist = np.linalg.norm(vote.centers.data - gt_center, axis=1)
    labels_q = (vote_dist < positive_radius).astype(np.float64)
    l_quality = bce_with_logits(vote.quality_logits, labels_q)

    final_centers = proposals.centers.data + proposals.box_params.data[:, :3]
    final_dist = np.linalg.norm(final_centers - gt_center, axis=1)
    labels_s = (final_dist < positive_radius).astype(np.float64)
    l_score = bce_with_logits(proposals.score_logits, labels_s)

    positives = np.flatnonzero(labels_s > 0.5)
    if positives.size:
        gt_params = np.concatenate(
            [
                gt_center[None, :] - proposals.centers.data[positives],
                np.full((positives.size, 1), targets.gt_motion.dtheta),
            ],
            axis=1,
        )
        l_bbox = smooth_l1(take0(proposals.box_params, positives), gt_params, smooth_l1_beta)
    else:
        l_bbox = Tensor(0.0)

    total = (
        weights.lambda_m * l_mask
        + weights.lambda_c * l_center
        + weights.lambda_q * l_quality
        + weights.lambda_s * l_score
        + l_bbox
    )
    components = {
        "mask": float(l_mask.data),
        "center": float(l_center.data),
        "quality": float(l_quality.data),
        "score": float(l_score.data),
        "bbox": float(l_bbox.data),
    }
    return LossBreakdown(
        total=total,
        components=components,
        n_foreground=int(fg.size),
        n_positive=int(positives.size),
    )
