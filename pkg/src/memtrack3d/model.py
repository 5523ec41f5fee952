"""The assembled tracking network: backbone, memory propagation and
localization head behind one parameter store."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .backbone import FeatureExtractor, SeedFeatures, downsample_mask
from .config import RunConfig
from .localization import LocalizationHead, ProposalSet, VoteOutput
from .nn import ParamStore
from .propagation import AttentionTrace, FeaturePropagator, FrameEntry, MemoryBank


@dataclass
class FrameForward:
    """Everything one frame's forward pass produces."""

    seeds: SeedFeatures
    geo_feats: Tensor  # (N, C)
    mask_feats: Tensor  # (N, C)
    fused: Tensor  # (N, C)
    write_feats: list[Tensor]  # per layer (N, C)
    vote: VoteOutput
    proposals: ProposalSet
    trace: AttentionTrace | None


class TrackNet:
    def __init__(self, cfg: RunConfig, rng: np.random.Generator | None = None):
        if rng is None:
            rng = np.random.default_rng(cfg.seed)
        self.cfg = cfg
        self.store = ParamStore()
        self.backbone = FeatureExtractor(
            self.store,
            "backbone",
            rng,
            n_seeds=cfg.n_seeds,
            feature_dim=cfg.feature_dim,
            widths=cfg.backbone_widths,
            k=cfg.backbone_k,
        )
        self.propagator = FeaturePropagator(
            self.store,
            "prop",
            rng,
            dim=cfg.feature_dim,
            attn_dim=cfg.attn_dim,
            n_layers=cfg.n_layers,
            n_heads=cfg.n_heads,
            ffn_hidden=cfg.ffn_hidden,
            mask_self_value_tied=cfg.mask_self_value_tied,
            write_from_input=cfg.memory_write_from_input,
        )
        self.head = LocalizationHead(
            self.store,
            "loc",
            rng,
            dim=cfg.feature_dim,
            grid=cfg.grid,
            n_proposals=cfg.n_proposals,
            k=cfg.ref_k,
            vote_hidden=cfg.vote_hidden,
            cnn_channels=cfg.cnn_channels,
            head_hidden=cfg.head_hidden,
            include_coords_in_vote=cfg.include_coords_in_vote,
        )

    def forward_frame(
        self,
        crop: np.ndarray,
        mask_init: np.ndarray,
        memory: MemoryBank,
        box_extents: tuple[float, float, float],
        center_transform=None,
        trace: AttentionTrace | None = None,
    ) -> FrameForward:
        """Full pipeline on one cropped, canonicalized frame."""
        seeds = self.backbone(crop)
        geo, mask_feats, write_feats = self.propagator.forward(
            seeds.feats, seeds.coords, mask_init, memory, trace
        )
        fused = geo + mask_feats
        vote = self.head.vote_centers(fused, seeds.coords)
        proposals = self.head.propose(
            fused, vote, seeds.coords, box_extents, center_transform
        )
        return FrameForward(
            seeds=seeds,
            geo_feats=geo,
            mask_feats=mask_feats,
            fused=fused,
            write_feats=write_feats,
            vote=vote,
            proposals=proposals,
            trace=trace,
        )

    def make_entry(self, fwd: FrameForward, mask: np.ndarray) -> FrameEntry:
        """Detach a forward pass into a memory entry."""
        return FrameEntry(
            coords=fwd.seeds.coords.copy(),
            ref_feats=[w.data.copy() for w in fwd.write_feats],
            mask=np.asarray(mask, dtype=np.float64).copy(),
        )

    def bootstrap(
        self, crop: np.ndarray, full_mask: np.ndarray, memory: MemoryBank
    ) -> SeedFeatures:
        """First-frame initialization: write a provisional self-entry, run
        one propagation pass against it, then store the refined entry with
        the ground-truth mask."""
        seeds = self.backbone(crop)
        seed_mask = downsample_mask(full_mask, seeds)
        memory.write(self.propagator.raw_entry(seeds.feats, seeds.coords, seed_mask))
        _, _, write_feats = self.propagator.forward(
            seeds.feats, seeds.coords, seed_mask, memory
        )
        memory.replace_last(
            FrameEntry(
                coords=seeds.coords.copy(),
                ref_feats=[w.data.copy() for w in write_feats],
                mask=seed_mask.copy(),
            )
        )
        return seeds
