"""Coarse-to-fine localization: center voting, proposal sampling, box-prior
reference grids, point-to-grid feature transfer and 3D CNN refinement.

The reference grid for a proposal center c contains the points

    c + ((2i - n_x - 1) / (2 n_x) * e_x,
         (2j - n_y - 1) / (2 n_y) * e_y,
         (2k - n_z - 1) / (2 n_z) * e_z)

for i in [1, n_x], j in [1, n_y], k in [1, n_z], emitted in lexicographic
(i, j, k) order, where (e_x, e_y, e_z) are the box extents along the
coordinate axes.  The grid is axis-aligned in the canonical frame, always
strictly inside the extents, centred on c, and scales linearly with them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .autodiff import (
    Tensor,
    amax,
    concatenate,
    pad_axis,
    relu,
    reshape,
    sigmoid,
    take0,
)
from .backbone import nearest_origin_index
from .geometry import Motion4DOF
from .nn import Linear, MLP, ParamStore


@dataclass
class VoteOutput:
    """Per-seed center votes with target mask and coarse quality scores."""

    centers: Tensor  # (N, 3)
    mask: Tensor  # (N,) probabilities
    mask_logits: Tensor
    quality: Tensor  # (N,) probabilities
    quality_logits: Tensor


@dataclass
class ProposalSet:
    seed_indices: np.ndarray  # (N_p,) source seed per proposal
    centers: Tensor  # (N_p, 3)
    dense_maps: Tensor  # (N_p, n_x, n_y, n_z, C)
    box_params: Tensor  # (N_p, 4): translation residual + heading delta
    scores: Tensor  # (N_p,) probabilities
    score_logits: Tensor


def reference_offsets(
    extent_x: float, extent_y: float, extent_z: float, n_x: int, n_y: int, n_z: int
) -> np.ndarray:
    """Closed-form grid offsets, lexicographic in (i, j, k)."""
    if min(n_x, n_y, n_z) < 1:
        raise ValueError("grid sizes must be >= 1")
    if min(extent_x, extent_y, extent_z) <= 0:
        raise ValueError("extents must be positive")
    ox = (2.0 * np.arange(1, n_x + 1) - n_x - 1) / (2.0 * n_x) * extent_x
    oy = (2.0 * np.arange(1, n_y + 1) - n_y - 1) / (2.0 * n_y) * extent_y
    oz = (2.0 * np.arange(1, n_z + 1) - n_z - 1) / (2.0 * n_z) * extent_z
    grid = np.stack(np.meshgrid(ox, oy, oz, indexing="ij"), axis=-1)
    return grid.reshape(-1, 3)


def box_prior_reference_points(
    center, extent_x, extent_y, extent_z, n_x, n_y, n_z
) -> np.ndarray:
    """Reference points around one center."""
    return np.asarray(center, dtype=np.float64) + reference_offsets(
        extent_x, extent_y, extent_z, n_x, n_y, n_z
    )


def sample_proposals(centers: np.ndarray, n: int) -> np.ndarray:
    """Farthest point sampling over voted centers; the start is the center
    nearest the canonical origin.  Returns source indices."""
    centers = np.asarray(centers, dtype=np.float64)
    if n > centers.shape[0]:
        raise ValueError(f"cannot sample {n} proposals from {centers.shape[0]} votes")
    return kernels.fps_indices(centers, n, nearest_origin_index(centers))


def assemble_dense_map(ref_feats: Tensor, n_x: int, n_y: int, n_z: int) -> Tensor:
    """Reshape flat per-reference features into the (n_x, n_y, n_z, C) grid
    using the same lexicographic order as the reference points."""
    r, c = ref_feats.shape
    if r != n_x * n_y * n_z:
        raise ValueError(f"got {r} rows for a {n_x}x{n_y}x{n_z} grid")
    return reshape(ref_feats, (n_x, n_y, n_z, c))


def select_best(proposals: ProposalSet) -> Motion4DOF:
    """Highest-scoring proposal (lowest index on ties) as a rigid motion."""
    scores = proposals.scores.data
    if scores.shape[0] < 1:
        raise ValueError("need at least one proposal")
    best = int(np.argmax(scores))
    center = proposals.centers.data[best] + proposals.box_params.data[best, :3]
    return Motion4DOF(center[0], center[1], center[2], proposals.box_params.data[best, 3])


def _conv_neighbor_indices(d: int, h: int, w: int) -> np.ndarray:
    """Flat indices of each cell's 3x3x3 neighbourhood in the padded volume."""
    pd, ph, pw = d + 2, h + 2, w + 2
    ci, cj, ck = np.meshgrid(np.arange(d), np.arange(h), np.arange(w), indexing="ij")
    oi, oj, ok = np.meshgrid(np.arange(3), np.arange(3), np.arange(3), indexing="ij")
    cell = ((ci * ph + cj) * pw + ck).reshape(-1, 1)
    off = ((oi * ph + oj) * pw + ok).reshape(1, -1)
    return cell + off


class Conv3dSame:
    """3x3x3 convolution, stride 1, zero same-padding, via gather + matmul."""

    def __init__(self, store: ParamStore, name: str, d_in: int, d_out: int, rng):
        limit = np.sqrt(6.0 / (27 * d_in + d_out))
        self.w = store.add(f"{name}.w", rng.uniform(-limit, limit, (27 * d_in, d_out)))
        self.b = store.add(f"{name}.b", np.zeros(d_out))
        self.d_in = d_in
        self.d_out = d_out

    def __call__(self, x: Tensor) -> Tensor:
        p, d, h, w, c = x.shape
        padded = pad_axis(pad_axis(pad_axis(x, 1, 1, 1), 2, 1, 1), 3, 1, 1)
        m = (d + 2) * (h + 2) * (w + 2)
        flat = reshape(padded, (p * m, c))
        nbr = _conv_neighbor_indices(d, h, w)  # (d*h*w, 27)
        idx = nbr[None, :, :] + (np.arange(p) * m)[:, None, None]
        cols = take0(flat, idx)  # (p, d*h*w, 27, c)
        out = relu(reshape(cols, (p * d * h * w, 27 * c)) @ self.w + self.b)
        return reshape(out, (p, d, h, w, self.d_out))


class LocalizationHead:
    """Vote target centers from fused features, then refine box parameters
    on box-prior reference grids."""

    def __init__(
        self,
        store: ParamStore,
        name: str,
        rng: np.random.Generator,
        dim: int,
        grid: tuple[int, int, int] = (4, 4, 4),
        n_proposals: int = 16,
        k: int = 8,
        vote_hidden: tuple[int, ...] = (),
        cnn_channels: tuple[int, ...] = (),
        head_hidden: tuple[int, ...] = (),
        include_coords_in_vote: bool = False,
        zero_init_head: bool = True,
    ):
        self.grid = tuple(grid)
        self.n_proposals = n_proposals
        self.k = k
        self.dim = dim
        self.include_coords_in_vote = include_coords_in_vote
        cnn_channels = tuple(cnn_channels) if cnn_channels else (dim, dim)
        vote_in = dim + 3 if include_coords_in_vote else dim
        self.vote_mlp = MLP(store, f"{name}.vote", [vote_in, *vote_hidden, 5], rng)
        self.h_mlp = Linear(store, f"{name}.h", dim + 1, dim, rng)
        self.e_mlp = Linear(store, f"{name}.e", dim + 6, dim, rng)
        self.convs = []
        d_in = dim
        for i, d_out in enumerate(cnn_channels):
            self.convs.append(Conv3dSame(store, f"{name}.conv{i}", d_in, d_out, rng))
            d_in = d_out
        self.head_mlp = MLP(
            store,
            f"{name}.head",
            [d_in + 1, *head_hidden, 5],
            rng,
            zero_init_last=zero_init_head,
        )

    # -- coarse stage -------------------------------------------------------

    def vote_centers(self, fused: Tensor, coords: np.ndarray) -> VoteOutput:
        inp = fused
        if self.include_coords_in_vote:
            inp = concatenate([fused, Tensor(coords)], axis=1)
        out = self.vote_mlp(inp)  # (N, 5)
        centers = Tensor(coords) + out[:, 0:3]
        mask_logits = out[:, 3]
        quality_logits = out[:, 4]
        return VoteOutput(
            centers=centers,
            mask=sigmoid(mask_logits),
            mask_logits=mask_logits,
            quality=sigmoid(quality_logits),
            quality_logits=quality_logits,
        )

    # -- dense stage ---------------------------------------------------------

    def point_to_reference(
        self, fused: Tensor, mask: Tensor, coords: np.ndarray, refs: Tensor
    ) -> Tensor:
        """Aggregate seed features onto reference points with a max over the
        k nearest seeds of a shared per-edge MLP."""
        n = coords.shape[0]
        k = min(self.k, n)
        r = refs.shape[0]
        fhat = relu(self.h_mlp(concatenate([fused, reshape(mask, (n, 1))], axis=1)))
        idx = kernels.knn_indices(refs.data, coords, k)  # (r, k)
        fj = take0(fhat, idx)  # (r, k, C)
        xj = coords[idx]  # (r, k, 3) constant
        refs_e = reshape(refs, (r, 1, 3))
        rel = Tensor(xj) - refs_e
        refs_b = refs_e + Tensor(np.zeros((r, k, 3)))
        edge = concatenate([fj, rel, refs_b], axis=2)
        out = relu(self.e_mlp(reshape(edge, (r * k, self.dim + 6))))
        return amax(reshape(out, (r, k, self.dim)), axis=1)

    def refine(
        self,
        dense_maps: Tensor,
        quality_at_proposals: Tensor,
    ) -> tuple[Tensor, Tensor, Tensor]:
        """Shared 3D CNN + global max pool; the coarse quality scalar joins
        the pooled feature before the final prediction."""
        x = dense_maps
        for conv in self.convs:
            x = conv(x)
        p = x.shape[0]
        pooled = amax(reshape(x, (p, -1, x.shape[-1])), axis=1)  # (P, C')
        feat = concatenate([pooled, reshape(quality_at_proposals, (p, 1))], axis=1)
        out = self.head_mlp(feat)  # (P, 5)
        box_params = out[:, 0:4]
        score_logits = out[:, 4]
        return box_params, score_logits, sigmoid(score_logits)

    def propose(
        self,
        fused: Tensor,
        vote: VoteOutput,
        coords: np.ndarray,
        box_extents: tuple[float, float, float],
        center_transform=None,
    ) -> ProposalSet:
        """Sample proposals from the votes and refine them on box-prior
        grids sized by ``box_extents`` (extent along x, y, z).

        ``center_transform`` optionally rewrites the proposal centers
        (training-time positive sampling) before the grids are built.
        """
        nx, ny, nz = self.grid
        idx = sample_proposals(vote.centers.data, self.n_proposals)
        centers = take0(vote.centers, idx)
        if center_transform is not None:
            centers = center_transform(centers)
        offsets = reference_offsets(*box_extents, nx, ny, nz)  # (R, 3)
        n_p, r = idx.shape[0], offsets.shape[0]
        refs = reshape(
            reshape(centers, (n_p, 1, 3)) + Tensor(offsets[None, :, :]), (n_p * r, 3)
        )
        ref_feats = self.point_to_reference(fused, vote.mask, coords, refs)
        dense = reshape(ref_feats, (n_p, nx, ny, nz, self.dim))
        quality_p = take0(vote.quality, idx)
        box_params, score_logits, scores = self.refine(dense, quality_p)
        return ProposalSet(
            seed_indices=idx,
            centers=centers,
            dense_maps=dense,
            box_params=box_params,
            scores=scores,
            score_logits=score_logits,
        )
