"""Point feature extraction: edge convolutions over a kNN graph, farthest
point sampling down to seeds, and a grouping layer onto the seeds.

The extractor is deterministic: the FPS start index is the point nearest
the origin of the (already canonicalized) crop, and nearest-neighbour ties
resolve to the lowest index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .autodiff import Tensor, amax, concatenate, relu, reshape, take0
from .nn import Linear, ParamStore


@dataclass
class SeedFeatures:
    """Seed coordinates with their learned feature rows.

    ``indices`` maps each seed back to the row of the input cloud it was
    sampled from.
    """

    coords: np.ndarray  # (N, 3)
    feats: Tensor  # (N, C)
    indices: np.ndarray  # (N,)

    @property
    def count(self) -> int:
        return self.coords.shape[0]


def nearest_origin_index(points: np.ndarray) -> int:
    """Index of the point closest to the origin (lowest index on ties)."""
    return int(np.argmin(np.einsum("ij,ij->i", points, points)))


class EdgeConv:
    """Shared per-edge MLP on [f_j ; f_j - f_i] with max aggregation."""

    def __init__(self, store: ParamStore, name: str, d_in: int, d_out: int, rng):
        self.lin = Linear(store, name, 2 * d_in, d_out, rng)
        self.d_in = d_in
        self.d_out = d_out

    def __call__(self, feats: Tensor, neighbors: np.ndarray) -> Tensor:
        n, k = neighbors.shape
        fj = take0(feats, neighbors)  # (n, k, d_in)
        fi = reshape(feats, (n, 1, self.d_in))
        edge = concatenate([fj, fj - fi], axis=2)
        out = relu(self.lin(reshape(edge, (n * k, 2 * self.d_in))))
        return amax(reshape(out, (n, k, self.d_out)), axis=1)


class GroupingLayer:
    """Aggregate full-resolution features onto seed points."""

    def __init__(self, store: ParamStore, name: str, d_in: int, d_out: int, rng):
        self.lin = Linear(store, name, 2 * d_in, d_out, rng)
        self.d_in = d_in
        self.d_out = d_out

    def __call__(self, feats: Tensor, seed_idx: np.ndarray, neighbors: np.ndarray) -> Tensor:
        n, k = neighbors.shape
        fj = take0(feats, neighbors)  # (n, k, d_in)
        fi = reshape(take0(feats, seed_idx), (n, 1, self.d_in))
        edge = concatenate([fj, fj - fi], axis=2)
        out = relu(self.lin(reshape(edge, (n * k, 2 * self.d_in))))
        return amax(reshape(out, (n, k, self.d_out)), axis=1)


class FeatureExtractor:
    """Edge-convolution stack -> FPS -> grouping onto N seed points."""

    def __init__(
        self,
        store: ParamStore,
        name: str,
        rng: np.random.Generator,
        n_seeds: int,
        feature_dim: int,
        widths: tuple[int, ...] = (32, 64),
        k: int = 8,
    ):
        self.n_seeds = n_seeds
        self.k = k
        dims = [3, *widths, feature_dim]
        self.convs = [
            EdgeConv(store, f"{name}.ec{i}", dims[i], dims[i + 1], rng)
            for i in range(len(dims) - 1)
        ]
        self.group = GroupingLayer(store, f"{name}.group", feature_dim, feature_dim, rng)

    def __call__(self, cloud: np.ndarray) -> SeedFeatures:
        pts = np.asarray(cloud, dtype=np.float64)
        n = pts.shape[0]
        if n < self.n_seeds:
            raise ValueError(
                f"cloud has {n} points but {self.n_seeds} seeds are required"
            )
        k = min(self.k, n)
        neighbors = kernels.knn_indices(pts, pts, k)
        feats = Tensor(pts)
        for conv in self.convs:
            feats = conv(feats, neighbors)
        seed_idx = kernels.fps_indices(pts, self.n_seeds, nearest_origin_index(pts))
        seed_neighbors = kernels.knn_indices(pts[seed_idx], pts, k)
        seed_feats = self.group(feats, seed_idx, seed_neighbors)
        return SeedFeatures(coords=pts[seed_idx].copy(), feats=seed_feats, indices=seed_idx)


def downsample_mask(full_mask: np.ndarray, seeds: SeedFeatures) -> np.ndarray:
    """Transfer a full-resolution mask onto the seeds (exact index lookup;
    seeds are themselves input points)."""
    full_mask = np.asarray(full_mask, dtype=np.float64)
    return full_mask[seeds.indices].copy()
