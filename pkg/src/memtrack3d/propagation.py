"""Memory-based feature propagation.

Past frames live in a FIFO bank as (seed coordinates, per-layer reference
features, target mask) triples.  A stack of identical pre-norm transformer
layers propagates information from the bank into the current frame through
two parallel branches: a geometric branch and a mask branch that consumes
the geometric branch's attention weights verbatim.  The geometric branch
never reads mask-side state, so perturbing mask parameters cannot change
geometric outputs.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, matmul, softmax
from .nn import Linear, LayerNorm, MLP, ParamStore, identity_ffn_weights


@dataclass
class FrameEntry:
    """One memory slot: everything a past frame contributes."""

    coords: np.ndarray  # (N, 3)
    ref_feats: list[np.ndarray]  # one (N, C) array per propagation layer
    mask: np.ndarray  # (N,) probabilities in [0, 1]

    def __post_init__(self):
        if np.min(self.mask, initial=0.0) < 0.0 or np.max(self.mask, initial=0.0) > 1.0:
            raise ValueError("entry mask values must lie in [0, 1]")


class MemoryBank:
    """FIFO store of at most ``capacity`` frame entries (oldest evicted)."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("memory capacity must be >= 1")
        self.capacity = capacity
        self.entries: list[FrameEntry] = []

    def __len__(self) -> int:
        return len(self.entries)

    def write(self, entry: FrameEntry) -> None:
        self.entries.append(entry)
        if len(self.entries) > self.capacity:
            del self.entries[0]

    def replace_last(self, entry: FrameEntry) -> None:
        self.entries[-1] = entry

    def coords(self) -> np.ndarray:
        return np.concatenate([e.coords for e in self.entries], axis=0)

    def layer_feats(self, layer: int) -> np.ndarray:
        return np.concatenate([e.ref_feats[layer] for e in self.entries], axis=0)

    def masks(self) -> np.ndarray:
        return np.concatenate([e.mask for e in self.entries], axis=0)

    def fingerprint(self) -> str:
        digest = hashlib.sha256()
        for e in self.entries:
            digest.update(np.ascontiguousarray(e.coords).tobytes())
            for f in e.ref_feats:
                digest.update(np.ascontiguousarray(f).tobytes())
            digest.update(np.ascontiguousarray(e.mask).tobytes())
        return digest.hexdigest()


@dataclass
class AttentionTrace:
    """Instrumentation: the weight matrices each branch actually consumed."""

    cross_geometric: list = field(default_factory=list)
    cross_mask: list = field(default_factory=list)
    self_geometric: list = field(default_factory=list)
    self_mask: list = field(default_factory=list)


def attention(q: Tensor, k: Tensor, v: Tensor) -> tuple[Tensor, Tensor]:
    """softmax(q kᵀ / sqrt(d)) v; also returns the weight matrix."""
    d = q.shape[-1]
    if d == 0:
        raise ValueError("attention requires a positive key dimension")
    scores = matmul(q, k.T) * (1.0 / math.sqrt(d))
    weights = softmax(scores, axis=-1)
    return matmul(weights, v), weights


def _split_heads(t: Tensor, n_heads: int) -> list[Tensor]:
    d = t.shape[-1]
    if d % n_heads:
        raise ValueError(f"dimension {d} not divisible by {n_heads} heads")
    step = d // n_heads
    return [t[:, i * step : (i + 1) * step] for i in range(n_heads)]


def shared_attention(
    q: Tensor, k: Tensor, v_geo: Tensor, v_mask: Tensor, n_heads: int = 1
) -> tuple[Tensor, Tensor, list[Tensor]]:
    """Run attention once on (q, k, v_geo) and reuse the exact weight
    matrices to aggregate v_mask."""
    from .autodiff import concatenate

    outs_g, outs_m, weights = [], [], []
    for qh, kh, vgh, vmh in zip(
        _split_heads(q, n_heads),
        _split_heads(k, n_heads),
        _split_heads(v_geo, n_heads),
        _split_heads(v_mask, n_heads),
    ):
        out_g, w = attention(qh, kh, vgh)
        outs_g.append(out_g)
        outs_m.append(matmul(w, vmh))
        weights.append(w)
    if n_heads == 1:
        return outs_g[0], outs_m[0], weights
    return concatenate(outs_g, axis=1), concatenate(outs_m, axis=1), weights


class PropagationLayer:
    """One pre-norm layer: memory cross-attention, in-frame self-attention,
    then per-branch feed-forward refinement."""

    def __init__(
        self,
        store: ParamStore,
        name: str,
        rng: np.random.Generator,
        dim: int,
        attn_dim: int,
        ffn_hidden: int,
        n_heads: int = 1,
        mask_self_value_tied: bool = False,
    ):
        self.n_heads = n_heads
        self.mask_self_value_tied = mask_self_value_tied
        d, c = attn_dim, dim

        def proj(pname, d_in, d_out):
            return Linear(store, f"{name}.{pname}", d_in, d_out, rng, bias=False)

        self.cross_q = proj("cross_q", c, d)
        self.cross_k = proj("cross_k", c, d)
        self.cross_v_geo = proj("cross_v_geo", c, d)
        self.cross_v_mask = proj("cross_v_mask", c, d)
        self.cross_out_geo = proj("cross_out_geo", d, c)
        self.cross_out_mask = proj("cross_out_mask", d, c)
        self.self_q = proj("self_q", c, d)
        self.self_k = proj("self_k", c, d)
        self.self_v_geo = proj("self_v_geo", c, d)
        if not mask_self_value_tied:
            self.self_v_mask = proj("self_v_mask", c, d)
        self.self_out_geo = proj("self_out_geo", d, c)
        self.self_out_mask = proj("self_out_mask", d, c)

        self.ln_x_cross = LayerNorm(store, f"{name}.ln_x_cross", c)
        self.ln_mem = LayerNorm(store, f"{name}.ln_mem", c)
        self.ln_mem_mask = LayerNorm(store, f"{name}.ln_mem_mask", c)
        self.ln_x_self = LayerNorm(store, f"{name}.ln_x_self", c)
        self.ln_y_self = LayerNorm(store, f"{name}.ln_y_self", c)
        self.ln_x_ffn = LayerNorm(store, f"{name}.ln_x_ffn", c)
        self.ln_y_ffn = LayerNorm(store, f"{name}.ln_y_ffn", c)

        self.ffn_geo = MLP(store, f"{name}.ffn_geo", [c, ffn_hidden, c], rng)
        self.ffn_mask = MLP(store, f"{name}.ffn_mask", [c, ffn_hidden, c], rng)
        self.pos_mlp = MLP(store, f"{name}.pos", [3, d, d], rng)
        self.mem_mask_embed = Linear(store, f"{name}.mem_mask_embed", 1, c, rng)

        w1, w2 = identity_ffn_weights(c)
        self.write_w1 = store.add(f"{name}.write.w1", w1)
        self.write_b1 = store.add(f"{name}.write.b1", np.zeros(2 * c))
        self.write_w2 = store.add(f"{name}.write.w2", w2)
        self.write_b2 = store.add(f"{name}.write.b2", np.zeros(c))

    def write_features(self, x: Tensor) -> Tensor:
        from .autodiff import relu

        hidden = relu(matmul(x, self.write_w1) + self.write_b1)
        return matmul(hidden, self.write_w2) + self.write_b2

    def __call__(
        self,
        x: Tensor,
        y: Tensor,
        coords: np.ndarray,
        mem_feats: np.ndarray,
        mem_masks: np.ndarray,
        mem_coords: np.ndarray,
        trace: AttentionTrace | None = None,
    ) -> tuple[Tensor, Tensor]:
        pe_cur = self.pos_mlp(Tensor(coords))
        pe_mem = self.pos_mlp(Tensor(mem_coords))

        xb = self.ln_x_cross(x)
        mb = self.ln_mem(Tensor(mem_feats))
        ymb = self.ln_mem_mask(self.mem_mask_embed(Tensor(mem_masks[:, None])))

        q = self.cross_q(xb) + pe_cur
        k = self.cross_k(mb) + pe_mem
        attn_g, attn_m, weights = shared_attention(
            q, k, self.cross_v_geo(mb), self.cross_v_mask(ymb), self.n_heads
        )
        if trace is not None:
            trace.cross_geometric.append([w.data for w in weights])
            trace.cross_mask.append([w.data for w in weights])
        x1 = x + self.cross_out_geo(attn_g)
        y1 = y + self.cross_out_mask(attn_m)

        xd = self.ln_x_self(x1)
        yd = self.ln_y_self(y1)
        q2 = self.self_q(xd) + pe_cur
        k2 = self.self_k(xd) + pe_cur
        v_mask_proj = self.self_v_geo if self.mask_self_value_tied else self.self_v_mask
        attn_g2, attn_m2, weights2 = shared_attention(
            q2, k2, self.self_v_geo(xd), v_mask_proj(yd), self.n_heads
        )
        if trace is not None:
            trace.self_geometric.append([w.data for w in weights2])
            trace.self_mask.append([w.data for w in weights2])
        x2 = x1 + self.self_out_geo(attn_g2)
        y2 = y1 + self.self_out_mask(attn_m2)

        x3 = x2 + self.ffn_geo(self.ln_x_ffn(x2))
        y3 = y2 + self.ffn_mask(self.ln_y_ffn(y2))
        return x3, y3


class FeaturePropagator:
    """Stack of identical propagation layers plus the current-frame mask
    embedding and per-layer memory write heads."""

    def __init__(
        self,
        store: ParamStore,
        name: str,
        rng: np.random.Generator,
        dim: int,
        attn_dim: int | None = None,
        n_layers: int = 2,
        n_heads: int = 1,
        ffn_hidden: int | None = None,
        mask_self_value_tied: bool = False,
        write_from_input: bool = False,
    ):
        attn_dim = dim if attn_dim is None else attn_dim
        ffn_hidden = dim if ffn_hidden is None else ffn_hidden
        self.n_layers = n_layers
        self.write_from_input = write_from_input
        self.mask_proj = Linear(store, f"{name}.mask_proj", 1, dim, rng)
        self.layers = [
            PropagationLayer(
                store,
                f"{name}.layer{i}",
                rng,
                dim,
                attn_dim,
                ffn_hidden,
                n_heads,
                mask_self_value_tied,
            )
            for i in range(n_layers)
        ]

    def initial_mask_features(self, mask_init: np.ndarray) -> Tensor:
        return self.mask_proj(Tensor(np.asarray(mask_init, dtype=np.float64)[:, None]))

    def forward(
        self,
        feats: Tensor,
        coords: np.ndarray,
        mask_init: np.ndarray,
        memory: MemoryBank,
        trace: AttentionTrace | None = None,
    ) -> tuple[Tensor, Tensor, list[Tensor]]:
        """Propagate memory into the current frame.

        Returns geometric features, mask features and the per-layer
        reference features to store when this frame is written back.
        """
        if len(memory) == 0:
            raise ValueError("memory bank is empty; write the first frame before use")
        mask_init = np.asarray(mask_init, dtype=np.float64)
        if mask_init.min() < 0.0 or mask_init.max() > 1.0:
            raise ValueError("mask_init values must lie in [0, 1]")
        x = feats
        y = self.initial_mask_features(mask_init)
        mem_coords = memory.coords()
        mem_masks = memory.masks()
        write_feats: list[Tensor] = []
        for i, layer in enumerate(self.layers):
            x_in = x
            x, y = layer(
                x, y, coords, memory.layer_feats(i), mem_masks, mem_coords, trace
            )
            write_feats.append(layer.write_features(x_in if self.write_from_input else x))
        return x, y, write_feats

    def raw_entry(
        self, feats: Tensor, coords: np.ndarray, mask: np.ndarray
    ) -> FrameEntry:
        """Bootstrap entry for the very first frame: write heads applied to
        the backbone features so the bank is never empty."""
        refs = [layer.write_features(feats).data.copy() for layer in self.layers]
        return FrameEntry(coords=coords.copy(), ref_feats=refs, mask=np.asarray(mask, float).copy())
