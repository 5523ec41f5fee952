"""Memory bank semantics and the dual-branch propagation layers."""

import numpy as np
import pytest

from memtrack3d.autodiff import Tensor
from memtrack3d.nn import ParamStore
from memtrack3d.propagation import (
    AttentionTrace,
    FeaturePropagator,
    FrameEntry,
    MemoryBank,
    attention,
)

from helpers import assert_grads_match


@pytest.fixture
def rng():
    return np.random.default_rng(3)


def make_entry(rng, n=8, c=16, n_layers=2):
    return FrameEntry(
        coords=rng.normal(size=(n, 3)),
        ref_feats=[rng.normal(size=(n, c)) for _ in range(n_layers)],
        mask=rng.uniform(0, 1, size=n),
    )


def build(rng, dim=16, n_layers=2, **kwargs):
    store = ParamStore()
    prop = FeaturePropagator(store, "prop", rng, dim=dim, n_layers=n_layers, **kwargs)
    return store, prop


class TestAttention:
    def test_single_token_passthrough(self, rng):
        q = Tensor(rng.normal(size=(1, 4)))
        k = Tensor(rng.normal(size=(1, 4)))
        v = Tensor(rng.normal(size=(1, 4)))
        out, w = attention(q, k, v)
        np.testing.assert_allclose(out.data, v.data, atol=1e-12)
        np.testing.assert_allclose(w.data, [[1.0]], atol=1e-12)

    def test_zero_query_gives_column_mean(self, rng):
        q = Tensor(np.zeros((3, 4)))
        k = Tensor(rng.normal(size=(6, 4)))
        v = Tensor(rng.normal(size=(6, 4)))
        out, _ = attention(q, k, v)
        np.testing.assert_allclose(out.data, np.tile(v.data.mean(0), (3, 1)), atol=1e-12)

    def test_matches_brute_force(self, rng):
        q = rng.normal(size=(4, 8))
        k = rng.normal(size=(5, 8))
        v = rng.normal(size=(5, 8))
        out, w = attention(Tensor(q), Tensor(k), Tensor(v))
        scores = q @ k.T / np.sqrt(8)
        expect_w = np.exp(scores)
        expect_w /= expect_w.sum(axis=1, keepdims=True)
        np.testing.assert_allclose(w.data, expect_w, atol=1e-12)
        np.testing.assert_allclose(out.data, expect_w @ v, atol=1e-12)

    def test_rows_sum_to_one(self, rng):
        _, w = attention(
            Tensor(rng.normal(size=(7, 5))),
            Tensor(rng.normal(size=(9, 5))),
            Tensor(rng.normal(size=(9, 5))),
        )
        np.testing.assert_allclose(w.data.sum(axis=1), 1.0, atol=1e-9)

    def test_zero_dim_rejected(self):
        empty = Tensor(np.zeros((2, 0)))
        with pytest.raises(ValueError):
            attention(empty, empty, empty)


class TestMemoryBank:
    def test_fifo_eviction_order(self, rng):
        bank = MemoryBank(3)
        entries = [make_entry(rng) for _ in range(5)]
        for e in entries:
            bank.write(e)
        assert len(bank) == 3
        assert bank.entries == entries[2:]

    def test_never_exceeds_capacity(self, rng):
        bank = MemoryBank(2)
        for _ in range(10):
            bank.write(make_entry(rng))
            assert len(bank) <= 2

    def test_concatenation_shapes(self, rng):
        bank = MemoryBank(4)
        for _ in range(2):
            bank.write(make_entry(rng, n=8, c=16))
        assert bank.coords().shape == (16, 3)
        assert bank.layer_feats(0).shape == (16, 16)
        assert bank.masks().shape == (16,)

    def test_fingerprint_tracks_content(self, rng):
        bank = MemoryBank(2)
        bank.write(make_entry(rng))
        fp = bank.fingerprint()
        assert bank.fingerprint() == fp
        bank.write(make_entry(rng))
        assert bank.fingerprint() != fp

    def test_mask_range_validated(self, rng):
        with pytest.raises(ValueError):
            FrameEntry(
                coords=np.zeros((2, 3)),
                ref_feats=[np.zeros((2, 4))],
                mask=np.array([0.5, 1.5]),
            )


class TestPropagationForward:
    def test_output_shapes_and_write_count(self, rng):
        store, prop = build(rng)
        bank = MemoryBank(2)
        bank.write(make_entry(rng))
        feats = Tensor(rng.normal(size=(8, 16)))
        coords = rng.normal(size=(8, 3))
        x, y, writes = prop.forward(feats, coords, np.full(8, 0.5), bank)
        assert x.shape == (8, 16)
        assert y.shape == (8, 16)
        assert len(writes) == 2

    def test_uniform_mask_init_gives_identical_rows(self, rng):
        store, prop = build(rng)
        y0 = prop.initial_mask_features(np.full(8, 0.5))
        np.testing.assert_allclose(y0.data, np.tile(y0.data[0], (8, 1)), atol=1e-12)

    def test_empty_memory_rejected(self, rng):
        store, prop = build(rng)
        with pytest.raises(ValueError):
            prop.forward(
                Tensor(rng.normal(size=(8, 16))),
                rng.normal(size=(8, 3)),
                np.full(8, 0.5),
                MemoryBank(2),
            )

    def test_mask_init_range_checked(self, rng):
        store, prop = build(rng)
        bank = MemoryBank(2)
        bank.write(make_entry(rng))
        with pytest.raises(ValueError):
            prop.forward(
                Tensor(rng.normal(size=(8, 16))),
                rng.normal(size=(8, 3)),
                np.full(8, 1.5),
                bank,
            )

    def test_zero_params_residual_identity(self, rng):
        store, prop = build(rng)
        store.fill_zero()
        bank = MemoryBank(2)
        bank.write(make_entry(rng))
        feats = Tensor(rng.normal(size=(8, 16)))
        coords = rng.normal(size=(8, 3))
        layer = prop.layers[0]
        x, y = layer(
            feats,
            Tensor(rng.normal(size=(8, 16))),
            coords,
            bank.layer_feats(0),
            bank.masks(),
            bank.coords(),
        )
        np.testing.assert_array_equal(x.data, feats.data)

    def test_duplicated_memory_equals_single_entry(self, rng):
        store, prop = build(rng)
        entry = make_entry(rng)
        single = MemoryBank(3)
        single.write(entry)
        triple = MemoryBank(3)
        for _ in range(3):
            triple.write(entry)
        feats = Tensor(rng.normal(size=(8, 16)))
        coords = rng.normal(size=(8, 3))
        mask = np.full(8, 0.5)
        x1, y1, _ = prop.forward(feats, coords, mask, single)
        x3, y3, _ = prop.forward(feats, coords, mask, triple)
        np.testing.assert_allclose(x1.data, x3.data, atol=1e-6)
        np.testing.assert_allclose(y1.data, y3.data, atol=1e-6)


class TestSharedWeightsAndDecoupling:
    def test_mask_branch_consumes_identical_weights(self, rng):
        store, prop = build(rng)
        bank = MemoryBank(2)
        bank.write(make_entry(rng))
        bank.write(make_entry(rng))
        trace = AttentionTrace()
        prop.forward(
            Tensor(rng.normal(size=(8, 16))),
            rng.normal(size=(8, 3)),
            np.full(8, 0.5),
            bank,
            trace,
        )
        assert len(trace.cross_geometric) == 2
        for geo, msk in zip(trace.cross_geometric, trace.cross_mask):
            for wg, wm in zip(geo, msk):
                assert np.max(np.abs(wg - wm)) == 0.0
        for geo, msk in zip(trace.self_geometric, trace.self_mask):
            for wg, wm in zip(geo, msk):
                assert np.max(np.abs(wg - wm)) == 0.0

    def test_geometric_branch_ignores_mask_parameters(self, rng):
        store, prop = build(rng)
        bank = MemoryBank(2)
        bank.write(make_entry(rng))
        feats = Tensor(rng.normal(size=(8, 16)))
        coords = rng.normal(size=(8, 3))
        mask = np.full(8, 0.5)
        x_before, _, _ = prop.forward(feats, coords, mask, bank)
        mask_param_keys = [
            name
            for name in store.names()
            if any(
                tag in name
                for tag in (
                    "v_mask",
                    "out_mask",
                    "ffn_mask",
                    "mask_proj",
                    "mem_mask_embed",
                    "ln_y",
                    "ln_mem_mask",
                )
            )
        ]
        assert mask_param_keys
        perturb = np.random.default_rng(0)
        for name in mask_param_keys:
            p = store[name]
            p.data = p.data + perturb.normal(0.2, 1.0, size=p.data.shape)
        x_after, _, _ = prop.forward(feats, coords, mask, bank)
        assert np.max(np.abs(x_after.data - x_before.data)) == 0.0

    def test_multihead_also_shares_weights(self, rng):
        store, prop = build(rng, n_heads=2)
        bank = MemoryBank(2)
        bank.write(make_entry(rng))
        trace = AttentionTrace()
        prop.forward(
            Tensor(rng.normal(size=(8, 16))),
            rng.normal(size=(8, 3)),
            np.full(8, 0.5),
            bank,
            trace,
        )
        assert all(len(ws) == 2 for ws in trace.cross_geometric)


class TestGradients:
    def test_propagation_gradcheck(self, rng):
        store, prop = build(rng, dim=8, n_layers=2, ffn_hidden=8)
        bank = MemoryBank(2)
        bank.write(make_entry(rng, n=5, c=8))
        bank.write(make_entry(rng, n=5, c=8))
        feats = Tensor(rng.normal(size=(5, 8)), requires_grad=True)
        coords = rng.normal(size=(5, 3))
        weight = rng.normal(size=(5, 8))

        def loss():
            x, y, _ = prop.forward(feats, coords, np.full(5, 0.5), bank)
            return (x * weight).sum() + (y * weight).sum()

        params = dict(store.items())
        params["feats"] = feats
        assert_grads_match(
            loss, params, eps=1e-6, rtol=1e-4, sample=24, rng=np.random.default_rng(9)
        )
