import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qsilk import (AttentionProbe, LatentTensor, ValidationError, attention_confidence,
                   entropy_confidence, plan_grid, proxy_confidence, quantile_map,
                   uniform_confidence)
from qsilk.confidence import token_entropies

from oracles import gradient_magnitude_loops, pooled_window_means, softmax_entropy


def _latent(arr):
    return LatentTensor.from_array(np.asarray(arr, dtype=np.float32))


class TestProxyConfidence:
    def test_constant_plane_is_zero(self):
        z = _latent(np.full((2, 3, 16, 16), 4.2))
        cmap = proxy_confidence(z, plan_grid(16, 16, 8, 4))
        assert (cmap.values == 0.0).all()

    def test_pure_ramp_is_one_everywhere(self):
        h = w = 24
        ramp = np.tile(np.arange(w, dtype=np.float32), (h, 1))
        z = _latent(np.broadcast_to(ramp, (1, 4, h, w)).copy())
        cmap = proxy_confidence(z, plan_grid(h, w, 8, 4))
        assert np.allclose(cmap.values, 1.0, atol=1e-9)

    def test_edge_tile_wins(self):
        h = w = 32
        plane = np.zeros((h, w), dtype=np.float32)
        plane[:, 20:] = 5.0  # vertical edge at x=20
        z = _latent(plane[None, None])
        grid = plan_grid(h, w, 8, 8)
        cmap = proxy_confidence(z, grid)
        pooled = pooled_window_means(
            gradient_magnitude_loops(plane.astype(np.float64)),
            grid.positions_y, grid.positions_x, grid.tile)
        assert np.argmax(cmap.values[0]) == np.argmax(pooled)
        assert cmap.values[0].max() == pytest.approx(1.0, abs=1e-12)

    def test_matches_bruteforce_pooled_gradient(self):
        rng = np.random.default_rng(12)
        data = rng.standard_normal((1, 2, 11, 13)).astype(np.float32)
        z = _latent(data)
        grid = plan_grid(11, 13, 4, 3)
        cmap = proxy_confidence(z, grid)
        g = gradient_magnitude_loops(data.mean(axis=1)[0].astype(np.float64))
        pooled = pooled_window_means(g, grid.positions_y, grid.positions_x, grid.tile)
        assert np.allclose(cmap.values[0], pooled / pooled.max(), atol=1e-9)

    def test_shift_and_scale_invariance(self):
        rng = np.random.default_rng(13)
        data = rng.standard_normal((2, 3, 20, 20)).astype(np.float32)
        grid = plan_grid(20, 20, 8, 4)
        base = proxy_confidence(_latent(data), grid)
        moved = proxy_confidence(_latent(3.5 * data + 11.0), grid)
        assert np.allclose(base.values, moved.values, atol=1e-6)

    def test_per_sample_normalization(self):
        rng = np.random.default_rng(14)
        data = rng.standard_normal((3, 1, 12, 12)).astype(np.float32)
        data[1] *= 100.0
        cmap = proxy_confidence(_latent(data), plan_grid(12, 12, 6, 3))
        for b in range(3):
            assert cmap.values[b].max() == pytest.approx(1.0, abs=1e-12)


class TestAttentionConfidence:
    def test_degenerate_identical_rows_give_half(self):
        q = np.ones((16, 4))
        k = np.ones((8, 4))
        probe = AttentionProbe(q, k, (4, 4))
        cmap = attention_confidence(probe, plan_grid(16, 16, 8, 4))
        assert np.allclose(cmap.values, 0.5)

    def test_zero_queries_give_half(self):
        probe = AttentionProbe(np.zeros((9, 3)), np.random.default_rng(0).standard_normal((5, 3)),
                               (3, 3))
        cmap = attention_confidence(probe, plan_grid(9, 9, 3, 3))
        assert np.allclose(cmap.values, 0.5)

    def test_onehot_vs_uniform_span_zero_one(self):
        # query 0 attends one-hot (entropy 0), query 1 attends uniformly (entropy ln n_k)
        k = np.eye(2) * 40.0
        q = np.array([[40.0, 0.0], [0.0, 0.0]])
        ent = token_entropies(AttentionProbe(q, k, (1, 2)))
        assert ent[0, 0] == pytest.approx(0.0, abs=1e-6)
        assert ent[0, 1] == pytest.approx(math.log(2), abs=1e-9)
        cmap = entropy_confidence(ent, plan_grid(2, 2, 1, 1))
        assert cmap.values[0].min() == pytest.approx(0.0, abs=1e-9)
        assert cmap.values[0].max() == pytest.approx(1.0, abs=1e-9)

    def test_key_permutation_invariance(self):
        rng = np.random.default_rng(21)
        q = rng.standard_normal((12, 6))
        k = rng.standard_normal((10, 6))
        grid = plan_grid(12, 12, 6, 6)
        base = attention_confidence(AttentionProbe(q, k, (3, 4)), grid)
        perm = attention_confidence(AttentionProbe(q, k[rng.permutation(10)], (3, 4)), grid)
        assert np.allclose(base.values, perm.values, atol=1e-9)

    def test_entropy_matches_direct_softmax(self):
        rng = np.random.default_rng(22)
        q = rng.standard_normal((6, 5))
        k = rng.standard_normal((7, 5))
        ent = token_entropies(AttentionProbe(q, k, (2, 3)))
        scale = 1.0 / math.sqrt(5)
        for i in range(6):
            expect = softmax_entropy(q[i] @ k.T * scale)
            assert ent.ravel()[i] == pytest.approx(expect, abs=1e-9)

    def test_token_subsampling_fills_nearest(self):
        rng = np.random.default_rng(23)
        q = rng.standard_normal((8, 4))
        k = rng.standard_normal((5, 4))
        full = token_entropies(AttentionProbe(q, k, (2, 4)))
        strided = token_entropies(AttentionProbe(q, k, (2, 4), token_stride=2))
        kept = full.ravel()[::2]
        # index i maps to kept neighbor (i + 1) // 2 clipped
        expect = kept[np.minimum((np.arange(8) + 1) // 2, 3)].reshape(2, 4)
        assert np.allclose(strided, expect, atol=1e-12)

    def test_head_average_and_stride(self):
        rng = np.random.default_rng(24)
        q = rng.standard_normal((4, 6, 3))
        k = rng.standard_normal((4, 5, 3))
        all_heads = token_entropies(AttentionProbe(q, k, (2, 3)))
        manual = np.mean([token_entropies(AttentionProbe(q[i], k[i], (2, 3)))
                          for i in range(4)], axis=0)
        assert np.allclose(all_heads, manual, atol=1e-12)
        strided = token_entropies(AttentionProbe(q, k, (2, 3), head_stride=2))
        manual2 = np.mean([token_entropies(AttentionProbe(q[i], k[i], (2, 3)))
                           for i in (0, 2)], axis=0)
        assert np.allclose(strided, manual2, atol=1e-12)

    def test_probe_validation(self):
        with pytest.raises(ValidationError):
            AttentionProbe(np.zeros((4, 2)), np.zeros((4, 3)), (2, 2))
        with pytest.raises(ValidationError):
            AttentionProbe(np.zeros((4, 2)), np.zeros((4, 2)), (3, 2))
        with pytest.raises(ValidationError):
            AttentionProbe(np.zeros(4), np.zeros(4), (2, 2))


class TestQuantileMap:
    def test_exact_endpoints_and_middle(self):
        assert quantile_map(0.0) == (0.0, 0.5)
        assert quantile_map(1.0) == (0.5, 1.0)
        assert quantile_map(0.5) == (0.125, 0.875)

    def test_domain_validation(self):
        with pytest.raises(ValidationError):
            quantile_map(-0.01)
        with pytest.raises(ValidationError):
            quantile_map(1.01)

    @given(st.floats(0, 1), st.floats(0, 1))
    def test_monotone_and_bracketing(self, h1, h2):
        lo, hi = min(h1, h2), max(h1, h2)
        ql1, qh1 = quantile_map(lo)
        ql2, qh2 = quantile_map(hi)
        assert ql1 <= ql2 and qh1 <= qh2
        for ql, qh in ((ql1, qh1), (ql2, qh2)):
            assert 0.0 <= ql <= 0.5 <= qh <= 1.0

    def test_array_form(self):
        ql, qh = quantile_map(np.array([0.0, 0.5, 1.0]))
        assert ql.tolist() == [0.0, 0.125, 0.5]
        assert qh.tolist() == [0.5, 0.875, 1.0]


def test_uniform_confidence_hook():
    grid = plan_grid(8, 8, 4, 2)
    cmap = uniform_confidence(grid, 0.3, batch=2)
    assert cmap.values.shape == (2, grid.n_tiles)
    assert (cmap.values == 0.3).all()
    with pytest.raises(ValidationError):
        uniform_confidence(grid, 1.5)
