import numpy as np
import pytest

from kvgate.attention import FullKvCache, ModelDims, attend, attention_weights
from oracles import naive_attend

DIMS = ModelDims(d_model=8, n_heads=2, head_dim=4, kv_heads=2, n_layers=2)


class TestModelDims:
    def test_head_split_must_cover_d_model(self):
        with pytest.raises(ValueError):
            ModelDims(d_model=10, n_heads=2, head_dim=4, kv_heads=2, n_layers=1)

    def test_kv_heads_must_divide_heads(self):
        with pytest.raises(ValueError):
            ModelDims(d_model=12, n_heads=3, head_dim=4, kv_heads=2, n_layers=1)

    def test_group_size(self):
        dims = ModelDims(d_model=64, n_heads=4, head_dim=16, kv_heads=2, n_layers=2)
        assert dims.group_size == 2


class TestFullKvCache:
    def test_single_append(self):
        cache = FullKvCache(DIMS)
        cache.append(0, np.ones((2, 4)), np.zeros((2, 4)))
        assert cache.length(0) == 1
        assert cache.length(1) == 0

    def test_append_order_preserved(self):
        cache = FullKvCache(DIMS)
        first = np.full((2, 4), 1.0)
        second = np.full((2, 4), 2.0)
        cache.append(0, first, first)
        cache.append(0, second, second)
        k, v = cache.view(0)
        assert k.shape == (2, 2, 4)
        assert np.array_equal(k[:, 0, :], first)
        assert np.array_equal(k[:, 1, :], second)

    def test_n_appends_all_heads(self):
        cache = FullKvCache(DIMS)
        rng = np.random.default_rng(0)
        for _ in range(17):
            cache.append(1, rng.standard_normal((2, 4)), rng.standard_normal((2, 4)))
        k, v = cache.view(1)
        assert k.shape == (2, 17, 4)
        assert v.shape == (2, 17, 4)

    def test_shape_mismatch_raises(self):
        cache = FullKvCache(DIMS)
        with pytest.raises(ValueError):
            cache.append(0, np.ones((2, 5)), np.ones((2, 5)))
        with pytest.raises(ValueError):
            cache.append(0, np.ones((3, 4)), np.ones((3, 4)))

    def test_empty_view_shape(self):
        cache = FullKvCache(DIMS)
        k, v = cache.view(0)
        assert k.shape == (2, 0, 4)


class TestAttend:
    def test_single_entry_returns_value(self):
        rng = np.random.default_rng(1)
        k = rng.standard_normal((1, 1, 4))
        v = rng.standard_normal((1, 1, 4))
        q = rng.standard_normal((1, 4))
        assert np.array_equal(attend(q, k, v), v[:, 0, :])

    def test_orthogonal_query_averages_values(self):
        # q orthogonal to both keys -> two zero logits -> equal weights
        k = np.zeros((1, 2, 4))
        k[0, 0, 0] = 1.0
        k[0, 1, 1] = 1.0
        q = np.array([[0.0, 0.0, 3.0, -2.0]])
        v = np.stack([np.arange(4.0), np.arange(4.0) + 10])[None, :, :]
        out = attend(q, k, v)
        assert np.allclose(out[0], (v[0, 0] + v[0, 1]) / 2, atol=1e-15)

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(2)
        k = rng.standard_normal((2, 5, 4))
        v = rng.standard_normal((2, 5, 4))
        q = rng.standard_normal((4, 4))
        expect = np.array(naive_attend(q, k, v))
        assert np.max(np.abs(attend(q, k, v) - expect)) < 1e-10

    def test_empty_cache_raises(self):
        with pytest.raises(ValueError):
            attend(np.ones((2, 4)), np.zeros((2, 0, 4)), np.zeros((2, 0, 4)))

    def test_shape_mismatch_raises(self):
        with pytest.raises(ValueError):
            attend(np.ones((2, 4)), np.ones((2, 3, 5)), np.ones((2, 3, 5)))
        with pytest.raises(ValueError):
            attend(np.ones((3, 4)), np.ones((2, 3, 4)), np.ones((2, 3, 4)))

    def test_output_in_convex_hull_of_values(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            n = int(rng.integers(1, 9))
            k = rng.standard_normal((2, n, 4)) * rng.uniform(0.1, 5)
            v = rng.standard_normal((2, n, 4))
            q = rng.standard_normal((4, 4)) * rng.uniform(0.1, 5)
            out = attend(q, k, v)
            for h in range(4):
                g = h // 2
                lo = v[g].min(axis=0) - 1e-12
                hi = v[g].max(axis=0) + 1e-12
                assert np.all(out[h] >= lo) and np.all(out[h] <= hi)

    def test_causality_append_after_does_not_change_output(self):
        cache = FullKvCache(DIMS)
        rng = np.random.default_rng(4)
        for _ in range(3):
            cache.append(0, rng.standard_normal((2, 4)), rng.standard_normal((2, 4)))
        q = rng.standard_normal((2, 4))
        k, v = cache.view(0)
        before = attend(q, k, v)
        cache.append(0, rng.standard_normal((2, 4)), rng.standard_normal((2, 4)))
        assert np.array_equal(attend(q, k, v), before)

    def test_key_scaling_preserves_weight_order(self):
        rng = np.random.default_rng(5)
        k = rng.standard_normal((1, 6, 4))
        q = rng.standard_normal((1, 4))
        w1 = attention_weights(q, k)
        w2 = attention_weights(q, 3.0 * k)
        assert not np.allclose(w1, w2)  # scaling keys is not an invariance
        assert np.array_equal(np.argsort(w1[0]), np.argsort(w2[0]))

    def test_gqa_full_heads_equals_mha(self):
        rng = np.random.default_rng(6)
        k = rng.standard_normal((4, 5, 4))
        v = rng.standard_normal((4, 5, 4))
        q = rng.standard_normal((4, 4))
        grouped = attend(q, k, v)
        per_head = np.stack([attend(q[h:h + 1], k[h:h + 1], v[h:h + 1])[0]
                             for h in range(4)])
        assert np.max(np.abs(grouped - per_head)) < 1e-15

    def test_gqa_single_kv_head_shares_lists(self):
        rng = np.random.default_rng(7)
        k = rng.standard_normal((1, 5, 4))
        v = rng.standard_normal((1, 5, 4))
        q = np.tile(rng.standard_normal((1, 4)), (4, 1))  # identical queries
        out = attend(q, k, v)
        for h in range(1, 4):
            assert np.array_equal(out[h], out[0])

    def test_grouping_matches_oracle_when_kv_lt_heads(self):
        rng = np.random.default_rng(8)
        k = rng.standard_normal((2, 7, 3))
        v = rng.standard_normal((2, 7, 3))
        q = rng.standard_normal((6, 3))
        expect = np.array(naive_attend(q, k, v))
        assert np.max(np.abs(attend(q, k, v) - expect)) < 1e-10
