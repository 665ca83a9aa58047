from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deformsim import (WeightSet, aggregate, bilinear_sample,
                       bilinear_sample_fused, build_sampling_plan,
                       deformable_attention, grid_reference_points,
                       make_config, softmax)
from deformsim.attention import attention_probs, sample_values, sampling_offsets
from deformsim.pipeline import run_functional_block

from conftest import random_instance
from oracles import (naive_deformable_attention, naive_softmax,
                     rational_bilinear_corner, rational_bilinear_factored)


class TestSoftmax:
    def test_uniform(self):
        assert softmax([0, 0, 0, 0]).tolist() == [0.25] * 4

    def test_saturation(self):
        probs = softmax([1000.0, 0.0])
        assert abs(probs[0] - 1.0) < 1e-12
        assert probs[1] < 1e-12

    def test_closed_form(self):
        probs = softmax([1.0, 2.0, 3.0])
        expected = [0.09003057, 0.24472847, 0.66524096]
        assert np.allclose(probs, expected, atol=1e-8)
        assert np.allclose(probs, naive_softmax([1.0, 2.0, 3.0]), atol=1e-15)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            softmax([])

    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=20))
    @settings(max_examples=100, deadline=None)
    def test_rows_sum_to_one(self, logits):
        assert abs(softmax(logits).sum() - 1.0) < 1e-6


class TestBilinearSample:
    def test_integer_pixel_returns_that_pixel(self, rng):
        view = rng.normal(size=(4, 5, 3))
        assert np.array_equal(bilinear_sample(view, 2.0, 1.0), view[1, 2])

    def test_partition_of_unity(self, rng):
        view = np.broadcast_to(rng.normal(size=3), (4, 5, 3)).copy()
        out = bilinear_sample(view, 1.3, 2.7)
        assert np.allclose(out, view[0, 0], atol=1e-12)

    def test_hand_checked_cell(self):
        view = np.array([[[0.0], [4.0]], [[8.0], [12.0]]])
        assert bilinear_sample(view, 0.25, 0.5)[0] == pytest.approx(5.0)

    def test_zero_padding_outside(self, rng):
        view = np.ones((3, 3, 2))
        # fully outside: every corner out of range
        assert np.array_equal(bilinear_sample(view, -5.0, -5.0), np.zeros(2))

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            bilinear_sample(np.ones((2, 2, 1)), np.nan, 0.0)


class TestBilinearFused:
    def test_zero_fractions_return_n0(self, rng):
        n = rng.normal(size=(4, 3))
        out = bilinear_sample_fused(n[0], n[1], n[2], n[3], 0.0, 0.0)
        assert np.array_equal(out, n[0])

    def test_matches_corner_form_example(self):
        assert bilinear_sample_fused(0.0, 4.0, 8.0, 12.0, 0.5, 0.25) == \
            pytest.approx(5.0)

    def test_rejects_out_of_range_fraction(self):
        with pytest.raises(ValueError):
            bilinear_sample_fused(0.0, 1.0, 2.0, 3.0, 1.0, 0.5)
        with pytest.raises(ValueError):
            bilinear_sample_fused(0.0, 1.0, 2.0, 3.0, 0.5, -0.1)

    def test_exact_rational_equivalence(self):
        rng = np.random.default_rng(42)
        for _ in range(300):
            n = [Fraction(int(v), 64) for v in rng.integers(-2048, 2048, 4)]
            t0 = Fraction(int(rng.integers(0, 63)), 64)
            t1 = Fraction(int(rng.integers(0, 63)), 64)
            assert rational_bilinear_corner(*n, t0, t1) == \
                rational_bilinear_factored(*n, t0, t1)

    def test_near_one_fractions_match_corner_form(self, rng):
        # ulp measured at the corner-magnitude scale: the two forms cancel
        # differently, so a result-relative bound would be unattainable
        ulp = np.finfo(np.float64).eps
        n = rng.normal(size=(4, 6))
        t = 1.0 - ulp
        fused = bilinear_sample_fused(n[0], n[1], n[2], n[3], t, t)
        view = np.stack([np.stack([n[0], n[1]]), np.stack([n[2], n[3]])])
        corner = bilinear_sample(view, t, t)
        scale = np.abs(n).max(axis=0)
        assert np.all(np.abs(fused - corner) <= 4 * np.spacing(scale))

    @given(st.lists(st.floats(-100, 100), min_size=4, max_size=4),
           st.floats(0, 1, exclude_max=True),
           st.floats(0, 1, exclude_max=True))
    @settings(max_examples=300, deadline=None)
    def test_fused_close_to_corner_form(self, corners, t0, t1):
        n0, n1, n2, n3 = corners
        fused = float(bilinear_sample_fused(n0, n1, n2, n3, t0, t1))
        corner = (n0 * (1 - t1) * (1 - t0) + n1 * t1 * (1 - t0)
                  + n2 * (1 - t1) * t0 + n3 * t1 * t0)
        scale = max(abs(v) for v in corners) or 1e-30
        assert abs(fused - corner) <= 8 * np.spacing(scale)


class TestAggregate:
    def test_selects_single_value(self, rng):
        values = rng.normal(size=(2, 3))
        assert np.array_equal(aggregate([1.0, 0.0], values), values[0])

    def test_equal_values_are_fixed_point(self, rng):
        v = rng.normal(size=3)
        out = aggregate([0.5, 0.5], np.stack([v, v]))
        assert np.allclose(out, v, atol=1e-15)

    def test_hand_dot_product(self):
        out = aggregate([0.7, 0.2, 0.1], np.array([[1.0], [2.0], [3.0]]))
        assert out[0] == pytest.approx(1.4)

    def test_rejects_length_mismatch(self):
        with pytest.raises(ValueError):
            aggregate([0.5, 0.5], np.zeros((3, 2)))

    def test_convex_hull_bound(self, rng):
        for _ in range(50):
            k, c = rng.integers(1, 8), rng.integers(1, 5)
            probs = softmax(rng.normal(size=k))
            values = rng.normal(size=(k, c))
            out = aggregate(probs, values)
            assert np.all(out <= values.max(axis=0) + 1e-12)
            assert np.all(out >= values.min(axis=0) - 1e-12)


class TestReferenceModel:
    def test_single_point_identity(self):
        # one head, one level, one point, zero offsets, identity value
        # projection: the output row is that query's own pixel vector
        cfg = make_config([(3, 3)], points_per_level=1, num_heads=1,
                          hidden_dim=4)
        n, d = cfg.total_pixels, cfg.hidden_dim
        rng = np.random.default_rng(5)
        x = rng.normal(size=(n, d))
        q = rng.normal(size=(n, d))
        weights = WeightSet(np.zeros((d, 1)), np.eye(d), np.zeros((d, 2)))
        out = deformable_attention(q, x, grid_reference_points(cfg), weights,
                                   cfg)
        assert np.allclose(out, x, atol=1e-12)

    def test_uniform_probs_same_pixel(self):
        cfg = make_config([(3, 3)], points_per_level=3, num_heads=1,
                          hidden_dim=4)
        n, d = cfg.total_pixels, cfg.hidden_dim
        rng = np.random.default_rng(6)
        x = rng.normal(size=(n, d))
        q = rng.normal(size=(n, d))
        w_v = rng.normal(size=(d, d))
        weights = WeightSet(np.zeros((d, 3)), w_v, np.zeros((d, 6)))
        out = deformable_attention(q, x, grid_reference_points(cfg), weights,
                                   cfg)
        assert np.allclose(out, x @ w_v, atol=1e-12)

    def test_matches_naive_oracle(self, rng):
        cfg = make_config([(4, 4), (2, 2)], points_per_level=2, num_heads=2,
                          hidden_dim=4)
        q, x, ref, w = random_instance(cfg, rng)
        out = deformable_attention(q, x, ref, w, cfg)
        shapes = [(s.height, s.width) for s in cfg.level_shapes]
        oracle = naive_deformable_attention(
            q.tolist(), x.tolist(), ref.tolist(),
            {"attn": w.attn.tolist(), "value": w.value.tolist(),
             "offset": w.offset.tolist()},
            shapes, cfg.num_heads, cfg.points_per_level)
        assert np.max(np.abs(out - np.array(oracle))) < 1e-9

    def test_rejects_shape_mismatch_naming_dimension(self, rng, small_config):
        q, x, ref, w = random_instance(small_config, rng)
        with pytest.raises(ValueError, match="axis 0"):
            deformable_attention(q[:-1], x, ref, w, small_config)

    def test_point_permutation_invariance(self, rng):
        cfg = make_config([(3, 3), (2, 2)], points_per_level=3, num_heads=1,
                          hidden_dim=4)
        q, x, ref, w = random_instance(cfg, rng)
        probs = attention_probs(q, w.attn, cfg)
        offsets = sampling_offsets(q, w.offset, cfg)
        v = x @ w.value
        plan = build_sampling_plan(ref, offsets, cfg, clamp=False)
        samples = sample_values(plan, v, cfg, fused=False)
        n, k = cfg.total_pixels, cfg.points_per_query
        base = aggregate(probs, samples.reshape(n, 1, k, -1))

        # permute points within level 0 and the probs identically
        perm = np.array([2, 0, 1])
        offsets_p = offsets.copy()
        offsets_p[:, :, 0] = offsets[:, :, 0, perm]
        probs_p = probs.copy().reshape(n, 1, 2, 3)
        probs_p[:, :, 0] = probs_p[:, :, 0, :][:, :, perm]
        plan_p = build_sampling_plan(ref, offsets_p, cfg, clamp=False)
        samples_p = sample_values(plan_p, v, cfg, fused=False)
        out_p = aggregate(probs_p.reshape(n, 1, k),
                          samples_p.reshape(n, 1, k, -1))
        assert np.allclose(base, out_p, atol=1e-12)

    def test_quantized_path_tracks_float_path(self, rng, small_config):
        cfg = small_config.with_ranges([(1, 1), (0, 0)])
        q, x, ref, w = random_instance(cfg, rng)
        float_block = run_functional_block(
            q, x, ref, w, cfg, quantized=False, clamp=True, epsilon=0.0, k=0.0)
        quant_block = run_functional_block(
            q, x, ref, w, cfg, quantized=True, clamp=True, epsilon=0.0, k=0.0)
        err = np.max(np.abs(float_block.output - quant_block.output))
        # regression ceiling; the acceptance suite freezes the global bound
        assert err <= 16.0 * quant_block.value_scale
