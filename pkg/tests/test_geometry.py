import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deformsim import (ReuseWindow, bank_for_pixel, bank_for_pixel_intra,
                       build_sampling_plan, clamp_to_range,
                       grid_reference_points, make_config, neighbors_of,
                       window_rect)

from oracles import brute_force_resident_sweep


class TestClamp:
    def test_zero_offset_returns_ref(self):
        assert clamp_to_range(3.5, 0.0, 2.0, 10) == 3.5

    def test_saturates_positive_offset(self):
        assert clamp_to_range(4.0, 5.0, 2.0, 16) == 6.0

    def test_border_composition(self):
        # near the border with a large negative offset: both clamps compose
        # to max(range floor, fmap floor); brute force over all border cells
        dim = 6
        for ref in range(dim):
            for half in (0.0, 1.0, 2.0):
                got = clamp_to_range(float(ref), -100.0, half, dim)
                lo = max(ref - half, 0.0)
                hi = min(ref + half, dim - 1.0)
                assert got == min(max(lo, 0.0), max(min(hi, dim - 1.0), 0.0))

    @given(st.floats(0, 15), st.floats(-40, 40), st.floats(0, 6))
    @settings(max_examples=200, deadline=None)
    def test_idempotent(self, ref, offset, half):
        first = clamp_to_range(ref, offset, half, 16)
        again = clamp_to_range(ref, first - ref, half, 16)
        assert again == first

    @given(st.floats(2, 13), st.floats(-40, 40), st.floats(0, 2),
           st.floats(0, 4))
    @settings(max_examples=200, deadline=None)
    def test_narrower_range_dominates(self, ref, offset, half_a, extra):
        # range A inside range B: clamping with B after A changes nothing
        half_b = half_a + extra
        a = clamp_to_range(ref, offset, half_a, 16)
        b_of_a = clamp_to_range(ref, a - ref, half_b, 16)
        assert b_of_a == a


class TestNeighbors:
    def test_fraction_split(self):
        corners, t0, t1, in_range = neighbors_of(1.25, 2.5, 6, 6)
        assert corners[0] == (1, 2)
        assert t1 == 0.25
        assert t0 == 0.5
        assert all(in_range)

    def test_integer_coordinate_single_effective_neighbor(self):
        corners, t0, t1, _ = neighbors_of(3.0, 4.0, 8, 8)
        assert (t0, t1) == (0.0, 0.0)
        assert corners[0] == (3, 4)

    def test_right_edge_degenerates_to_1d(self):
        corners, t0, t1, in_range = neighbors_of(4.0, 1.5, 6, 5)
        assert t1 == 0.0
        assert in_range == [True, False, True, False]

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            neighbors_of(np.inf, 0.0, 4, 4)


class TestBankMapping:
    def test_spec_corner_cases(self):
        assert bank_for_pixel(0, 0, 0) == 0
        assert bank_for_pixel(0, 1, 0) == 1
        assert bank_for_pixel(0, 0, 1) == 2
        assert bank_for_pixel(0, 1, 1) == 3
        assert bank_for_pixel(3, 5, 7) == 15

    def test_any_window_hits_four_distinct_banks(self):
        for x0 in range(16):
            for y0 in range(16):
                banks = {int(bank_for_pixel(0, x0 + dx, y0 + dy))
                         for dx in (0, 1) for dy in (0, 1)}
                assert len(banks) == 4

    def test_levels_own_disjoint_groups(self):
        xs, ys = np.mgrid[0:8, 0:8]
        groups = [set(np.unique(bank_for_pixel(l, xs, ys))) for l in range(4)]
        for i in range(4):
            assert groups[i] == set(range(4 * i, 4 * i + 4))

    def test_sixteen_distinct_for_one_point_per_level(self, rng):
        for _ in range(500):
            banks = []
            for level in range(4):
                x0, y0 = rng.integers(0, 30, 2)
                banks.extend(int(bank_for_pixel(level, x0 + dx, y0 + dy))
                             for dx in (0, 1) for dy in (0, 1))
            assert len(set(banks)) == 16

    def test_reduced_level_counts_still_spread_windows(self):
        for n_l in (1, 2):
            per_level = 16 // n_l
            for level in range(n_l):
                for x0 in range(8):
                    for y0 in range(8):
                        banks = {int(bank_for_pixel(level, x0 + dx, y0 + dy, n_l))
                                 for dx in (0, 1) for dy in (0, 1)}
                        assert len(banks) == 4
                        lo = per_level * level
                        assert all(lo <= b < lo + per_level for b in banks)

    def test_rejects_bad_level(self):
        with pytest.raises(ValueError):
            bank_for_pixel(4, 0, 0, 4)
        with pytest.raises(ValueError):
            bank_for_pixel(0, 0, 0, 3)

    def test_intra_mapping_windows_are_conflict_free_within(self):
        for x0 in range(8):
            for y0 in range(8):
                banks = {int(bank_for_pixel_intra(x0 + dx, y0 + dy))
                         for dx in (0, 1) for dy in (0, 1)}
                assert len(banks) == 4

    def test_intra_mapping_collides_at_stride_four(self):
        assert bank_for_pixel_intra(1, 2) == bank_for_pixel_intra(5, 2)
        assert bank_for_pixel_intra(1, 2) == bank_for_pixel_intra(1, 6)


class TestSamplingPlan:
    def test_plan_matches_scalar_neighbors(self, rng):
        cfg = make_config([(5, 4), (3, 3)], points_per_level=2, num_heads=1,
                          hidden_dim=2).with_ranges([(1, 1), (0, 0)])
        n = cfg.total_pixels
        offsets = rng.normal(size=(n, 1, 2, 2, 2)) * 2
        plan = build_sampling_plan(grid_reference_points(cfg), offsets, cfg,
                                   clamp=True)
        for i in (0, 7, n - 1):
            for l in range(2):
                shape = cfg.level_shapes[l]
                for p in range(2):
                    x, y = plan.coord[i, 0, l, p]
                    corners, t0, t1, in_range = neighbors_of(
                        x, y, shape.height, shape.width)
                    assert plan.t0[i, 0, l, p] == t0
                    assert plan.t1[i, 0, l, p] == t1
                    assert (plan.corner_x[i, 0, l, p, 0],
                            plan.corner_y[i, 0, l, p, 0]) == corners[0]
                    assert list(plan.in_range[i, 0, l, p]) == in_range

    def test_unclamped_plan_keeps_raw_coordinates(self, rng):
        cfg = make_config([(4, 4)], points_per_level=1, num_heads=1,
                          hidden_dim=2)
        offsets = np.full((16, 1, 1, 1, 2), 100.0)
        plan = build_sampling_plan(grid_reference_points(cfg), offsets, cfg,
                                   clamp=False)
        assert np.all(plan.coord[..., 0] > 99)
        assert not plan.in_range.any()

    def test_clamped_plan_stays_in_level(self, rng):
        cfg = make_config([(6, 6)], points_per_level=2, num_heads=2,
                          hidden_dim=4).with_ranges([(2, 2)])
        offsets = rng.normal(size=(36, 2, 1, 2, 2)) * 50
        plan = build_sampling_plan(grid_reference_points(cfg), offsets, cfg)
        assert plan.coord[..., 0].min() >= 0
        assert plan.coord[..., 0].max() <= 5
        assert plan.coord[..., 1].max() <= 5

    def test_normalized_offsets_scale_by_level_size(self):
        cfg = make_config([(4, 8)], points_per_level=1, num_heads=1,
                          hidden_dim=2, offsets_in_pixels=False)
        offsets = np.full((32, 1, 1, 1, 2), 0.25)
        plan = build_sampling_plan(grid_reference_points(cfg), offsets, cfg,
                                   clamp=False)
        ref = plan.ref_pixel[:, 0]
        assert np.allclose(plan.coord[:, 0, 0, 0, 0] - ref[:, 0], 2.0)
        assert np.allclose(plan.coord[:, 0, 0, 0, 1] - ref[:, 1], 1.0)

    def test_rejects_clamp_without_ranges(self, rng, small_config):
        offsets = np.zeros((small_config.total_pixels, 2, 2, 2, 2))
        with pytest.raises(ValueError, match="bounded_ranges"):
            build_sampling_plan(grid_reference_points(small_config), offsets,
                                small_config, clamp=True)


class TestReuseWindow:
    def test_slide_right_fetches_one_column(self):
        win = ReuseWindow()
        first = win.advance((2, 7, 1, 6))
        assert first.fetched_area == 36
        delta = win.advance((3, 8, 1, 6))
        assert delta.fetched == [(8, 8, 1, 6)]
        assert delta.fetched_area == 6
        assert delta.reused_area == 30

    def test_same_rect_fetches_nothing(self):
        win = ReuseWindow()
        win.advance((2, 7, 1, 6))
        delta = win.advance((2, 7, 1, 6))
        assert delta.fetched_area == 0
        assert delta.reused_area == 36

    def test_row_jump_refills(self):
        win = ReuseWindow()
        win.advance((2, 7, 1, 6))
        delta = win.advance((2, 7, 2, 7))
        assert delta.fetched_area == 36
        assert delta.reused_area == 0

    def test_row_sweep_matches_brute_force(self):
        rects = [(x, x + 5, 3, 8) for x in range(10)]
        oracle = brute_force_resident_sweep(rects)
        win = ReuseWindow()
        for rect, expect in zip(rects, oracle):
            delta = win.advance(rect)
            assert delta.pixel_set("fetched") == expect

    def test_row_sweep_identity(self):
        # sum of fetches = first rectangle + one column per further step
        height, width, steps = 6, 4, 9
        win = ReuseWindow()
        total = 0
        for s in range(steps):
            total += win.advance((s, s + width - 1, 0, height - 1)).fetched_area
        assert total == height * width + (steps - 1) * height

    def test_window_rect_includes_fringe(self):
        # fractional reference: the touchable corners span 2*half + 2 pixels
        assert window_rect(5.5, 4.0, 2, 1, 12, 12) == (3, 8, 3, 6)
        # clamped at the level border
        assert window_rect(0.5, 0.0, 2, 1, 12, 12) == (0, 3, 0, 2)
