import numpy as np
import pytest

from deformsim import (SplitMix64, WorkloadSpec, block_weights,
                       generate_workload, make_config, stream)
from deformsim.attention import attention_probs


def spec_for(cfg, **kw):
    return WorkloadSpec(config=cfg, **kw)


class TestSplitMix:
    def test_reference_sequence(self):
        # splitmix64 of seed 0: first outputs of the documented recurrence
        gen = SplitMix64(0)
        assert gen.next_u64() == 0xE220A8397B1DCDAF
        assert gen.next_u64() == 0x6E789E6AA1B965F4

    def test_uniform_in_unit_interval(self):
        vals = SplitMix64(99).uniform01((1000,))
        assert vals.min() >= 0.0
        assert vals.max() < 1.0

    def test_streams_are_independent_and_stable(self):
        a1 = stream(7, "a").uniform01((4,))
        a2 = stream(7, "a").uniform01((4,))
        b = stream(7, "b").uniform01((4,))
        assert np.array_equal(a1, a2)
        assert not np.array_equal(a1, b)

    def test_normals_have_sane_moments(self):
        vals = SplitMix64(3).normal((4000,))
        assert abs(vals.mean()) < 0.1
        assert abs(vals.std() - 1.0) < 0.1


class TestWorkload:
    def test_same_seed_bit_identical(self, sim_config):
        spec = spec_for(sim_config, seed=11)
        a = generate_workload(spec)
        b = generate_workload(spec)
        assert np.array_equal(a.q, b.q)
        assert np.array_equal(a.x, b.x)
        assert np.array_equal(a.weights.offset, b.weights.offset)

    def test_different_seeds_differ(self, sim_config):
        a = generate_workload(spec_for(sim_config, seed=1))
        b = generate_workload(spec_for(sim_config, seed=2))
        assert not np.array_equal(a.q, b.q)

    def test_low_temperature_drives_near_one_hot(self, sim_config):
        from deformsim import make_point_mask

        spec = spec_for(sim_config, seed=5, temperature=1e-5)
        wl = generate_workload(spec)
        probs = attention_probs(wl.q, wl.weights.attn, sim_config)
        assert np.median(probs.max(axis=-1)) == 1.0
        # point-prune ratio approaches (K-1)/K as rows become one-hot
        mask = make_point_mask(probs, 0.01, sim_config)
        k = sim_config.points_per_query
        prune_ratio = 1.0 - mask.mean()
        assert prune_ratio == pytest.approx((k - 1) / k, abs=0.02)

    def test_high_temperature_drives_uniform(self, sim_config):
        spec = spec_for(sim_config, seed=5, temperature=1e4)
        wl = generate_workload(spec)
        probs = attention_probs(wl.q, wl.weights.attn, sim_config)
        k = sim_config.points_per_query
        assert np.allclose(probs, 1.0 / k, atol=1e-3)

    def test_block_weights_vary_by_block(self, sim_config):
        spec = spec_for(sim_config, seed=5, blocks=3)
        w0 = block_weights(spec, 0)
        w1 = block_weights(spec, 1)
        assert not np.array_equal(w0.attn, w1.attn)
        wl = generate_workload(spec)
        assert np.array_equal(wl.weights.attn, w0.attn)

    def test_gaussian_spread_differs_from_uniform(self, sim_config):
        u = generate_workload(spec_for(sim_config, seed=5,
                                       offset_spread="uniform"))
        g = generate_workload(spec_for(sim_config, seed=5,
                                       offset_spread="gaussian"))
        assert not np.array_equal(u.weights.offset, g.weights.offset)

    def test_rejects_bad_knobs(self, sim_config):
        with pytest.raises(ValueError):
            spec_for(sim_config, offset_spread="triangular")
        with pytest.raises(ValueError):
            spec_for(sim_config, temperature=0.0)
        with pytest.raises(ValueError):
            spec_for(sim_config, blocks=0)

    def test_rejects_zero_sized_dims(self):
        with pytest.raises(ValueError):
            make_config([(0, 4)], points_per_level=1, num_heads=1,
                        hidden_dim=4)
