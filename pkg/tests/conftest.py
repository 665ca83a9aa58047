import numpy as np
import pytest

from deformsim import WeightSet, grid_reference_points, make_config


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_config():
    return make_config([(4, 4), (2, 2)], points_per_level=2, num_heads=2,
                       hidden_dim=4)


@pytest.fixture
def sim_config():
    cfg = make_config([(8, 8)] * 4, points_per_level=2, num_heads=2,
                      hidden_dim=16)
    return cfg.with_ranges([(2, 2)] * 4)


def random_weights(cfg, rng, scale=1.0):
    d = cfg.hidden_dim
    k = cfg.num_heads * cfg.points_per_query
    return WeightSet(rng.normal(size=(d, k)),
                     rng.normal(size=(d, d)),
                     rng.normal(size=(d, 2 * k)) * scale)


def random_instance(cfg, rng, offset_scale=1.0):
    n, d = cfg.total_pixels, cfg.hidden_dim
    q = rng.normal(size=(n, d))
    x = rng.normal(size=(n, d))
    return q, x, grid_reference_points(cfg), random_weights(cfg, rng, offset_scale)
