"""Deterministic synthetic workloads.

Trained checkpoints are out of scope, so workloads are generated from a
fully documented PRNG that any implementation can reproduce byte-exactly:

  splitmix64(state): state += 0x9E3779B97F4A7C15;
                     z = state; z = (z ^ z>>30) * 0xBF58476D1CE4E5B9;
                     z = (z ^ z>>27) * 0x94D049BB133111EB; return z ^ z>>31
  stream(seed, label): initial state = seed XOR fnv1a64(label)
  uniform01 = (u64 >> 11) * 2^-53           in [0, 1)
  normal    = Box-Muller on uniform pairs (u1 clamped away from 0)

The temperature knob scales the attention projection (small temperature ->
near one-hot probabilities -> high point-prune ratios); offset_spread and
offset_scale shape the offset projection so sampling points cover the
bounded ranges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .attention import WeightSet, grid_reference_points
from .config import ModelConfig

__all__ = ["SplitMix64", "stream", "WorkloadSpec", "Workload",
           "generate_workload", "block_weights"]

_MASK64 = (1 << 64) - 1


def _fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h = ((h ^ b) * 0x100000001B3) & _MASK64
    return h


class SplitMix64:
    """64-bit splitmix generator; trivially portable across languages."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def uniform01(self, shape) -> np.ndarray:
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        vals = np.empty(n, dtype=np.float64)
        for i in range(n):
            vals[i] = (self.next_u64() >> 11) * 2.0 ** -53
        return vals.reshape(shape)

    def symmetric(self, shape) -> np.ndarray:
        """Uniform in [-1, 1)."""
        return 2.0 * self.uniform01(shape) - 1.0

    def normal(self, shape) -> np.ndarray:
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        pairs = (n + 1) // 2
        u1 = np.maximum(self.uniform01((pairs,)), 2.0 ** -53)
        u2 = self.uniform01((pairs,))
        r = np.sqrt(-2.0 * np.log(u1))
        out = np.empty(2 * pairs)
        out[0::2] = r * np.cos(2.0 * math.pi * u2)
        out[1::2] = r * np.sin(2.0 * math.pi * u2)
        return out[:n].reshape(shape)


def stream(seed: int, label: str) -> SplitMix64:
    """Independent named substream of a run seed."""
    return SplitMix64((seed & _MASK64) ^ _fnv1a64(label.encode()))


@dataclass(frozen=True)
class WorkloadSpec:
    """Everything that determines a workload bit-exactly."""

    config: ModelConfig
    seed: int = 0
    offset_spread: str = "uniform"   # uniform | gaussian
    offset_scale: float = 1.0        # rough pixel spread of produced offsets
    temperature: float = 1.0
    blocks: int = 1

    def __post_init__(self):
        if self.offset_spread not in ("uniform", "gaussian"):
            raise ValueError(f"unknown offset_spread {self.offset_spread!r}")
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if self.offset_scale < 0:
            raise ValueError("offset_scale must be >= 0")
        if self.blocks < 1:
            raise ValueError("blocks must be >= 1")


@dataclass(frozen=True)
class Workload:
    spec: WorkloadSpec
    q: np.ndarray
    x: np.ndarray
    ref_points: np.ndarray
    weights: WeightSet

    def __post_init__(self):
        for arr in (self.q, self.x, self.ref_points):
            arr.setflags(write=False)


def block_weights(spec: WorkloadSpec, block: int) -> WeightSet:
    """Weights for one attention block, derived from split streams."""
    cfg = spec.config
    d = cfg.hidden_dim
    k = cfg.num_heads * cfg.points_per_query
    gain = 1.0 / math.sqrt(d)
    attn = stream(spec.seed, f"attn/{block}").symmetric((d, k))
    attn *= 3.0 * gain / spec.temperature
    value = stream(spec.seed, f"value/{block}").symmetric((d, d)) * gain
    rng = stream(spec.seed, f"offset/{block}")
    if spec.offset_spread == "uniform":
        offset = rng.symmetric((d, 2 * k))
    else:
        offset = rng.normal((d, 2 * k))
    offset *= spec.offset_scale * 3.0 * gain
    return WeightSet(attn, value, offset)


def generate_workload(spec: WorkloadSpec) -> Workload:
    """Reproducible (Q, X, P, weights) for block 0; identical seeds give
    bit-identical tensors."""
    cfg = spec.config
    n, d = cfg.total_pixels, cfg.hidden_dim
    q = stream(spec.seed, "q").symmetric((n, d))
    x = stream(spec.seed, "x").symmetric((n, d))
    ref = grid_reference_points(cfg)
    return Workload(spec, q, x, ref, block_weights(spec, 0))
