"""Shared functional engine: the pruned, optionally quantized attention block.

Both the golden quantized model and the datapath simulator call this one
engine, so their functional outputs are bit-identical by construction; the
simulator only adds cost accounting on top. The float path uses the
corner-weight bilinear form, the quantized path the factored form (the form
the hardware lanes implement). Aggregation accumulates points in canonical
(level, point) order in every path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import (WeightSet, aggregate, attention_probs, sample_values,
                        sampling_offsets)
from .config import ModelConfig
from .geometry import SamplingPlan, build_sampling_plan
from .pruning import (FmapMask, FrequencyMap, all_ones_mask,
                      count_sampled_frequency, make_fmap_mask,
                      make_point_mask, masked_value_projection)
from .tensors import dequantize, quantize, validate_against

__all__ = ["FunctionalBlock", "run_functional_block"]


@dataclass(frozen=True)
class FunctionalBlock:
    """Functional results of one attention block plus the artifacts the cost
    model and the next block need."""

    output: np.ndarray          # (N, D_in)
    probs: np.ndarray           # (N, H, L*P)
    point_mask: np.ndarray      # (N, H, L, P) bool
    plan: SamplingPlan
    values: np.ndarray          # (N, D_in), zero rows where pruned
    value_scale: float | None   # quantization step of the value rows
    frequency: FrequencyMap
    next_fmap_mask: FmapMask
    projection_macs: int
    fmap_mask: FmapMask         # the mask this block ran under


def run_functional_block(q, x, ref_points, weights: WeightSet,
                         config: ModelConfig, *, fmap_mask: FmapMask | None = None,
                         quantized: bool = True, clamp: bool = True,
                         epsilon: float | None = None, k: float | None = None,
                         block_index: int = 0) -> FunctionalBlock:
    """Run one attention block under the given masks.

    fmap_mask is the keep-mask produced by the previous block (all-ones for
    block 0); block_index tags the mask this block produces. epsilon/k
    default to the config's pruning knobs; epsilon = 0 and k = 0 reproduce
    the dense pipeline bit-exactly.
    """
    q = np.asarray(q, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    n, d = config.total_pixels, config.hidden_dim
    validate_against(config, "query matrix", q, (n, d))
    validate_against(config, "feature map", x, (n, d))
    weights.validate(config)
    if fmap_mask is None:
        fmap_mask = all_ones_mask(config)
    if len(fmap_mask.levels) != config.num_levels:
        raise ValueError(
            f"fmap mask has {len(fmap_mask.levels)} levels, config has "
            f"{config.num_levels}")
    epsilon = config.point_prune_epsilon if epsilon is None else epsilon
    k = config.fmap_prune_k if k is None else k

    if quantized:
        bits = config.quant_bits
        qd = dequantize(quantize(q, bits))
        xd = dequantize(quantize(x, bits))
        w_attn = dequantize(quantize(weights.attn, bits))
        w_value = dequantize(quantize(weights.value, bits))
        w_offset = dequantize(quantize(weights.offset, bits))
    else:
        qd, xd = q, x
        w_attn, w_value, w_offset = weights.attn, weights.value, weights.offset

    # phase 1: probabilities, then the point mask for this block
    probs = attention_probs(qd, w_attn, config)
    point_mask = make_point_mask(probs, epsilon, config)

    # phase 2: offsets for the kept points (functionally computed for all)
    offsets = sampling_offsets(qd, w_offset, config)
    plan = build_sampling_plan(ref_points, offsets, config, clamp=clamp)

    # phase 3: value projection under the previous block's mask
    values, macs = masked_value_projection(xd, w_value, fmap_mask)
    value_scale = None
    if quantized:
        vq = quantize(values, config.quant_bits)
        values = dequantize(vq)
        value_scale = vq.scale

    # phase 4: sampling + aggregation; the mask generator watches the
    # sampling addresses and produces the next block's mask
    samples = sample_values(plan, values, config, point_mask,
                            fused=quantized)
    per_head = aggregate(probs, samples.reshape(
        n, config.num_heads, config.points_per_query, -1))
    output = per_head.reshape(n, d)

    frequency = count_sampled_frequency(plan, point_mask, config)
    next_mask = make_fmap_mask(frequency, k, block_index)

    return FunctionalBlock(output, probs, point_mask, plan, values,
                           value_scale, frequency, next_mask, macs, fmap_mask)
