"""Golden functional model of multi-scale deformable attention.

Per query row i and head j the output is

    H_ij = sum_k softmax(Q_i A)_jk * BI(V_j, P_i + dP_ijk)

with V = X Wv and dP = Q Ws. Two bilinear forms are provided: the
corner-weight form (used by the float reference and as the oracle) and the
algebraically equivalent three-multiply factored form (the only form the
datapath uses). All functions are pure; callers may parallelize freely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ModelConfig
from .geometry import SamplingPlan, build_sampling_plan
from .tensors import validate_against

__all__ = [
    "WeightSet",
    "softmax",
    "bilinear_sample",
    "bilinear_sample_fused",
    "aggregate",
    "attention_probs",
    "sampling_offsets",
    "sample_values",
    "grid_reference_points",
    "deformable_attention",
]


@dataclass(frozen=True)
class WeightSet:
    """Learned projections. attn maps a query row to the per-head point
    logits, value projects pixel vectors, offset maps a query row to the
    (x, y) offsets of every (head, level, point)."""

    attn: np.ndarray    # (D_in, N_h * N_l * N_p)
    value: np.ndarray   # (D_in, D_in)
    offset: np.ndarray  # (D_in, 2 * N_h * N_l * N_p)

    def validate(self, config: ModelConfig):
        d = config.hidden_dim
        k = config.num_heads * config.points_per_query
        validate_against(config, "attn weights", self.attn, (d, k))
        validate_against(config, "value weights", self.value, (d, d))
        validate_against(config, "offset weights", self.offset, (d, 2 * k))


def softmax(logits) -> np.ndarray:
    """Max-subtracted softmax over the last axis. Rejects empty input."""
    arr = np.asarray(logits, dtype=np.float64)
    if arr.size == 0 or arr.shape[-1] == 0:
        raise ValueError("softmax over an empty vector")
    if not np.all(np.isfinite(arr)):
        raise ValueError("softmax requires finite logits")
    shifted = arr - arr.max(axis=-1, keepdims=True)
    exps = np.exp(shifted)
    return exps / exps.sum(axis=-1, keepdims=True)


def bilinear_sample(level_view: np.ndarray, x: float, y: float) -> np.ndarray:
    """Corner-weight bilinear sample of an (H, W, C) level at fractional
    (x, y). Corners outside the level contribute a zero vector."""
    if not (np.isfinite(x) and np.isfinite(y)):
        raise ValueError(f"non-finite sampling coordinate ({x}, {y})")
    h, w, c = level_view.shape
    x0 = int(np.floor(x))
    y0 = int(np.floor(y))
    zero = np.zeros(c)

    def corner(cx, cy):
        if 0 <= cx < w and 0 <= cy < h:
            return level_view[cy, cx]
        return zero

    t1 = x - x0
    t0 = y - y0
    return (corner(x0, y0) * ((1.0 - t1) * (1.0 - t0))
            + corner(x0 + 1, y0) * (t1 * (1.0 - t0))
            + corner(x0, y0 + 1) * ((1.0 - t1) * t0)
            + corner(x0 + 1, y0 + 1) * (t1 * t0))


def bilinear_sample_fused(n0, n1, n2, n3, t0, t1):
    """Three-multiply / seven-add factored bilinear form.

    S = N0 + (N2-N0)*t0 + [(N1-N0) + (N3-N2-N1+N0)*t0]*t1, with t0 = y-y0
    and t1 = x-x0. The operation order here is canonical: the quantized
    reference and the datapath both call this function, which is what makes
    their outputs bit-identical. Broadcasts over leading axes; t outside
    [0, 1) is rejected.
    """
    t0 = np.asarray(t0, dtype=np.float64)
    t1 = np.asarray(t1, dtype=np.float64)
    if np.any(t0 < 0) or np.any(t0 >= 1) or np.any(t1 < 0) or np.any(t1 >= 1):
        raise ValueError("fractional weights must lie in [0, 1)")
    n0 = np.asarray(n0, dtype=np.float64)
    n1 = np.asarray(n1, dtype=np.float64)
    n2 = np.asarray(n2, dtype=np.float64)
    n3 = np.asarray(n3, dtype=np.float64)
    vertical = n2 - n0
    horizontal = n1 - n0
    twist = ((n3 - n2) - n1) + n0
    return (n0 + vertical * t0) + (horizontal + twist * t0) * t1


def aggregate(probs, values) -> np.ndarray:
    """Probability-weighted sum of sampling values: probs (..., K) against
    values (..., K, C), accumulated in point order."""
    probs = np.asarray(probs, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if probs.shape != values.shape[:-1]:
        raise ValueError(
            f"probs {probs.shape} do not match values {values.shape[:-1]}")
    acc = np.zeros(probs.shape[:-1] + values.shape[-1:])
    for k in range(probs.shape[-1]):
        acc += probs[..., k, None] * values[..., k, :]
    return acc


def attention_probs(q, attn_weights, config: ModelConfig) -> np.ndarray:
    """(N, H, L*P) softmax-normalized attention probabilities."""
    logits = q @ attn_weights
    n = q.shape[0]
    return softmax(logits.reshape(n, config.num_heads, config.points_per_query))


def sampling_offsets(q, offset_weights, config: ModelConfig) -> np.ndarray:
    """(N, H, L, P, 2) raw (x, y) sampling offsets."""
    n = q.shape[0]
    return (q @ offset_weights).reshape(
        n, config.num_heads, config.num_levels, config.points_per_level, 2)


def _gather_corners(plan: SamplingPlan, value_rows: np.ndarray,
                    config: ModelConfig):
    """Per-head corner vectors, zero where the corner is out of range.

    Returns (N, H, L, P, 4, D_h); corner axis order (x0,y0),(x1,y0),
    (x0,y1),(x1,y1).
    """
    d_h = config.head_dim
    flat = plan.neighbor_flat
    safe = np.maximum(flat, 0)
    in_range = (flat >= 0)[..., None]
    gathered = value_rows[safe]                      # (N,H,L,P,4,D_in)
    gathered = np.where(in_range, gathered, 0.0)
    # sample (i, j, ...) reads head slice j of the pixel vector
    per_head = gathered.reshape(*flat.shape, config.num_heads, d_h)
    out = np.empty(flat.shape + (d_h,))
    for j in range(config.num_heads):
        out[:, j] = per_head[:, j, :, :, :, j, :]
    return out


def sample_values(plan: SamplingPlan, value_rows: np.ndarray,
                  config: ModelConfig, point_mask=None,
                  fused=True) -> np.ndarray:
    """Bilinear sampling values per point, (N, H, L, P, D_h).

    Masked points are never computed and read as zero vectors, which makes
    their aggregation contribution exactly zero.
    """
    corners = _gather_corners(plan, value_rows, config)
    n0, n1, n2, n3 = (corners[..., c, :] for c in range(4))
    t0 = plan.t0[..., None]
    t1 = plan.t1[..., None]
    if fused:
        sampled = bilinear_sample_fused(n0, n1, n2, n3, t0, t1)
    else:
        sampled = (n0 * ((1.0 - t1) * (1.0 - t0))
                   + n1 * (t1 * (1.0 - t0))
                   + n2 * ((1.0 - t1) * t0)
                   + n3 * (t1 * t0))
    if point_mask is not None:
        sampled = np.where(point_mask[..., None], sampled, 0.0)
    return sampled


def grid_reference_points(config: ModelConfig) -> np.ndarray:
    """Normalized grid-center reference points, (N, L, 2).

    Query i is the i-th flattened pixel; its normalized center is shared by
    all target levels.
    """
    centers = np.empty((config.total_pixels, 2))
    base = 0
    for s in config.level_shapes:
        ys, xs = np.mgrid[0:s.height, 0:s.width]
        centers[base:base + s.pixels, 0] = ((xs + 0.5) / s.width).ravel()
        centers[base:base + s.pixels, 1] = ((ys + 0.5) / s.height).ravel()
        base += s.pixels
    return np.repeat(centers[:, None, :], config.num_levels, axis=1)


def deformable_attention(q, x, ref_points, weights: WeightSet,
                         config: ModelConfig, clamp=False) -> np.ndarray:
    """Float reference model (corner-weight bilinear form, no pruning).

    With clamp=True the per-level bounded ranges saturate the sampling
    coordinates; the default is the unbounded functional model where
    out-of-level corners read as zero.
    """
    q = np.asarray(q, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    n, d = config.total_pixels, config.hidden_dim
    validate_against(config, "query matrix", q, (n, d))
    validate_against(config, "feature map", x, (n, d))
    weights.validate(config)

    v = x @ weights.value
    probs = attention_probs(q, weights.attn, config)
    offsets = sampling_offsets(q, weights.offset, config)
    plan = build_sampling_plan(ref_points, offsets, config, clamp=clamp)
    samples = sample_values(plan, v, config, fused=False)
    k = config.points_per_query
    per_head = aggregate(probs, samples.reshape(n, config.num_heads, k, -1))
    return per_head.reshape(n, d)
