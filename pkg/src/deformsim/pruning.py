"""Sampling-driven sparsity: frequency-weighted feature-map pruning and
probability-aware point pruning.

Feature-map pruning counts how often each pixel is touched as a bilinear
corner during a block, thresholds at k times the level mean, and hands the
resulting keep-mask to the NEXT block (block 0 runs with all-ones). Point
pruning drops points whose attention probability falls below epsilon within
the current block. Frequency counting is the only mutating phase and merges
associatively; everything else is pure.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .config import LevelShape, ModelConfig
from .geometry import SamplingPlan

__all__ = [
    "FrequencyMap",
    "FmapMask",
    "all_ones_mask",
    "count_sampled_frequency",
    "fmap_prune_threshold",
    "make_fmap_mask",
    "make_point_mask",
    "masked_value_projection",
    "mask_to_bytes",
    "mask_from_bytes",
    "write_mask_file",
    "read_mask_file",
]

MASK_FORMAT_VERSION = 1
_FMAP_MAGIC = b"FMSK"
_POINT_MAGIC = b"PMSK"


@dataclass(frozen=True)
class FrequencyMap:
    """Per-level (H, W) arrays of sampled-corner counts."""

    levels: tuple[np.ndarray, ...]

    def __post_init__(self):
        for arr in self.levels:
            arr.setflags(write=False)

    def merge(self, other: "FrequencyMap") -> "FrequencyMap":
        """Associative merge for partitioned counting."""
        return FrequencyMap(tuple(a + b for a, b in zip(self.levels, other.levels)))

    @property
    def total(self) -> int:
        return int(sum(a.sum() for a in self.levels))


@dataclass(frozen=True)
class FmapMask:
    """Per-level boolean keep masks over pixels, tagged with the block that
    produced them (block_index == -1 means the all-ones bootstrap mask)."""

    levels: tuple[np.ndarray, ...]
    block_index: int = -1

    def __post_init__(self):
        for arr in self.levels:
            arr.setflags(write=False)

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.levels])

    @property
    def keep_ratios(self) -> tuple[float, ...]:
        return tuple(float(a.mean()) for a in self.levels)

    @property
    def kept_pixels(self) -> int:
        return int(sum(a.sum() for a in self.levels))


def all_ones_mask(config: ModelConfig) -> FmapMask:
    return FmapMask(tuple(
        np.ones((s.height, s.width), dtype=bool) for s in config.level_shapes))


def count_sampled_frequency(plan: SamplingPlan, point_mask,
                            config: ModelConfig) -> FrequencyMap:
    """Count bilinear-corner touches per pixel for every kept point.

    Every in-range corner of a kept point counts once; masked points
    contribute nothing; out-of-range corners are skipped. Counts are taken
    jointly over all queries and heads, and deliberately include pixels the
    previous feature-map mask pruned (those reads return zero vectors but
    still inform the next mask).
    """
    point_mask = np.asarray(point_mask, dtype=bool)
    flat = plan.neighbor_flat[point_mask]
    flat = flat[flat >= 0]
    counts = np.zeros(config.total_pixels, dtype=np.int64)
    np.add.at(counts, flat, 1)
    levels = []
    for s, off in zip(config.level_shapes, config.level_offsets):
        levels.append(counts[off:off + s.pixels].reshape(s.height, s.width))
    return FrequencyMap(tuple(levels))


def fmap_prune_threshold(level_counts: np.ndarray, k: float) -> float:
    """Threshold = k times the mean sampled frequency of the level."""
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    counts = np.asarray(level_counts)
    if counts.size == 0:
        raise ValueError("cannot threshold an empty level")
    return k * float(counts.mean())


def make_fmap_mask(freq: FrequencyMap, k: float, block_index: int) -> FmapMask:
    """Keep pixels with frequency >= threshold; strictly lower is pruned."""
    levels = []
    for counts in freq.levels:
        threshold = fmap_prune_threshold(counts, k)
        levels.append(counts >= threshold)
    return FmapMask(tuple(levels), block_index)


def make_point_mask(probs: np.ndarray, epsilon: float,
                    config: ModelConfig) -> np.ndarray:
    """Boolean keep mask over (query, head, level, point).

    probs is the (N, H, L*P) softmax output; each row must already be
    normalized. A row whose probabilities all fall below epsilon keeps its
    single argmax point so aggregation never collapses to zero.
    """
    if not (0.0 <= epsilon < 1.0):
        raise ValueError(f"epsilon must be in [0, 1), got {epsilon}")
    probs = np.asarray(probs, dtype=np.float64)
    sums = probs.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > 1e-6):
        raise ValueError("probability rows must sum to 1 within 1e-6")
    keep = probs >= epsilon
    empty = ~keep.any(axis=-1)
    if np.any(empty):
        rescue = probs.argmax(axis=-1)
        idx = np.nonzero(empty)
        keep[idx[0], idx[1], rescue[idx]] = True
    n = probs.shape[0]
    return keep.reshape(n, config.num_heads, config.num_levels,
                        config.points_per_level)


def masked_value_projection(x: np.ndarray, value_weights: np.ndarray,
                            mask: FmapMask):
    """Project only the kept pixel rows; pruned rows of the result are zero.

    Returns (values, mac_count). The MAC count shrinks proportionally with
    the kept-pixel fraction: kept * D_in * D_in.
    """
    flat_mask = mask.flat()
    if x.shape[0] != flat_mask.shape[0]:
        raise ValueError(
            f"mask covers {flat_mask.shape[0]} pixels but the feature map "
            f"has {x.shape[0]} rows")
    if x.shape[1] != value_weights.shape[0]:
        raise ValueError(
            f"feature dim {x.shape[1]} does not match value weights "
            f"{value_weights.shape}")
    out = np.zeros((x.shape[0], value_weights.shape[1]))
    out[flat_mask] = x[flat_mask] @ value_weights
    macs = int(flat_mask.sum()) * x.shape[1] * value_weights.shape[1]
    return out, macs


# ---------------------------------------------------------------------------
# Bit-packed binary mask files. Little-endian header, then the mask bits
# packed LSB-first. Shared container for both mask kinds so runs can be
# replayed from files.
# ---------------------------------------------------------------------------

def _pack_bits(flat_bool: np.ndarray) -> bytes:
    return np.packbits(flat_bool.astype(np.uint8), bitorder="little").tobytes()


def _unpack_bits(data: bytes, count: int) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8),
                         bitorder="little")
    return bits[:count].astype(bool)


def mask_to_bytes(mask, config: ModelConfig | None = None) -> bytes:
    """Serialize an FmapMask or a point-mask array to the versioned binary
    container. Point masks need the config for their header fields.
    """
    if isinstance(mask, FmapMask):
        header = _FMAP_MAGIC + struct.pack(
            "<HiH", MASK_FORMAT_VERSION, mask.block_index, len(mask.levels))
        for arr in mask.levels:
            header += struct.pack("<HH", arr.shape[0], arr.shape[1])
        payload = _pack_bits(mask.flat())
    else:
        if config is None:
            raise ValueError("point masks require the model config")
        arr = np.asarray(mask, dtype=bool)
        n, h, l, p = arr.shape
        header = _POINT_MAGIC + struct.pack(
            "<HiH", MASK_FORMAT_VERSION, -1, l)
        for s in config.level_shapes:
            header += struct.pack("<HH", s.height, s.width)
        header += struct.pack("<IHH", n, h, p)
        payload = _pack_bits(arr.ravel())
    return header + payload


def write_mask_file(path, mask, config: ModelConfig | None = None):
    with open(path, "wb") as f:
        f.write(mask_to_bytes(mask, config))


def mask_from_bytes(data: bytes):
    """Decode the binary container. Returns ("fmap", FmapMask) or
    ("point", array, level_shapes)."""
    magic, rest = data[:4], data[4:]
    if magic not in (_FMAP_MAGIC, _POINT_MAGIC):
        raise ValueError(f"not a mask file (magic {magic!r})")
    version, block_index, n_l = struct.unpack_from("<HiH", rest)
    if version != MASK_FORMAT_VERSION:
        raise ValueError(f"unsupported mask format version {version}")
    pos = struct.calcsize("<HiH")
    shapes = []
    for i in range(n_l):
        h, w = struct.unpack_from("<HH", rest, pos)
        shapes.append(LevelShape(i, h, w))
        pos += 4
    if magic == _FMAP_MAGIC:
        total = sum(s.pixels for s in shapes)
        flat = _unpack_bits(rest[pos:], total)
        levels, off = [], 0
        for s in shapes:
            levels.append(flat[off:off + s.pixels].reshape(s.height, s.width))
            off += s.pixels
        return "fmap", FmapMask(tuple(levels), block_index)
    if magic == _POINT_MAGIC:
        n, h, p = struct.unpack_from("<IHH", rest, pos)
        pos += struct.calcsize("<IHH")
        flat = _unpack_bits(rest[pos:], n * h * n_l * p)
        return "point", flat.reshape(n, h, n_l, p), tuple(shapes)
    raise ValueError(f"not a mask file (magic {magic!r})")


def read_mask_file(path):
    with open(path, "rb") as f:
        return mask_from_bytes(f.read())
