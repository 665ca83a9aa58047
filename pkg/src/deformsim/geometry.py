"""Sampling geometry: level-wise range narrowing, neighbor computation,
conflict-free bank mapping, and the sliding-window residency tracker.

Bank layout, 16 banks total:
  inter-level mode  bank = (16/N_l)*level + parity bits of the pixel, so the
                    four pixels of any aligned or unaligned 2x2 window land in
                    four distinct banks and levels never share a bank.
  intra-level mode  the level field is ignored and a 4x4 parity spreads one
                    level's pixels over all 16 banks; different windows may
                    then collide (same bank, different address).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ModelConfig

__all__ = [
    "NUM_BANKS",
    "clamp_to_range",
    "neighbors_of",
    "bank_for_pixel",
    "bank_for_pixel_intra",
    "SamplingPlan",
    "build_sampling_plan",
    "window_rect",
    "ReuseWindow",
    "ReuseDelta",
]

NUM_BANKS = 16

# corner order: (x0,y0) (x1,y0) (x0,y1) (x1,y1)
_CORNER_DX = np.array([0, 1, 0, 1])
_CORNER_DY = np.array([0, 0, 1, 1])


def clamp_to_range(ref, offset, half, dim):
    """Saturate ref+offset into [ref-half, ref+half], then into [0, dim-1].

    Never rejects; works on scalars or arrays. Applying it twice is a no-op.
    """
    coord = np.minimum(np.maximum(ref + offset, ref - half), ref + half)
    return np.minimum(np.maximum(coord, 0.0), dim - 1.0)


def neighbors_of(x, y, height, width):
    """Corner coordinates and fractional weights for one sampling point.

    Returns (corners, t0, t1, in_range) where corners is a list of four
    (cx, cy) integer pairs in (x0,y0),(x1,y0),(x0,y1),(x1,y1) order, t0 is
    the vertical fraction y-y0 and t1 the horizontal fraction x-x0.
    Out-of-range corners are flagged; they read as zero vectors.
    """
    if not (np.isfinite(x) and np.isfinite(y)):
        raise ValueError(f"non-finite sampling coordinate ({x}, {y})")
    x0 = int(np.floor(x))
    y0 = int(np.floor(y))
    corners = [(x0, y0), (x0 + 1, y0), (x0, y0 + 1), (x0 + 1, y0 + 1)]
    in_range = [0 <= cx < width and 0 <= cy < height for cx, cy in corners]
    return corners, float(y - y0), float(x - x0), in_range


def bank_for_pixel(level, x0, y0, num_levels=4):
    """Inter-level bank id. Levels own disjoint groups of 16/N_l banks; the
    pixel parity picks the bank within the group, so any 2x2 window is spread
    over four distinct banks. Accepts arrays."""
    if 16 % num_levels != 0 or num_levels > 4:
        raise ValueError(
            f"inter-level banking needs num_levels in (1, 2, 4), got {num_levels}")
    level = np.asarray(level)
    if np.any(level >= num_levels) or np.any(level < 0):
        raise ValueError(f"level out of range [0, {num_levels})")
    x0 = np.asarray(x0)
    y0 = np.asarray(y0)
    per_level = 16 // num_levels
    parity = 2 * (y0 % 2) + (x0 % 2)
    spread = 0
    if per_level >= 8:
        spread = 4 * ((x0 // 2) % 2)
    if per_level == 16:
        spread = spread + 8 * ((y0 // 2) % 2)
    return per_level * level + spread + parity


def bank_for_pixel_intra(x0, y0):
    """Intra-level bank id: 4x4 parity over all 16 banks, level ignored."""
    x0 = np.asarray(x0)
    y0 = np.asarray(y0)
    return 4 * (y0 % 4) + (x0 % 4)


@dataclass(frozen=True)
class SamplingPlan:
    """Everything the sampler, pruner and cost model need per sampling point.

    Point axes are (query, head, level, point); corner axes append a
    4-corner axis. neighbor_flat holds global flat pixel indices, -1 for
    corners outside the level (those read as zero).
    """

    config: ModelConfig
    ref_pixel: np.ndarray      # (N, L, 2) float, (x, y) per level
    raw_offset: np.ndarray     # (N, H, L, P, 2) float, pixels
    coord: np.ndarray          # (N, H, L, P, 2) float, clamped (x, y)
    corner_x: np.ndarray       # (N, H, L, P, 4) int
    corner_y: np.ndarray       # (N, H, L, P, 4) int
    t0: np.ndarray             # (N, H, L, P) float, y fraction
    t1: np.ndarray             # (N, H, L, P) float, x fraction
    neighbor_flat: np.ndarray  # (N, H, L, P, 4) int, -1 = out of range

    def __post_init__(self):
        for arr in (self.ref_pixel, self.raw_offset, self.coord,
                    self.corner_x, self.corner_y, self.t0, self.t1,
                    self.neighbor_flat):
            arr.setflags(write=False)

    @property
    def in_range(self) -> np.ndarray:
        return self.neighbor_flat >= 0


def build_sampling_plan(ref_points, offsets, config: ModelConfig,
                        clamp=True) -> SamplingPlan:
    """Turn normalized reference points plus learned offsets into concrete
    sampling coordinates, corner indices and fractional weights.

    ref_points: (N, L, 2) normalized (x, y); offsets: (N, H, L, P, 2). With
    clamp=False the raw coordinate is kept (zero padding handles the outside),
    which is the unbounded functional model; with clamp=True coordinates
    saturate into the per-level bounded range and the level itself.
    """
    n_in = config.total_pixels
    n_h, n_l, n_p = config.num_heads, config.num_levels, config.points_per_level
    ref_points = np.asarray(ref_points, dtype=np.float64)
    offsets = np.asarray(offsets, dtype=np.float64)
    if ref_points.shape != (n_in, n_l, 2):
        raise ValueError(
            f"ref_points shape {ref_points.shape}, expected {(n_in, n_l, 2)}")
    if offsets.shape != (n_in, n_h, n_l, n_p, 2):
        raise ValueError(
            f"offsets shape {offsets.shape}, expected {(n_in, n_h, n_l, n_p, 2)}")
    if clamp and config.bounded_ranges is None:
        raise ValueError("clamp=True requires config.bounded_ranges")

    ref_pixel = np.empty_like(ref_points)
    coord = np.empty_like(offsets)
    raw_offset = offsets.copy()
    for l, shape in enumerate(config.level_shapes):
        dims = np.array([shape.width, shape.height], dtype=np.float64)
        ref_pixel[:, l] = ref_points[:, l] * dims - 0.5
        off = offsets[:, :, l] if config.offsets_in_pixels else offsets[:, :, l] * dims
        raw_offset[:, :, l] = off
        ref = ref_pixel[:, l][:, None, None, :]
        if clamp:
            half = np.array(config.bounded_ranges[l], dtype=np.float64)
            coord[:, :, l] = clamp_to_range(ref, off, half, dims)
        else:
            coord[:, :, l] = ref + off

    x0 = np.floor(coord[..., 0]).astype(np.int64)
    y0 = np.floor(coord[..., 1]).astype(np.int64)
    t1 = coord[..., 0] - x0
    t0 = coord[..., 1] - y0
    corner_x = x0[..., None] + _CORNER_DX
    corner_y = y0[..., None] + _CORNER_DY

    neighbor_flat = np.full(corner_x.shape, -1, dtype=np.int64)
    offsets_flat = config.level_offsets
    for l, shape in enumerate(config.level_shapes):
        cx = corner_x[:, :, l]
        cy = corner_y[:, :, l]
        ok = (cx >= 0) & (cx < shape.width) & (cy >= 0) & (cy < shape.height)
        flat = offsets_flat[l] + cy * shape.width + cx
        neighbor_flat[:, :, l] = np.where(ok, flat, -1)

    return SamplingPlan(config, ref_pixel, raw_offset, coord,
                        corner_x, corner_y, t0, t1, neighbor_flat)


def window_rect(ref_x, ref_y, half_w, half_h, height, width):
    """Inclusive (x_lo, x_hi, y_lo, y_hi) of the pixels a bounded range can
    touch through bilinear corners: floor(ref-half) .. floor(ref+half)+1,
    clamped to the level."""
    x_lo = max(0, int(np.floor(ref_x - half_w)))
    x_hi = min(width - 1, int(np.floor(ref_x + half_w)) + 1)
    y_lo = max(0, int(np.floor(ref_y - half_h)))
    y_hi = min(height - 1, int(np.floor(ref_y + half_h)) + 1)
    return x_lo, x_hi, y_lo, y_hi


@dataclass
class ReuseDelta:
    """Column strips (inclusive rects) fetched and reused by one advance."""

    fetched: list
    reused: list

    @staticmethod
    def _area(strips):
        return sum((x_hi - x_lo + 1) * (y_hi - y_lo + 1)
                   for x_lo, x_hi, y_lo, y_hi in strips)

    @property
    def fetched_area(self) -> int:
        return self._area(self.fetched)

    @property
    def reused_area(self) -> int:
        return self._area(self.reused)

    def pixel_set(self, which="fetched"):
        strips = self.fetched if which == "fetched" else self.reused
        out = set()
        for x_lo, x_hi, y_lo, y_hi in strips:
            out.update((x, y) for x in range(x_lo, x_hi + 1)
                       for y in range(y_lo, y_hi + 1))
        return out


class ReuseWindow:
    """Single-level residency tracker for the sliding bounded range.

    Residency always equals the current rectangle. Overlap is exploited only
    for a forward slide within the same row band; a row change, a backward
    slide or a reset refills the window completely. Single-owner mutable
    state: one scheduler advances it, nothing shares it.
    """

    def __init__(self):
        self.rect = None

    def reset(self):
        self.rect = None

    def advance(self, rect) -> ReuseDelta:
        x_lo, x_hi, y_lo, y_hi = rect
        prev = self.rect
        self.rect = rect
        if prev is None:
            return ReuseDelta([rect], [])
        px_lo, px_hi, py_lo, py_hi = prev
        if (py_lo, py_hi) != (y_lo, y_hi) or x_lo < px_lo:
            return ReuseDelta([rect], [])
        if x_lo > px_hi:
            return ReuseDelta([rect], [])
        # same row band, forward slide with overlap
        fetched = []
        if x_hi > px_hi:
            fetched.append((px_hi + 1, x_hi, y_lo, y_hi))
        reused = [(x_lo, min(x_hi, px_hi), y_lo, y_hi)]
        return ReuseDelta(fetched, reused)
