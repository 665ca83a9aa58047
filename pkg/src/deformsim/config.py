"""Model geometry and run configuration.

Coordinates are (x, y) with x horizontal; arrays are indexed [y, x].
Feature maps are flattened level-major, row-major within a level.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, replace

__all__ = [
    "LevelShape",
    "ModelConfig",
    "default_half_ranges",
    "parse_config_text",
    "format_config_text",
    "config_hash",
]

CONFIG_FORMAT_VERSION = 1


@dataclass(frozen=True)
class LevelShape:
    level: int
    height: int
    width: int

    def __post_init__(self):
        if self.level < 0:
            raise ValueError(f"level index must be >= 0, got {self.level}")
        if self.height < 1 or self.width < 1:
            raise ValueError(
                f"level {self.level} must be at least 1x1, got "
                f"{self.height}x{self.width}")

    @property
    def pixels(self) -> int:
        return self.height * self.width


def default_half_ranges(shapes):
    """Per-level (half_w, half_h) defaults: ceil(dim/8), shrunk so the range
    plus the interpolation fringe fits inside the level."""
    ranges = []
    for s in shapes:
        half_w = max(0, min(math.ceil(s.width / 8), (s.width - 2) // 2))
        half_h = max(0, min(math.ceil(s.height / 8), (s.height - 2) // 2))
        ranges.append((half_w, half_h))
    return tuple(ranges)


@dataclass(frozen=True)
class ModelConfig:
    """Static attention-layer geometry shared by every module.

    bounded_ranges holds per-level (half_width, half_height) in pixels for
    range narrowing; None disables clamping (pure functional model).
    """

    level_shapes: tuple[LevelShape, ...]
    points_per_level: int
    num_heads: int
    hidden_dim: int
    quant_bits: int = 12
    bounded_ranges: tuple[tuple[int, int], ...] | None = None
    fmap_prune_k: float = 1.0
    point_prune_epsilon: float = 1e-2
    offsets_in_pixels: bool = True
    level_order: str = "finest_first"

    def __post_init__(self):
        if not self.level_shapes:
            raise ValueError("at least one level is required")
        for i, s in enumerate(self.level_shapes):
            if s.level != i:
                raise ValueError(f"level_shapes[{i}] carries level id {s.level}")
        if self.points_per_level < 1:
            raise ValueError("points_per_level must be >= 1")
        if self.num_heads < 1:
            raise ValueError("num_heads must be >= 1")
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be >= 1")
        if self.hidden_dim % self.num_heads != 0:
            raise ValueError(
                f"hidden_dim {self.hidden_dim} not divisible by "
                f"num_heads {self.num_heads}")
        if not (4 <= self.quant_bits <= 16):
            raise ValueError(f"quant_bits must be in [4, 16], got {self.quant_bits}")
        if self.fmap_prune_k < 0:
            raise ValueError("fmap_prune_k must be >= 0")
        if not (0.0 <= self.point_prune_epsilon < 1.0):
            raise ValueError(
                f"point_prune_epsilon must be in [0, 1), got "
                f"{self.point_prune_epsilon}")
        if self.level_order not in ("finest_first", "coarsest_first"):
            raise ValueError(f"unknown level_order {self.level_order!r}")
        if self.bounded_ranges is not None:
            if len(self.bounded_ranges) != len(self.level_shapes):
                raise ValueError("bounded_ranges must list one entry per level")
            for s, (half_w, half_h) in zip(self.level_shapes, self.bounded_ranges):
                if half_w < 0 or half_h < 0:
                    raise ValueError("range half sizes must be >= 0")
                if 2 * half_w + 2 > s.width or 2 * half_h + 2 > s.height:
                    raise ValueError(
                        f"level {s.level}: range ({half_w},{half_h}) plus "
                        f"interpolation fringe does not fit in "
                        f"{s.height}x{s.width}")

    @property
    def num_levels(self) -> int:
        return len(self.level_shapes)

    @property
    def head_dim(self) -> int:
        return self.hidden_dim // self.num_heads

    @property
    def points_per_query(self) -> int:
        return self.num_levels * self.points_per_level

    @property
    def total_pixels(self) -> int:
        return sum(s.pixels for s in self.level_shapes)

    @property
    def level_offsets(self) -> tuple[int, ...]:
        offsets, acc = [], 0
        for s in self.level_shapes:
            offsets.append(acc)
            acc += s.pixels
        return tuple(offsets)

    def with_ranges(self, ranges) -> "ModelConfig":
        return replace(self, bounded_ranges=tuple(tuple(r) for r in ranges))


def make_config(shape_list, points_per_level, num_heads, hidden_dim, **kw):
    """Convenience constructor from a list of (H, W) pairs."""
    shapes = tuple(LevelShape(i, h, w) for i, (h, w) in enumerate(shape_list))
    return ModelConfig(shapes, points_per_level, num_heads, hidden_dim, **kw)


# ---------------------------------------------------------------------------
# Flat key = value run-configuration files.
#
# One file fully determines a run. Keys, defaults and units are listed in
# CONFIG_FIELDS; the serialized form is canonical (fixed declaration order)
# so a config round-trips byte-identically.
# ---------------------------------------------------------------------------

def _parse_bool(text):
    t = text.strip().lower()
    if t in ("true", "on", "1", "yes"):
        return True
    if t in ("false", "off", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_int_list(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _parse_float_list(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _parse_shape_list(text):
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        h, _, w = item.partition("x")
        out.append((int(h), int(w)))
    return out


def _fmt_bool(v):
    return "true" if v else "false"


def _fmt_shape_list(v):
    return ",".join(f"{h}x{w}" for h, w in v)


def _fmt_list(v):
    return ",".join(str(x) for x in v)


# name -> (parser, formatter, default, unit comment)
CONFIG_FIELDS = {
    "format_version": (int, str, CONFIG_FORMAT_VERSION, ""),
    "seed": (int, str, 0, ""),
    "level_shapes": (_parse_shape_list, _fmt_shape_list,
                     [(8, 8), (8, 8), (8, 8), (8, 8)], "pixels, HxW per level"),
    "points_per_level": (int, str, 2, ""),
    "heads": (int, str, 2, ""),
    "hidden_dim": (int, str, 16, "channels"),
    "quant_bits": (int, str, 12, "bits"),
    "half_widths": (_parse_int_list, _fmt_list, [], "pixels; empty = default"),
    "half_heights": (_parse_int_list, _fmt_list, [], "pixels; empty = default"),
    "fmap_prune_k": (float, str, 1.0, "threshold = k * mean frequency"),
    "point_prune_epsilon": (float, str, 0.01, "probability threshold"),
    "offsets_in_pixels": (_parse_bool, _fmt_bool, True, ""),
    "level_order": (str, str, "finest_first", ""),
    "offset_spread": (str, str, "uniform", "uniform | gaussian"),
    "offset_scale": (float, str, 1.0, "pixels"),
    "temperature": (float, str, 1.0, "softmax temperature"),
    "blocks": (int, str, 2, "chained attention blocks"),
    "mode": (str, str, "inter", "intra | inter"),
    "fusion": (_parse_bool, _fmt_bool, True, "on | off"),
    "reuse": (_parse_bool, _fmt_bool, True, "on | off"),
    "clock_mhz": (float, str, 400.0, "MHz"),
    "dram_gbps": (float, str, 256.0, "GB/s"),
    "dram_pj_per_bit": (float, str, 1.2, "pJ/bit"),
    "sram_read_pj_per_bit": (float, str, 0.15, "pJ/bit"),
    "sram_write_pj_per_bit": (float, str, 0.18, "pJ/bit"),
    "softmax_elems_per_cycle": (int, str, 1, "elements/cycle"),
}


def parse_config_text(text):
    """Parse a flat key = value config into a dict (defaults applied).

    Lines starting with # are comments; inline # comments are stripped.
    Unknown keys are rejected.
    """
    values = {k: v[2] for k, v in CONFIG_FIELDS.items()}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in CONFIG_FIELDS:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
        parser = CONFIG_FIELDS[key][0]
        try:
            values[key] = parser(val.strip())
        except ValueError as exc:
            raise ValueError(f"line {lineno}: bad value for {key}: {exc}") from exc
    if values["format_version"] != CONFIG_FORMAT_VERSION:
        raise ValueError(
            f"unsupported config format_version {values['format_version']}")
    return values


def format_config_text(values):
    """Canonical serialization (fixed key order, explicit units)."""
    lines = []
    for key, (_, fmt, default, unit) in CONFIG_FIELDS.items():
        val = values.get(key, default)
        rendered = fmt(val)
        comment = f"  # {unit}" if unit else ""
        lines.append(f"{key} = {rendered}{comment}")
    return "\n".join(lines) + "\n"


def config_hash(values) -> str:
    """Hash of the canonical serialization; embedded in every report row."""
    return hashlib.sha256(format_config_text(values).encode()).hexdigest()[:16]
