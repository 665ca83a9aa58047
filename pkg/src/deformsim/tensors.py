"""Tensor containers: symmetric fixed-point quantization and the flattened
multi-scale feature map with its level-major index map."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import LevelShape, ModelConfig

__all__ = [
    "QuantTensor",
    "quantize",
    "dequantize",
    "MultiScaleFmap",
    "flat_index",
    "pixel_coords",
]


@dataclass(frozen=True)
class QuantTensor:
    """Signed integer values plus a per-tensor scale. Immutable."""

    values: np.ndarray
    scale: float
    bits: int

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        lim = 1 << (self.bits - 1)
        v = self.values
        if v.size and (v.min() < -lim or v.max() > lim - 1):
            raise ValueError(f"values exceed the {self.bits}-bit signed range")
        self.values.setflags(write=False)

    @property
    def shape(self):
        return self.values.shape

    def dequantized(self) -> np.ndarray:
        return self.values.astype(np.float64) * self.scale


def quantize(tensor, bits: int = 12) -> QuantTensor:
    """Per-tensor symmetric quantization with round-half-to-even.

    scale = max|t| / (2^(bits-1) - 1); an all-zero tensor gets scale 1 so the
    mapping stays well defined.
    """
    if not (4 <= bits <= 16):
        raise ValueError(f"bits must be in [4, 16], got {bits}")
    arr = np.asarray(tensor, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("cannot quantize non-finite input")
    qmax = (1 << (bits - 1)) - 1
    max_abs = float(np.max(np.abs(arr))) if arr.size else 0.0
    scale = max_abs / qmax if max_abs > 0 else 1.0
    values = np.clip(np.round(arr / scale), -qmax - 1, qmax).astype(np.int32)
    return QuantTensor(values, scale, bits)


def dequantize(qt: QuantTensor) -> np.ndarray:
    return qt.dequantized()


def flat_index(level: int, y: int, x: int, shapes) -> int:
    """Level-major, row-major flat pixel index. Rejects out-of-range coords."""
    offset = 0
    for s in shapes:
        if s.level == level:
            if not (0 <= y < s.height and 0 <= x < s.width):
                raise ValueError(
                    f"pixel ({x},{y}) outside level {level} "
                    f"({s.height}x{s.width})")
            return offset + y * s.width + x
        offset += s.pixels
    raise ValueError(f"no level {level} in shapes")


def pixel_coords(flat: int, shapes) -> tuple[int, int, int]:
    """Inverse of flat_index: flat -> (level, y, x)."""
    offset = 0
    for s in shapes:
        if flat < offset + s.pixels:
            local = flat - offset
            return s.level, local // s.width, local % s.width
        offset += s.pixels
    raise ValueError(f"flat index {flat} outside the {offset}-pixel map")


@dataclass(frozen=True)
class MultiScaleFmap:
    """Flattened multi-scale feature map: (total_pixels, channels) rows in
    level-major row-major order."""

    data: np.ndarray
    shapes: tuple[LevelShape, ...]

    def __post_init__(self):
        total = sum(s.pixels for s in self.shapes)
        if self.data.ndim != 2 or self.data.shape[0] != total:
            raise ValueError(
                f"expected ({total}, channels) data, got {self.data.shape}")
        self.data.setflags(write=False)

    @property
    def channels(self) -> int:
        return self.data.shape[1]

    def level_view(self, level: int) -> np.ndarray:
        """(H, W, channels) view of one level."""
        offset = sum(s.pixels for s in self.shapes[:level])
        s = self.shapes[level]
        return self.data[offset:offset + s.pixels].reshape(s.height, s.width, -1)

    @classmethod
    def from_levels(cls, levels) -> "MultiScaleFmap":
        shapes = tuple(
            LevelShape(i, arr.shape[0], arr.shape[1])
            for i, arr in enumerate(levels))
        flat = np.concatenate(
            [np.asarray(a, dtype=np.float64).reshape(-1, a.shape[-1])
             for a in levels])
        return cls(flat, shapes)


def validate_against(config: ModelConfig, name: str, arr: np.ndarray, shape):
    """Shape check that names the offending dimension in its diagnostic."""
    if arr.shape != tuple(shape):
        for axis, (got, want) in enumerate(zip(arr.shape, shape)):
            if got != want:
                raise ValueError(
                    f"{name}: axis {axis} has size {got}, expected {want} "
                    f"(full shape {arr.shape} vs {tuple(shape)})")
        raise ValueError(
            f"{name}: rank mismatch, got {arr.shape}, expected {tuple(shape)}")
