"""Request/response models of the simulation service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class RunConfig(BaseModel):
    """Structured mirror of the flat key = value run configuration."""

    format_version: int = 1
    seed: int = 0
    level_shapes: list[tuple[int, int]] = Field(
        default=[(8, 8), (8, 8), (8, 8), (8, 8)])
    points_per_level: int = 2
    heads: int = 2
    hidden_dim: int = 16
    quant_bits: int = 12
    half_widths: list[int] = Field(default_factory=list)
    half_heights: list[int] = Field(default_factory=list)
    fmap_prune_k: float = 1.0
    point_prune_epsilon: float = 0.01
    offsets_in_pixels: bool = True
    level_order: str = "finest_first"
    offset_spread: str = "uniform"
    offset_scale: float = 1.0
    temperature: float = 1.0
    blocks: int = 2
    mode: str = "inter"
    fusion: bool = True
    reuse: bool = True
    clock_mhz: float = 400.0
    dram_gbps: float = 256.0
    dram_pj_per_bit: float = 1.2
    sram_read_pj_per_bit: float = 0.15
    sram_write_pj_per_bit: float = 0.18
    softmax_elems_per_cycle: int = 1

    def to_values(self) -> dict:
        values = self.model_dump()
        values["level_shapes"] = [tuple(s) for s in values["level_shapes"]]
        return values


class HealthResponse(BaseModel):
    status: str
    version: str


class PresetsResponse(BaseModel):
    presets: list[str]


class SimulateRequest(BaseModel):
    config: RunConfig = Field(default_factory=RunConfig)
    label: str = "run"
    # optional feature-map mask (binary container, hex) replayed into block 0
    fmap_mask_hex: str | None = None


class SimulateResponse(BaseModel):
    config_hash: str
    record: dict


class ExperimentRequest(BaseModel):
    preset: str
    config: RunConfig = Field(default_factory=RunConfig)


class ExperimentResponse(BaseModel):
    preset: str
    config_hash: str
    files: dict[str, str]
    runs: list[dict]
    ratios: list[dict]


class MaskGenerateRequest(BaseModel):
    config: RunConfig = Field(default_factory=RunConfig)
    block_index: int = 0


class MaskGenerateResponse(BaseModel):
    fmap_mask_hex: str
    point_mask_hex: str
    fmap_keep_ratios: list[float]
    point_keep_ratio: float


class MaskInspectRequest(BaseModel):
    mask_hex: str


class MaskInspectResponse(BaseModel):
    kind: str
    block_index: int | None = None
    level_shapes: list[tuple[int, int]]
    keep_ratio: float
    keep_ratios_per_level: list[float] | None = None
    point_axes: list[int] | None = None


class ReportDiffRequest(BaseModel):
    report_a: str
    report_b: str


class ReportDiffResponse(BaseModel):
    identical: bool
    differences: list[str]
