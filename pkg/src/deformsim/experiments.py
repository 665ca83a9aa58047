"""Experiment orchestration: named presets expand into ordered run lists
over identical workloads, differing only in mode flags or pruning knobs."""

from __future__ import annotations

from dataclasses import replace

from .config import ModelConfig, default_half_ranges, make_config
from .reports import ReportBundle, build_ratios
from .simulator import SimSettings, run_pipeline
from .workload import WorkloadSpec

__all__ = ["PRESETS", "build_model_config", "build_workload_spec",
           "build_settings", "run_experiment"]

# Sweep axes for the pruning preset; the (0, 0) cell is the dense baseline
# every other cell is compared against.
PRUNE_EPSILONS = (0.0, 0.01, 0.05, 0.1)
PRUNE_KS = (0.0, 0.5, 1.0)

PRESETS = ("parallelism-ablation", "fusion-ablation", "reuse-ablation",
           "pruning-sweep", "end-to-end")


def build_model_config(values) -> ModelConfig:
    shapes = values["level_shapes"]
    half_ws = values["half_widths"]
    half_hs = values["half_heights"]
    cfg = make_config(
        shapes,
        points_per_level=values["points_per_level"],
        num_heads=values["heads"],
        hidden_dim=values["hidden_dim"],
        quant_bits=values["quant_bits"],
        fmap_prune_k=values["fmap_prune_k"],
        point_prune_epsilon=values["point_prune_epsilon"],
        offsets_in_pixels=values["offsets_in_pixels"],
        level_order=values["level_order"],
    )
    if half_ws and half_hs:
        if len(half_ws) != len(shapes) or len(half_hs) != len(shapes):
            raise ValueError("half_widths/half_heights must list every level")
        ranges = tuple(zip(half_ws, half_hs))
    else:
        ranges = default_half_ranges(cfg.level_shapes)
    return cfg.with_ranges(ranges)


def build_workload_spec(values, config: ModelConfig) -> WorkloadSpec:
    return WorkloadSpec(
        config=config,
        seed=values["seed"],
        offset_spread=values["offset_spread"],
        offset_scale=values["offset_scale"],
        temperature=values["temperature"],
        blocks=values["blocks"],
    )


def build_settings(values) -> SimSettings:
    return SimSettings(
        mode=values["mode"],
        fusion=values["fusion"],
        reuse=values["reuse"],
        clock_mhz=values["clock_mhz"],
        dram_gbps=values["dram_gbps"],
        dram_pj_per_bit=values["dram_pj_per_bit"],
        sram_read_pj_per_bit=values["sram_read_pj_per_bit"],
        sram_write_pj_per_bit=values["sram_write_pj_per_bit"],
        softmax_elems_per_cycle=values["softmax_elems_per_cycle"],
    )


def _preset_cells(preset: str, settings: SimSettings):
    """Ordered (label, settings, epsilon_override, k_override) cells."""
    if preset == "parallelism-ablation":
        return [("intra", replace(settings, mode="intra"), None, None),
                ("inter", replace(settings, mode="inter"), None, None)]
    if preset == "fusion-ablation":
        return [("unfused", replace(settings, fusion=False), None, None),
                ("fused", replace(settings, fusion=True), None, None)]
    if preset == "reuse-ablation":
        return [("reuse-off", replace(settings, reuse=False), None, None),
                ("reuse-on", replace(settings, reuse=True), None, None)]
    if preset == "pruning-sweep":
        cells = []
        for eps in PRUNE_EPSILONS:
            for k in PRUNE_KS:
                cells.append((f"eps{eps}_k{k}", settings, eps, k))
        return cells
    if preset == "end-to-end":
        return [("end-to-end", settings, None, None)]
    raise ValueError(
        f"unknown preset {preset!r}; valid presets: {', '.join(PRESETS)}")


def run_experiment(preset: str, values) -> ReportBundle:
    """Run every cell of a preset on identical workloads and bundle the
    records plus the pairwise ratio table."""
    config = build_model_config(values)
    spec = build_workload_spec(values, config)
    settings = build_settings(values)
    runs = []
    for label, cell_settings, eps, k in _preset_cells(preset, settings):
        try:
            runs.append(run_pipeline(spec, cell_settings, label=label,
                                     epsilon=eps, k=k))
        except (RuntimeError, AssertionError) as exc:
            raise RuntimeError(
                f"run {label!r} of preset {preset!r} failed its internal "
                f"assertions: {exc}") from exc
    ratios = build_ratios(preset, runs)
    return ReportBundle(preset=preset, config_values=dict(values),
                        runs=tuple(runs), ratios=ratios)
