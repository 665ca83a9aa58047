"""deformsim: functional model and cycle-accurate simulator for a
multi-scale deformable-attention accelerator."""

__version__ = "0.1.0"

from .attention import (WeightSet, aggregate, bilinear_sample,
                        bilinear_sample_fused, deformable_attention,
                        grid_reference_points, softmax)
from .config import LevelShape, ModelConfig, default_half_ranges, make_config
from .geometry import (ReuseWindow, SamplingPlan, bank_for_pixel,
                       bank_for_pixel_intra, build_sampling_plan,
                       clamp_to_range, neighbors_of, window_rect)
from .pipeline import FunctionalBlock, run_functional_block
from .pruning import (FmapMask, FrequencyMap, all_ones_mask,
                      count_sampled_frequency, fmap_prune_threshold,
                      make_fmap_mask, make_point_mask,
                      masked_value_projection, read_mask_file,
                      write_mask_file)
from .simulator import (BlockResult, CycleReport, EnergyReport, RunRecord,
                        SimSettings, energy_account, run_pipeline,
                        simulate_block, simulate_mm)
from .tensors import (MultiScaleFmap, QuantTensor, dequantize, flat_index,
                      pixel_coords, quantize)
from .workload import (SplitMix64, Workload, WorkloadSpec, block_weights,
                       generate_workload, stream)

__all__ = [
    "__version__",
    "LevelShape", "ModelConfig", "make_config", "default_half_ranges",
    "QuantTensor", "quantize", "dequantize", "MultiScaleFmap",
    "flat_index", "pixel_coords",
    "WeightSet", "softmax", "bilinear_sample", "bilinear_sample_fused",
    "aggregate", "deformable_attention", "grid_reference_points",
    "SamplingPlan", "build_sampling_plan", "clamp_to_range", "neighbors_of",
    "bank_for_pixel", "bank_for_pixel_intra", "window_rect", "ReuseWindow",
    "FrequencyMap", "FmapMask", "all_ones_mask", "count_sampled_frequency",
    "fmap_prune_threshold", "make_fmap_mask", "make_point_mask",
    "masked_value_projection", "write_mask_file", "read_mask_file",
    "FunctionalBlock", "run_functional_block",
    "SimSettings", "simulate_mm", "simulate_block", "run_pipeline",
    "energy_account", "BlockResult", "CycleReport", "EnergyReport",
    "RunRecord",
    "WorkloadSpec", "Workload", "generate_workload", "block_weights",
    "SplitMix64", "stream",
]
