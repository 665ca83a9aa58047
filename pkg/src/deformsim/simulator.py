"""Cycle-accurate datapath model.

The functional result of a block comes from the shared pipeline engine (the
simulator never changes values, only attributes cost). Cost is attributed to
the four dataflow phases, executed in order with no overlap:

  1. attention probabilities + point-mask update (MM mode, then the softmax
     unit at a fixed elements/cycle rate)
  2. offset projection for the kept points (MM mode)
  3. value projection of the kept feature-map pixels (MM mode)
  4. sampling + aggregation (BA mode): bounded windows stream from DRAM into
     the 16 banks (optionally reusing the overlap with the previous window),
     four lanes consume four sampling points per cycle, and in fused mode the
     aggregation multiplier consumes bilinear results directly.

MM mode processes one 16-element vector against a 16x16 weight tile per
cycle, output-stationary; masked rows are skipped entirely. Intra-level
sampling pays (census - 1) serialization cycles plus one detection cycle per
conflicting batch; inter-level sampling is conflict-free by the bank-layout
theorem and asserts that at runtime. Inter-level base cycles are the ideal
ceil(kept/4): the scheduler is assumed to keep all four level lanes fed by
interleaving heads and points. Every phase is additionally floored by its
DRAM transfer time at the configured bandwidth.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .config import ModelConfig
from .geometry import (NUM_BANKS, ReuseWindow, bank_for_pixel,
                       bank_for_pixel_intra, window_rect)
from .pipeline import FunctionalBlock, run_functional_block
from .pruning import FmapMask, all_ones_mask
from .workload import WorkloadSpec, block_weights, generate_workload

__all__ = [
    "MM_TILE",
    "SAMPLE_LANES",
    "SimSettings",
    "MmCost",
    "simulate_mm",
    "detect_conflicts_intra",
    "schedule_inter_level",
    "TrafficCounters",
    "CycleReport",
    "EnergyReport",
    "energy_account",
    "BlockResult",
    "simulate_block",
    "RunRecord",
    "run_pipeline",
]

MM_TILE = 16      # vector width and weight-tile side of the MM mode
SAMPLE_LANES = 4  # bilinear lanes in BA mode


@dataclass(frozen=True)
class SimSettings:
    """Mode flags plus the memory/energy coefficients of one run."""

    mode: str = "inter"              # intra | inter
    fusion: bool = True
    reuse: bool = True
    clock_mhz: float = 400.0
    dram_gbps: float = 256.0
    dram_pj_per_bit: float = 1.2
    sram_read_pj_per_bit: float = 0.15
    sram_write_pj_per_bit: float = 0.18
    softmax_elems_per_cycle: int = 1

    def __post_init__(self):
        if self.mode not in ("intra", "inter"):
            raise ValueError(f"mode must be intra or inter, got {self.mode!r}")
        if self.clock_mhz <= 0 or self.dram_gbps <= 0:
            raise ValueError("clock and bandwidth must be positive")
        if self.softmax_elems_per_cycle < 1:
            raise ValueError("softmax_elems_per_cycle must be >= 1")

    @property
    def dram_bits_per_cycle(self) -> float:
        return self.dram_gbps * 1e9 * 8.0 / (self.clock_mhz * 1e6)


@dataclass(frozen=True)
class MmCost:
    cycles: int
    macs: int
    weight_bits: int
    activation_bits: int


def simulate_mm(rows: int, inner: int, cols: int, quant_bits: int,
                row_mask=None) -> MmCost:
    """Output-stationary MM cost: one kept row crosses one 16x16 tile per
    cycle; masked rows are skipped entirely (the compression units' effect)
    and their activations are never fetched."""
    if rows < 1 or inner < 1 or cols < 1:
        raise ValueError("matrix dimensions must be >= 1")
    kept = rows if row_mask is None else int(np.count_nonzero(row_mask))
    tiles = math.ceil(inner / MM_TILE) * math.ceil(cols / MM_TILE)
    return MmCost(
        cycles=kept * tiles,
        macs=kept * inner * cols,
        weight_bits=inner * cols * quant_bits,
        activation_bits=kept * inner * quant_bits,
    )


def _census(requests) -> int:
    """Worst per-bank count of distinct addresses in one cycle's requests."""
    per_bank: dict[int, set] = {}
    for bank, addr in requests:
        per_bank.setdefault(bank, set()).add(addr)
    if not per_bank:
        return 0
    return max(len(a) for a in per_bank.values())


def detect_conflicts_intra(batch) -> int:
    """Stall cycles for one intra-level batch.

    batch: per sampling point, an iterable of in-range (x, y, address)
    corner records, all points in one level. Same-address requests to one
    bank broadcast for free; distinct addresses serialize, plus one
    detection cycle whenever any serialization happens.
    """
    requests = [(int(bank_for_pixel_intra(x, y)), addr)
                for corners in batch for (x, y, addr) in corners]
    worst = _census(requests)
    return 0 if worst <= 1 else (worst - 1) + 1


def schedule_inter_level(batch, num_levels: int = 4):
    """Access plan for one inter-level batch: at most one point per level.

    batch: iterable of (level, [(x, y, address), ...]) with in-range corners
    only. Returns [(bank, address), ...]; raises if two points share a level
    and asserts the banks are pairwise distinct (the layout theorem).
    """
    levels = [level for level, _ in batch]
    if len(set(levels)) != len(levels):
        raise ValueError(
            "two points share one level; regroup the batch for inter mode")
    plan = []
    for level, corners in batch:
        for (x, y, addr) in corners:
            plan.append((int(bank_for_pixel(level, x, y, num_levels)), addr))
    banks = [b for b, _ in plan]
    if len(set(banks)) != len(banks):
        raise RuntimeError(
            f"bank-layout violation: inter-level batch hit banks {banks}")
    return plan


@dataclass
class TrafficCounters:
    """Bit counts, monotone nondecreasing; all widths are quant_bits."""

    dram_read_weight_bits: int = 0
    dram_read_activation_bits: int = 0
    dram_read_fill_bits: int = 0
    dram_read_intermediate_bits: int = 0
    dram_write_value_bits: int = 0
    dram_write_intermediate_bits: int = 0
    dram_write_output_bits: int = 0
    sram_write_fill_bits: int = 0
    sram_read_bi_bits: int = 0
    sram_read_mask_bits: int = 0
    sram_write_intermediate_bits: int = 0
    sram_read_intermediate_bits: int = 0

    @property
    def dram_read_bits(self) -> int:
        return (self.dram_read_weight_bits + self.dram_read_activation_bits
                + self.dram_read_fill_bits + self.dram_read_intermediate_bits)

    @property
    def dram_write_bits(self) -> int:
        return (self.dram_write_value_bits + self.dram_write_intermediate_bits
                + self.dram_write_output_bits)

    @property
    def dram_bits(self) -> int:
        return self.dram_read_bits + self.dram_write_bits

    @property
    def sram_read_bits(self) -> int:
        return (self.sram_read_bi_bits + self.sram_read_mask_bits
                + self.sram_read_intermediate_bits)

    @property
    def sram_write_bits(self) -> int:
        return self.sram_write_fill_bits + self.sram_write_intermediate_bits

    def add(self, other: "TrafficCounters") -> "TrafficCounters":
        merged = TrafficCounters()
        for name in vars(self):
            setattr(merged, name, getattr(self, name) + getattr(other, name))
        return merged


@dataclass(frozen=True)
class CycleReport:
    """Per-phase cycles (each already floored by its DRAM transfer time) and
    the sampling-phase detail the ablations compare."""

    phases: dict
    msgs_base_cycles: int
    conflict_stall_cycles: int
    aggregation_cycles: int
    softmax_cycles: int
    bank_histogram: tuple
    ba_multiplies: int
    ba_adds: int
    mm_macs: int

    @property
    def total_cycles(self) -> int:
        return sum(self.phases.values())

    @property
    def sampling_compute_cycles(self) -> int:
        """Pre-roofline sampling cycles: base + stalls + unfused aggregation."""
        return (self.msgs_base_cycles + self.conflict_stall_cycles
                + self.aggregation_cycles)


@dataclass(frozen=True)
class EnergyReport:
    traffic: TrafficCounters
    dram_pj: float
    sram_read_pj: float
    sram_write_pj: float

    @property
    def total_pj(self) -> float:
        return self.dram_pj + self.sram_read_pj + self.sram_write_pj


def energy_account(traffic: TrafficCounters, dram_pj_per_bit: float,
                   sram_read_pj_per_bit: float,
                   sram_write_pj_per_bit: float) -> EnergyReport:
    """pJ = bits x coefficient per channel; rejects negative coefficients."""
    for name, coeff in (("dram", dram_pj_per_bit),
                        ("sram_read", sram_read_pj_per_bit),
                        ("sram_write", sram_write_pj_per_bit)):
        if coeff < 0:
            raise ValueError(f"negative {name} energy coefficient: {coeff}")
    return EnergyReport(
        traffic=traffic,
        dram_pj=traffic.dram_bits * dram_pj_per_bit,
        sram_read_pj=traffic.sram_read_bits * sram_read_pj_per_bit,
        sram_write_pj=traffic.sram_write_bits * sram_write_pj_per_bit,
    )


@dataclass(frozen=True)
class BlockResult:
    functional: FunctionalBlock
    cycles: CycleReport
    traffic: TrafficCounters
    energy: EnergyReport
    mode_effective: str


def _effective_mode(settings: SimSettings, config: ModelConfig) -> str:
    if settings.mode == "inter" and config.num_levels != SAMPLE_LANES:
        warnings.warn(
            f"inter-level mode needs {SAMPLE_LANES} levels, config has "
            f"{config.num_levels}; falling back to intra-level mode")
        return "intra"
    return settings.mode


def _rooflined(compute_cycles: int, dram_bits: int,
               settings: SimSettings) -> int:
    transfer = math.ceil(dram_bits / settings.dram_bits_per_cycle)
    return max(compute_cycles, transfer)


def _fill_pixels(functional: FunctionalBlock, config: ModelConfig,
                 reuse: bool) -> int:
    """Kept feature-map pixels streamed into the banks over the block, with
    or without exploiting window overlap."""
    plan = functional.plan
    mask_levels = functional.fmap_mask.levels
    total = 0
    for l, shape in enumerate(config.level_shapes):
        half_w, half_h = config.bounded_ranges[l]
        mask = mask_levels[l]
        tracker = ReuseWindow()
        refs = plan.ref_pixel[:, l]
        for i in range(refs.shape[0]):
            rect = window_rect(refs[i, 0], refs[i, 1], half_w, half_h,
                               shape.height, shape.width)
            strips = tracker.advance(rect).fetched if reuse else [rect]
            for x_lo, x_hi, y_lo, y_hi in strips:
                total += int(mask[y_lo:y_hi + 1, x_lo:x_hi + 1].sum())
    return total


def _sampling_cycles(functional: FunctionalBlock, config: ModelConfig,
                     mode: str):
    """(base_cycles, stall_cycles, bank_histogram) of the sampling phase.

    Base cycles come from four-point batches; intra mode chunks each
    (query, level)'s kept points and pays conflict stalls per chunk, inter
    mode zips one point per level and is asserted conflict-free.
    """
    plan = functional.plan
    mask = functional.point_mask
    n, h, l_count, p_count = mask.shape
    histogram = np.zeros(NUM_BANKS, dtype=np.int64)
    in_range = plan.in_range

    if mode == "inter":
        banks_all = bank_for_pixel(
            np.arange(l_count)[None, None, :, None, None],
            plan.corner_x, plan.corner_y, config.num_levels)
    else:
        banks_all = bank_for_pixel_intra(plan.corner_x, plan.corner_y)
    np.add.at(histogram, banks_all[in_range & mask[..., None]], 1)

    base = 0
    stalls = 0
    addrs = plan.neighbor_flat
    if mode == "inter":
        kept_per_query = mask.reshape(n, -1).sum(axis=1)
        base = int(np.ceil(kept_per_query / SAMPLE_LANES).sum())
        # physically formed one-per-level batches, asserted conflict-free
        for i in range(n):
            queues = [np.argwhere(mask[i, :, l, :]) for l in range(l_count)]
            rounds = max((q.shape[0] for q in queues), default=0)
            for r in range(rounds):
                batch = []
                for l in range(l_count):
                    if r < queues[l].shape[0]:
                        j, p = queues[l][r]
                        ok = in_range[i, j, l, p]
                        corners = [
                            (int(plan.corner_x[i, j, l, p, c]),
                             int(plan.corner_y[i, j, l, p, c]),
                             int(addrs[i, j, l, p, c]))
                            for c in range(4) if ok[c]]
                        batch.append((l, corners))
                schedule_inter_level(batch, config.num_levels)
    else:
        for i in range(n):
            for l in range(l_count):
                kept = np.argwhere(mask[i, :, l, :])
                for start in range(0, kept.shape[0], SAMPLE_LANES):
                    chunk = kept[start:start + SAMPLE_LANES]
                    base += 1
                    batch = []
                    for j, p in chunk:
                        ok = in_range[i, j, l, p]
                        batch.append([
                            (int(plan.corner_x[i, j, l, p, c]),
                             int(plan.corner_y[i, j, l, p, c]),
                             int(addrs[i, j, l, p, c]))
                            for c in range(4) if ok[c]])
                    stalls += detect_conflicts_intra(batch)
    return base, stalls, tuple(int(v) for v in histogram)


def simulate_block(q, x, ref_points, weights, config: ModelConfig,
                   settings: SimSettings, fmap_mask: FmapMask | None = None,
                   block_index: int = 0, epsilon: float | None = None,
                   k: float | None = None) -> BlockResult:
    """Run one attention block and attribute cycles, traffic and energy.

    Functional outputs are produced by the same engine as the golden
    quantized model; masks and shapes are validated before any accounting.
    """
    if config.bounded_ranges is None:
        raise ValueError("the simulator requires config.bounded_ranges")
    mode = _effective_mode(settings, config)
    functional = run_functional_block(
        q, x, ref_points, weights, config, fmap_mask=fmap_mask,
        quantized=True, clamp=True, epsilon=epsilon, k=k,
        block_index=block_index)

    n, d = config.total_pixels, config.hidden_dim
    qb = config.quant_bits
    d_h = config.head_dim
    n_points = config.num_heads * config.points_per_query
    mask = functional.point_mask
    kept_samples = int(mask.sum())
    traffic = TrafficCounters()
    phases = {}

    # phase 1: probability MM + softmax unit, point mask updated on the fly
    mm1 = simulate_mm(n, d, n_points, qb)
    softmax_cycles = math.ceil(
        n * n_points / settings.softmax_elems_per_cycle)
    traffic.dram_read_weight_bits += mm1.weight_bits
    traffic.dram_read_activation_bits += mm1.activation_bits
    phases["probs_mask"] = _rooflined(
        mm1.cycles + softmax_cycles, mm1.weight_bits + mm1.activation_bits,
        settings)

    # phase 2: offset MM, pruned columns per query row
    kept_per_row = mask.reshape(n, -1).sum(axis=1)
    row_tiles = np.ceil(2 * kept_per_row / MM_TILE)
    mm2_cycles = int(math.ceil(d / MM_TILE) * row_tiles.sum())
    mm2_macs = int((d * 2 * kept_per_row).sum())
    w2_bits = d * 2 * n_points * qb
    a2_bits = n * d * qb
    traffic.dram_read_weight_bits += w2_bits
    traffic.dram_read_activation_bits += a2_bits
    traffic.sram_read_mask_bits += mask.size
    phases["offset_mm"] = _rooflined(mm2_cycles, w2_bits + a2_bits, settings)

    # phase 3: value MM under the previous block's feature-map mask
    flat_fmask = functional.fmap_mask.flat()
    mm3 = simulate_mm(n, d, d, qb, row_mask=flat_fmask)
    traffic.dram_read_weight_bits += mm3.weight_bits
    traffic.dram_read_activation_bits += mm3.activation_bits
    traffic.dram_write_value_bits += mm3.activation_bits
    traffic.sram_read_mask_bits += flat_fmask.size
    phases["value_mm"] = _rooflined(
        mm3.cycles, mm3.weight_bits + mm3.activation_bits * 2, settings)

    # phase 4: windowed fills, fused sampling + aggregation
    fill_px = _fill_pixels(functional, config, settings.reuse)
    fill_bits = fill_px * d * qb
    traffic.dram_read_fill_bits += fill_bits
    traffic.sram_write_fill_bits += fill_bits
    in_range_kept = functional.plan.in_range & mask[..., None]
    traffic.sram_read_bi_bits += int(in_range_kept.sum()) * d_h * qb
    traffic.sram_read_mask_bits += mask.size

    base, stalls, histogram = _sampling_cycles(functional, config, mode)
    if mode == "inter" and stalls:
        raise RuntimeError("inter-level mode produced conflict stalls")
    agg_cycles = 0
    if not settings.fusion:
        s_bits = kept_samples * d_h * qb
        traffic.dram_write_intermediate_bits += s_bits
        traffic.dram_read_intermediate_bits += s_bits
        traffic.sram_write_intermediate_bits += s_bits
        traffic.sram_read_intermediate_bits += s_bits
        agg_cycles = int(np.ceil(kept_per_row / SAMPLE_LANES).sum())
    out_bits = n * d * qb
    traffic.dram_write_output_bits += out_bits
    phase4_dram = (fill_bits + out_bits
                   + traffic.dram_write_intermediate_bits
                   + traffic.dram_read_intermediate_bits)
    phases["sampling_agg"] = _rooflined(
        base + stalls + agg_cycles, phase4_dram, settings)

    cycles = CycleReport(
        phases=phases,
        msgs_base_cycles=base,
        conflict_stall_cycles=stalls,
        aggregation_cycles=agg_cycles,
        softmax_cycles=softmax_cycles,
        bank_histogram=histogram,
        ba_multiplies=kept_samples * (3 + d_h),
        ba_adds=kept_samples * (7 + d_h),
        mm_macs=mm1.macs + mm2_macs + mm3.macs,
    )
    energy = energy_account(traffic, settings.dram_pj_per_bit,
                            settings.sram_read_pj_per_bit,
                            settings.sram_write_pj_per_bit)
    return BlockResult(functional, cycles, traffic, energy, mode)


def _storage_bits(config: ModelConfig):
    """Resident window storage under narrowed vs uniform ranges."""
    areas = [(2 * hw + 2) * (2 * hh + 2) for hw, hh in config.bounded_ranges]
    word = config.hidden_dim * config.quant_bits
    narrowed = sum(areas) * word
    uniform = len(areas) * max(areas) * word
    return narrowed, uniform


@dataclass(frozen=True)
class RunRecord:
    """Aggregated record of one simulated run (all blocks)."""

    label: str
    seed: int
    mode: str
    mode_effective: str
    fusion: bool
    reuse: bool
    epsilon: float
    k: float
    blocks: int
    total_cycles: int
    phase_cycles: dict
    msgs_base_cycles: int
    conflict_stall_cycles: int
    sampling_compute_cycles: int
    dram_read_bits: int
    dram_write_bits: int
    dram_fill_bits: int
    dram_intermediate_bits: int
    sram_read_bits: int
    sram_write_bits: int
    energy_pj: float
    dram_pj: float
    sram_read_pj: float
    sram_write_pj: float
    mm_macs: int
    ba_multiplies: int
    ba_adds: int
    kept_points: int
    total_points: int
    point_keep_ratio: float
    fmap_keep_ratio: float
    fmap_keep_per_level: tuple
    storage_bits_narrowed: int
    storage_bits_uniform: int
    output_hash: str
    bank_histogram: tuple

    def as_dict(self) -> dict:
        out = {}
        for name, val in vars(self).items():
            if isinstance(val, dict):
                for k2, v2 in val.items():
                    out[f"cycles_{k2}"] = v2
            elif isinstance(val, tuple):
                out[name] = ";".join(str(v) for v in val)
            else:
                out[name] = val
        return out


def run_pipeline(spec: WorkloadSpec, settings: SimSettings,
                 label: str = "run", epsilon: float | None = None,
                 k: float | None = None,
                 initial_fmap_mask: FmapMask | None = None) -> RunRecord:
    """Simulate spec.blocks chained attention blocks.

    Block t+1 consumes block t's output as both query and feature map, and
    runs under the feature-map mask block t generated. Block 0 runs under
    initial_fmap_mask when given (e.g. replayed from a mask file), else
    all-ones.
    """
    import hashlib

    config = spec.config
    workload = generate_workload(spec)
    q, x = workload.q, workload.x
    fmask = initial_fmap_mask if initial_fmap_mask is not None \
        else all_ones_mask(config)
    eps = config.point_prune_epsilon if epsilon is None else epsilon
    kk = config.fmap_prune_k if k is None else k

    totals = TrafficCounters()
    phase_cycles: dict[str, int] = {}
    total = dict(msgs=0, stalls=0, sampling=0, macs=0, mults=0, adds=0)
    point_kept = point_all = 0
    fmap_kept = fmap_all = 0
    per_level = np.zeros(config.num_levels)
    histogram = np.zeros(NUM_BANKS, dtype=np.int64)
    energy = dict(dram=0.0, sread=0.0, swrite=0.0)
    mode_eff = settings.mode
    output = None

    for t in range(spec.blocks):
        weights = workload.weights if t == 0 else block_weights(spec, t)
        block = simulate_block(q, x, workload.ref_points, weights, config,
                               settings, fmap_mask=fmask, block_index=t,
                               epsilon=eps, k=kk)
        mode_eff = block.mode_effective
        totals = totals.add(block.traffic)
        for name, val in block.cycles.phases.items():
            phase_cycles[name] = phase_cycles.get(name, 0) + val
        total["msgs"] += block.cycles.msgs_base_cycles
        total["stalls"] += block.cycles.conflict_stall_cycles
        total["sampling"] += block.cycles.sampling_compute_cycles
        total["macs"] += block.cycles.mm_macs
        total["mults"] += block.cycles.ba_multiplies
        total["adds"] += block.cycles.ba_adds
        point_kept += int(block.functional.point_mask.sum())
        point_all += block.functional.point_mask.size
        fmap_kept += block.functional.fmap_mask.kept_pixels
        fmap_all += config.total_pixels
        per_level += np.array(block.functional.fmap_mask.keep_ratios)
        histogram += np.array(block.cycles.bank_histogram)
        energy["dram"] += block.energy.dram_pj
        energy["sread"] += block.energy.sram_read_pj
        energy["swrite"] += block.energy.sram_write_pj
        output = block.functional.output
        fmask = block.functional.next_fmap_mask
        q = output
        x = output

    narrowed, uniform = _storage_bits(config)
    out_hash = hashlib.sha256(
        np.ascontiguousarray(output).tobytes()).hexdigest()[:16]
    return RunRecord(
        label=label,
        seed=spec.seed,
        mode=settings.mode,
        mode_effective=mode_eff,
        fusion=settings.fusion,
        reuse=settings.reuse,
        epsilon=eps,
        k=kk,
        blocks=spec.blocks,
        total_cycles=sum(phase_cycles.values()),
        phase_cycles=phase_cycles,
        msgs_base_cycles=total["msgs"],
        conflict_stall_cycles=total["stalls"],
        sampling_compute_cycles=total["sampling"],
        dram_read_bits=totals.dram_read_bits,
        dram_write_bits=totals.dram_write_bits,
        dram_fill_bits=totals.dram_read_fill_bits,
        dram_intermediate_bits=(totals.dram_read_intermediate_bits
                                + totals.dram_write_intermediate_bits),
        sram_read_bits=totals.sram_read_bits,
        sram_write_bits=totals.sram_write_bits,
        energy_pj=energy["dram"] + energy["sread"] + energy["swrite"],
        dram_pj=energy["dram"],
        sram_read_pj=energy["sread"],
        sram_write_pj=energy["swrite"],
        mm_macs=total["macs"],
        ba_multiplies=total["mults"],
        ba_adds=total["adds"],
        kept_points=point_kept,
        total_points=point_all,
        point_keep_ratio=point_kept / point_all,
        fmap_keep_ratio=fmap_kept / fmap_all,
        fmap_keep_per_level=tuple(float(v) / spec.blocks for v in per_level),
        storage_bits_narrowed=narrowed,
        storage_bits_uniform=uniform,
        output_hash=out_hash,
        bank_histogram=tuple(int(v) for v in histogram),
    )
