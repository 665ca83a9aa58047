"""FastAPI service wrapping the simulator core.

Endpoints are synchronous (the work is CPU-bound); FastAPI dispatches them
to its threadpool. Every handler validates through the pydantic schemas and
maps core ValueErrors to 422 responses.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..config import config_hash
from ..experiments import PRESETS, build_model_config, build_workload_spec, \
    build_settings, run_experiment
from ..pipeline import run_functional_block
from ..pruning import mask_from_bytes, mask_to_bytes
from ..reports import report_diff
from ..simulator import run_pipeline
from ..workload import block_weights, generate_workload
from .schemas import (ExperimentRequest, ExperimentResponse, HealthResponse,
                      MaskGenerateRequest, MaskGenerateResponse,
                      MaskInspectRequest, MaskInspectResponse,
                      PresetsResponse, ReportDiffRequest, ReportDiffResponse,
                      SimulateRequest, SimulateResponse)

__all__ = ["create_app", "app"]


def create_app() -> FastAPI:
    app = FastAPI(title="deformsim service", version=__version__)

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", version=__version__)

    @app.get("/presets", response_model=PresetsResponse)
    def presets():
        return PresetsResponse(presets=list(PRESETS))

    @app.post("/simulate", response_model=SimulateResponse)
    def simulate(req: SimulateRequest):
        values = req.config.to_values()
        try:
            config = build_model_config(values)
            spec = build_workload_spec(values, config)
            settings = build_settings(values)
            mask = None
            if req.fmap_mask_hex is not None:
                kind, mask = mask_from_bytes(bytes.fromhex(req.fmap_mask_hex))
                if kind != "fmap":
                    raise ValueError("replayed mask must be a feature-map mask")
                got = [(a.shape[0], a.shape[1]) for a in mask.levels]
                want = [(s.height, s.width) for s in config.level_shapes]
                if got != want:
                    raise ValueError(
                        f"mask level shapes {got} do not match config {want}")
            record = run_pipeline(spec, settings, label=req.label,
                                  initial_fmap_mask=mask)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return SimulateResponse(config_hash=config_hash(values),
                                record=record.as_dict())

    @app.post("/experiments/run", response_model=ExperimentResponse)
    def experiments_run(req: ExperimentRequest):
        values = req.config.to_values()
        try:
            bundle = run_experiment(req.preset, values)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return ExperimentResponse(
            preset=bundle.preset,
            config_hash=bundle.hash,
            files={f"{bundle.preset}_report.csv": bundle.to_csv_text(),
                   f"{bundle.preset}_report.json": bundle.to_json_text()},
            runs=[r.as_dict() for r in bundle.runs],
            ratios=[dict(r) for r in bundle.ratios],
        )

    @app.post("/masks/generate", response_model=MaskGenerateResponse)
    def masks_generate(req: MaskGenerateRequest):
        if req.block_index < 0:
            raise HTTPException(status_code=422, detail="block_index < 0")
        values = req.config.to_values()
        try:
            config = build_model_config(values)
            spec = build_workload_spec(values, config)
            workload = generate_workload(spec)
            # chain blocks functionally up to the requested one
            q, x, fmask = workload.q, workload.x, None
            for t in range(req.block_index + 1):
                weights = (workload.weights if t == 0
                           else block_weights(spec, t))
                block = run_functional_block(
                    q, x, workload.ref_points, weights, config,
                    fmap_mask=fmask, block_index=t)
                q = x = block.output
                fmask = block.next_fmap_mask
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        fmap_bytes = mask_to_bytes(block.next_fmap_mask)
        point_bytes = mask_to_bytes(block.point_mask, config)
        return MaskGenerateResponse(
            fmap_mask_hex=fmap_bytes.hex(),
            point_mask_hex=point_bytes.hex(),
            fmap_keep_ratios=list(block.next_fmap_mask.keep_ratios),
            point_keep_ratio=float(block.point_mask.mean()),
        )

    @app.post("/masks/inspect", response_model=MaskInspectResponse)
    def masks_inspect(req: MaskInspectRequest):
        try:
            decoded = mask_from_bytes(bytes.fromhex(req.mask_hex))
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        if decoded[0] == "fmap":
            mask = decoded[1]
            return MaskInspectResponse(
                kind="fmap",
                block_index=mask.block_index,
                level_shapes=[(a.shape[0], a.shape[1]) for a in mask.levels],
                keep_ratio=float(mask.flat().mean()),
                keep_ratios_per_level=list(mask.keep_ratios),
            )
        _, arr, shapes = decoded
        return MaskInspectResponse(
            kind="point",
            level_shapes=[(s.height, s.width) for s in shapes],
            keep_ratio=float(arr.mean()),
            point_axes=list(arr.shape),
        )

    @app.post("/reports/diff", response_model=ReportDiffResponse)
    def reports_diff(req: ReportDiffRequest):
        result = report_diff(req.report_a, req.report_b)
        return ReportDiffResponse(**result)

    return app


app = create_app()
