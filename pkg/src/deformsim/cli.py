"""Command-line client of the simulation service.

The CLI never runs the core directly: it builds request payloads, posts them
to the service (in-process ASGI transport by default, --server for a remote
instance) and writes the returned artifacts to disk.
"""

from __future__ import annotations

import asyncio
import json
import os

import click
import httpx

from .config import CONFIG_FIELDS, format_config_text, parse_config_text


class ServiceClient:
    """Minimal HTTP client; in-process unless a server URL is given."""

    def __init__(self, server: str | None = None):
        self.server = server

    def request(self, method: str, path: str, payload=None) -> dict:
        if self.server:
            with httpx.Client(base_url=self.server, timeout=600.0) as client:
                response = client.request(method, path, json=payload)
        else:
            from .service.app import create_app

            async def _go():
                transport = httpx.ASGITransport(app=create_app())
                async with httpx.AsyncClient(
                        transport=transport, base_url="http://deformsim",
                        timeout=600.0) as client:
                    return await client.request(method, path, json=payload)

            response = asyncio.run(_go())
        if response.status_code != 200:
            try:
                detail = response.json().get("detail", response.text)
            except ValueError:
                detail = response.text
            raise click.ClickException(
                f"{method} {path} failed ({response.status_code}): {detail}")
        return response.json()


def _load_config(config_path: str | None, **overrides) -> dict:
    if config_path:
        with open(config_path) as f:
            values = parse_config_text(f.read())
    else:
        values = parse_config_text("")
    for key, val in overrides.items():
        if val is not None:
            values[key] = val
    return values


def _config_payload(values: dict) -> dict:
    payload = dict(values)
    payload["level_shapes"] = [list(s) for s in values["level_shapes"]]
    return payload


def _write_files(out_dir: str, files: dict):
    os.makedirs(out_dir, exist_ok=True)
    for name, text in files.items():
        path = os.path.join(out_dir, name)
        with open(path, "w") as f:
            f.write(text)
        click.echo(f"wrote {path}")


_onoff = click.Choice(["on", "off"])


def _flag(value: str | None) -> bool | None:
    return None if value is None else value == "on"


def _override_options(fn):
    fn = click.option("--server", default=None,
                      help="Remote service URL; default runs in-process.")(fn)
    fn = click.option("--out", default="reports", show_default=True,
                      help="Output directory.")(fn)
    fn = click.option("--k", type=float, default=None,
                      help="Feature-map prune threshold factor.")(fn)
    fn = click.option("--epsilon", type=float, default=None,
                      help="Point prune probability threshold.")(fn)
    fn = click.option("--reuse", type=_onoff, default=None)(fn)
    fn = click.option("--fusion", type=_onoff, default=None)(fn)
    fn = click.option("--mode", type=click.Choice(["intra", "inter"]),
                      default=None)(fn)
    fn = click.option("--seed", type=int, default=None)(fn)
    return fn


def _common_options(fn):
    fn = _override_options(fn)
    fn = click.option("--config", "config_path", default=None,
                      type=click.Path(exists=True),
                      help="Flat key = value config file.")(fn)
    return fn


@click.group()
def main():
    """Deformable-attention accelerator simulation harness."""


@main.command()
@click.argument("preset")
@_common_options
def run(preset, config_path, seed, mode, fusion, reuse, epsilon, k, out,
        server):
    """Run an experiment preset and write its report files."""
    values = _load_config(
        config_path, seed=seed, mode=mode, fusion=_flag(fusion),
        reuse=_flag(reuse), point_prune_epsilon=epsilon, fmap_prune_k=k)
    client = ServiceClient(server)
    result = client.request("POST", "/experiments/run",
                            {"preset": preset,
                             "config": _config_payload(values)})
    _write_files(out, result["files"])
    for ratio in result["ratios"]:
        click.echo(f"{ratio['name']}: {ratio['value']:.4f} "
                   f"({ratio['numerator']} / {ratio['denominator']})")


@main.command()
@click.argument("config_file", type=click.Path(exists=True))
@click.option("--fmap-mask", "fmap_mask_path", default=None,
              type=click.Path(exists=True),
              help="Replay a feature-map mask file into block 0.")
@_override_options
def simulate(config_file, fmap_mask_path, seed, mode, fusion, reuse, epsilon,
             k, out, server):
    """Simulate a single run described by CONFIG_FILE."""
    values = _load_config(
        config_file, seed=seed, mode=mode, fusion=_flag(fusion),
        reuse=_flag(reuse), point_prune_epsilon=epsilon, fmap_prune_k=k)
    payload = {"config": _config_payload(values)}
    if fmap_mask_path:
        with open(fmap_mask_path, "rb") as f:
            payload["fmap_mask_hex"] = f.read().hex()
    client = ServiceClient(server)
    result = client.request("POST", "/simulate", payload)
    record = result["record"]
    _write_files(out, {"simulate_record.json": json.dumps(
        {"format_version": 1, "config_hash": result["config_hash"],
         "record": record}, indent=2) + "\n"})
    click.echo(f"config_hash: {result['config_hash']}")
    for key in ("total_cycles", "sampling_compute_cycles",
                "conflict_stall_cycles", "dram_read_bits", "dram_write_bits",
                "energy_pj", "point_keep_ratio", "fmap_keep_ratio",
                "output_hash"):
        click.echo(f"{key}: {record[key]}")


@main.group()
def mask():
    """Generate or inspect pruning-mask files."""


@mask.command("gen")
@click.option("--block", type=int, default=0, show_default=True)
@_common_options
def mask_gen(block, config_path, seed, mode, fusion, reuse, epsilon, k, out,
             server):
    """Generate the masks one block produces and write them as .bin files."""
    values = _load_config(
        config_path, seed=seed, mode=mode, fusion=_flag(fusion),
        reuse=_flag(reuse), point_prune_epsilon=epsilon, fmap_prune_k=k)
    client = ServiceClient(server)
    result = client.request("POST", "/masks/generate",
                            {"config": _config_payload(values),
                             "block_index": block})
    os.makedirs(out, exist_ok=True)
    for name, key in ((f"fmap_mask_block{block}.bin", "fmap_mask_hex"),
                      (f"point_mask_block{block}.bin", "point_mask_hex")):
        path = os.path.join(out, name)
        with open(path, "wb") as f:
            f.write(bytes.fromhex(result[key]))
        click.echo(f"wrote {path}")
    click.echo(f"fmap keep ratios: {result['fmap_keep_ratios']}")
    click.echo(f"point keep ratio: {result['point_keep_ratio']:.4f}")


@mask.command("dump")
@click.argument("mask_file", type=click.Path(exists=True))
@click.option("--server", default=None)
def mask_dump(mask_file, server):
    """Print the header and keep statistics of a mask file."""
    with open(mask_file, "rb") as f:
        payload = f.read()
    client = ServiceClient(server)
    result = client.request("POST", "/masks/inspect",
                            {"mask_hex": payload.hex()})
    for key, val in result.items():
        if val is not None:
            click.echo(f"{key}: {val}")


@main.group()
def report():
    """Operations on emitted report files."""


@report.command("diff")
@click.argument("report_a", type=click.Path(exists=True))
@click.argument("report_b", type=click.Path(exists=True))
@click.option("--server", default=None)
def report_diff_cmd(report_a, report_b, server):
    """Compare two report files; exit status 1 if they differ."""
    with open(report_a) as f:
        text_a = f.read()
    with open(report_b) as f:
        text_b = f.read()
    client = ServiceClient(server)
    result = client.request("POST", "/reports/diff",
                            {"report_a": text_a, "report_b": text_b})
    if result["identical"]:
        click.echo("reports are identical")
        return
    for line in result["differences"]:
        click.echo(line)
    raise SystemExit(1)


@main.command("config-template")
def config_template():
    """Print a config file with every key at its default."""
    defaults = {key: spec[2] for key, spec in CONFIG_FIELDS.items()}
    click.echo(format_config_text(defaults), nl=False)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(host, port):
    """Start the simulation service."""
    import uvicorn

    uvicorn.run("deformsim.service.app:app", host=host, port=port)


if __name__ == "__main__":
    main()
