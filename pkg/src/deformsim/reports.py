"""Report bundles: byte-stable comma-separated and hierarchical (JSON)
emissions, pairwise ratio tables, and report diffing.

Both formats lead with a format-version field, echo the full configuration
for provenance, and are deterministic: canonical field ordering plus fixed
decimal formatting, so re-emitting a bundle is byte-identical.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

from .config import config_hash, format_config_text
from .simulator import RunRecord

__all__ = ["ReportBundle", "build_ratios", "report_diff", "write_bundle"]

REPORT_FORMAT_VERSION = 1


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


@dataclass(frozen=True)
class ReportBundle:
    preset: str
    config_values: dict
    runs: tuple
    ratios: tuple

    @property
    def hash(self) -> str:
        return config_hash(self.config_values)

    def to_csv_text(self) -> str:
        lines = [f"format_version,{REPORT_FORMAT_VERSION}",
                 f"preset,{self.preset}",
                 f"config_hash,{self.hash}",
                 "",
                 "[runs]"]
        # every row carries the config hash so a tampered config is
        # detectable from any row in isolation
        rows = [{"config_hash": self.hash, **r.as_dict()} for r in self.runs]
        if rows:
            header = list(rows[0].keys())
            lines.append(",".join(header))
            for row in rows:
                lines.append(",".join(_fmt(row[k]) for k in header))
        lines.append("")
        lines.append("[ratios]")
        lines.append("config_hash,name,metric,numerator,denominator,value")
        for r in self.ratios:
            lines.append(
                f"{self.hash},{r['name']},{r['metric']},{r['numerator']},"
                f"{r['denominator']},{_fmt(r['value'])}")
        return "\n".join(lines) + "\n"

    def to_json_text(self) -> str:
        def clean(v):
            if isinstance(v, tuple):
                return [clean(x) for x in v]
            if isinstance(v, list):
                return [clean(x) for x in v]
            if isinstance(v, dict):
                return {k: clean(x) for k, x in v.items()}
            return v

        doc = {
            "format_version": REPORT_FORMAT_VERSION,
            "preset": self.preset,
            "config_hash": self.hash,
            "config": clean(self.config_values),
            "config_text": format_config_text(self.config_values),
            "runs": [{"config_hash": self.hash, **clean(r.as_dict())}
                     for r in self.runs],
            "ratios": [{"config_hash": self.hash, **clean(r)}
                       for r in self.ratios],
        }
        return json.dumps(doc, indent=2) + "\n"


_RATIO_METRICS = {
    "parallelism-ablation": [
        ("msgs_speedup", "sampling_compute_cycles", "intra", "inter"),
        ("total_speedup", "total_cycles", "intra", "inter"),
        ("energy_ratio", "energy_pj", "intra", "inter"),
    ],
    "fusion-ablation": [
        ("dram_bits_ratio", "dram_total_bits", "unfused", "fused"),
        ("energy_ratio", "energy_pj", "unfused", "fused"),
    ],
    "reuse-ablation": [
        ("fill_bits_ratio", "dram_fill_bits", "reuse-off", "reuse-on"),
        ("energy_ratio", "energy_pj", "reuse-off", "reuse-on"),
    ],
}


def _metric(record: RunRecord, name: str):
    if name == "dram_total_bits":
        return record.dram_read_bits + record.dram_write_bits
    return getattr(record, name)


def build_ratios(preset: str, runs) -> tuple:
    """Pairwise ratio rows for a preset; pruning sweeps compare every run
    against the dense (epsilon=0, k=0) run when present."""
    by_label = {r.label: r for r in runs}
    rows = []
    for name, metric, num, den in _RATIO_METRICS.get(preset, []):
        if num in by_label and den in by_label:
            denom = _metric(by_label[den], metric)
            value = _metric(by_label[num], metric) / denom if denom else 0.0
            rows.append({"name": name, "metric": metric, "numerator": num,
                         "denominator": den, "value": value})
    if preset == "pruning-sweep":
        dense = next((r for r in runs if r.epsilon == 0.0 and r.k == 0.0), None)
        if dense is not None:
            for r in runs:
                if r is dense:
                    continue
                rows.append({
                    "name": "cycles_vs_dense", "metric": "total_cycles",
                    "numerator": r.label, "denominator": dense.label,
                    "value": r.total_cycles / dense.total_cycles})
                rows.append({
                    "name": "energy_vs_dense", "metric": "energy_pj",
                    "numerator": r.label, "denominator": dense.label,
                    "value": r.energy_pj / dense.energy_pj})
    return tuple(rows)


def verify_ratios(bundle: ReportBundle):
    """Recompute every ratio row from the raw run records; emission refuses
    a bundle whose table does not reproduce."""
    by_label = {r.label: r for r in bundle.runs}
    for row in bundle.ratios:
        num = _metric(by_label[row["numerator"]], row["metric"])
        den = _metric(by_label[row["denominator"]], row["metric"])
        expect = num / den if den else 0.0
        if expect != row["value"]:
            raise AssertionError(
                f"ratio row {row['name']} not reproducible from raw rows")


def write_bundle(bundle: ReportBundle, out_dir: str) -> dict:
    """Emit <preset>_report.csv and .json under out_dir. Returns
    {filename: contents}. Paths that cannot be written produce a diagnostic
    naming the path."""
    verify_ratios(bundle)
    files = {
        f"{bundle.preset}_report.csv": bundle.to_csv_text(),
        f"{bundle.preset}_report.json": bundle.to_json_text(),
    }
    try:
        os.makedirs(out_dir, exist_ok=True)
        for name, text in files.items():
            with open(os.path.join(out_dir, name), "w") as f:
                f.write(text)
    except OSError as exc:
        raise OSError(f"cannot write report files under {out_dir!r}: {exc}") from exc
    return files


def report_diff(text_a: str, text_b: str) -> dict:
    """Structural diff of two emitted reports (either format).

    Returns {"identical": bool, "differences": [description, ...]}.
    """
    diffs = []
    if text_a.lstrip().startswith("{") and text_b.lstrip().startswith("{"):
        flat_a = _flatten(json.loads(text_a))
        flat_b = _flatten(json.loads(text_b))
        for key in sorted(set(flat_a) | set(flat_b)):
            if key not in flat_a:
                diffs.append(f"{key}: only in second report ({flat_b[key]!r})")
            elif key not in flat_b:
                diffs.append(f"{key}: only in first report ({flat_a[key]!r})")
            elif flat_a[key] != flat_b[key]:
                diffs.append(f"{key}: {flat_a[key]!r} != {flat_b[key]!r}")
    else:
        lines_a = text_a.splitlines()
        lines_b = text_b.splitlines()
        for i in range(max(len(lines_a), len(lines_b))):
            a = lines_a[i] if i < len(lines_a) else "<missing>"
            b = lines_b[i] if i < len(lines_b) else "<missing>"
            if a != b:
                diffs.append(f"line {i + 1}: {a!r} != {b!r}")
    return {"identical": not diffs, "differences": diffs[:200]}


def _flatten(doc, prefix=""):
    out = {}
    if isinstance(doc, dict):
        for k, v in doc.items():
            out.update(_flatten(v, f"{prefix}.{k}" if prefix else str(k)))
    elif isinstance(doc, list):
        for i, v in enumerate(doc):
            out.update(_flatten(v, f"{prefix}[{i}]"))
    else:
        out[prefix] = doc
    return out
