import json

import pytest

from deformsim.config import (config_hash, format_config_text,
                              parse_config_text)
from deformsim.experiments import run_experiment
from deformsim.reports import report_diff, write_bundle


SMALL = """
level_shapes = 6x6,6x6,6x6,6x6
hidden_dim = 8
heads = 2
points_per_level = 2
half_widths = 2,2,2,2
half_heights = 2,2,2,2
offset_scale = 4.0
blocks = 1
seed = 3
"""


@pytest.fixture(scope="module")
def small_values():
    return parse_config_text(SMALL)


class TestConfigText:
    def test_round_trip_is_canonical(self, small_values):
        text = format_config_text(small_values)
        assert parse_config_text(text) == small_values
        assert format_config_text(parse_config_text(text)) == text

    def test_defaults_applied(self):
        values = parse_config_text("")
        assert values["quant_bits"] == 12
        assert values["dram_pj_per_bit"] == 1.2

    def test_rejects_unknown_key(self):
        with pytest.raises(ValueError, match="unknown config key"):
            parse_config_text("frobnicate = 3")

    def test_rejects_bad_line(self):
        with pytest.raises(ValueError, match="line 1"):
            parse_config_text("no equals sign here")

    def test_comments_and_units_ignored(self):
        values = parse_config_text("seed = 9  # chosen by dice roll\n# comment")
        assert values["seed"] == 9

    def test_hash_detects_tampering(self, small_values):
        tampered = dict(small_values)
        tampered["seed"] = 4
        assert config_hash(small_values) != config_hash(tampered)


class TestBundles:
    def test_unknown_preset_lists_valid_ones(self, small_values):
        with pytest.raises(ValueError, match="parallelism-ablation"):
            run_experiment("warp-drive", small_values)

    def test_emission_is_byte_stable(self, small_values, tmp_path):
        bundle = run_experiment("reuse-ablation", small_values)
        again = run_experiment("reuse-ablation", small_values)
        assert bundle.to_csv_text() == again.to_csv_text()
        assert bundle.to_json_text() == again.to_json_text()
        files = write_bundle(bundle, str(tmp_path / "a"))
        files2 = write_bundle(again, str(tmp_path / "b"))
        assert files == files2

    def test_csv_leads_with_format_version(self, small_values):
        bundle = run_experiment("end-to-end", small_values)
        lines = bundle.to_csv_text().splitlines()
        assert lines[0] == "format_version,1"
        assert lines[1] == "preset,end-to-end"
        assert lines[2].startswith("config_hash,")

    def test_every_row_carries_config_hash(self, small_values):
        bundle = run_experiment("parallelism-ablation", small_values)
        lines = bundle.to_csv_text().splitlines()
        header_idx = lines.index("[runs]") + 1
        assert lines[header_idx].startswith("config_hash,")
        for line in lines[header_idx + 1:header_idx + 3]:
            assert line.startswith(bundle.hash + ",")
        ratio_header = lines.index("[ratios]") + 1
        assert lines[ratio_header].startswith("config_hash,")
        doc = json.loads(bundle.to_json_text())
        assert all(r["config_hash"] == bundle.hash for r in doc["runs"])
        assert all(r["config_hash"] == bundle.hash for r in doc["ratios"])

    def test_unwritable_path_names_the_path(self, small_values, tmp_path):
        bundle = run_experiment("end-to-end", small_values)
        blocker = tmp_path / "blocker"
        blocker.write_text("a file, not a directory")
        with pytest.raises(OSError, match="blocker"):
            write_bundle(bundle, str(blocker))

    def test_failing_run_aborts_bundle_naming_the_run(self, small_values):
        from unittest import mock
        with mock.patch("deformsim.experiments.run_pipeline",
                        side_effect=RuntimeError("boom")):
            with pytest.raises(RuntimeError, match="run 'intra'"):
                run_experiment("parallelism-ablation", small_values)

    def test_json_carries_config_echo(self, small_values):
        bundle = run_experiment("end-to-end", small_values)
        doc = json.loads(bundle.to_json_text())
        assert doc["format_version"] == 1
        assert doc["config"]["seed"] == 3
        assert parse_config_text(doc["config_text"])["seed"] == 3
        assert len(doc["runs"]) == 1

    def test_ratio_rows_recomputable(self, small_values):
        bundle = run_experiment("parallelism-ablation", small_values)
        by_label = {r.label: r for r in bundle.runs}
        for row in bundle.ratios:
            if row["metric"] == "sampling_compute_cycles":
                num = by_label[row["numerator"]].sampling_compute_cycles
                den = by_label[row["denominator"]].sampling_compute_cycles
                assert row["value"] == num / den

    def test_pruning_sweep_has_dense_baseline(self, small_values):
        bundle = run_experiment("pruning-sweep", small_values)
        labels = [r.label for r in bundle.runs]
        assert "eps0.0_k0.0" in labels
        dense = next(r for r in bundle.runs if r.label == "eps0.0_k0.0")
        assert dense.point_keep_ratio == 1.0
        assert any(row["name"] == "cycles_vs_dense" for row in bundle.ratios)

    def test_empty_runs_yield_header_only_tables(self):
        from deformsim.reports import ReportBundle
        bundle = ReportBundle(preset="end-to-end",
                              config_values=parse_config_text(""),
                              runs=(), ratios=())
        lines = bundle.to_csv_text().splitlines()
        assert "[runs]" in lines
        assert lines[-1] == "config_hash,name,metric,numerator,denominator,value"


class TestDiff:
    def test_identical_reports(self, small_values):
        bundle = run_experiment("end-to-end", small_values)
        out = report_diff(bundle.to_csv_text(), bundle.to_csv_text())
        assert out["identical"]
        out = report_diff(bundle.to_json_text(), bundle.to_json_text())
        assert out["identical"]

    def test_differing_reports_name_the_field(self, small_values):
        bundle = run_experiment("end-to-end", small_values)
        other_values = dict(small_values)
        other_values["seed"] = 4
        other = run_experiment("end-to-end", other_values)
        out = report_diff(bundle.to_json_text(), other.to_json_text())
        assert not out["identical"]
        assert any("seed" in d for d in out["differences"])
        out_csv = report_diff(bundle.to_csv_text(), other.to_csv_text())
        assert not out_csv["identical"]
        assert out_csv["differences"]
