import hashlib
import json
import os
import re
import shutil

import pytest
from click.testing import CliRunner

from rodflow_report import cli
from rodflow_report.index import ReportError, RunIndex, read_csv_columns
from rodflow_report.render import render_run, render_sweep, write_summary


def run_by_mode(root, mode):
    return RunIndex.discover(str(root)).by_mode(mode)[0]


def test_empty_root_refused(tmp_path):
    with pytest.raises(ReportError, match="no run directories"):
        RunIndex.discover(str(tmp_path))
    out = tmp_path / "out"
    result = CliRunner().invoke(cli.main, [str(tmp_path), "--out", str(out)])
    assert result.exit_code != 0
    assert not out.exists()  # no partial outputs


def test_missing_and_corrupt_manifest_refused(tmp_path):
    rd = tmp_path / "sweep_de1-deadbeef-s0"
    rd.mkdir()
    (rd / "sweep.csv").write_text("n,rep,phi\n")
    with pytest.raises(ReportError, match="no manifest"):
        RunIndex.discover(str(tmp_path))
    (rd / "manifest.json").write_text("{not json")
    with pytest.raises(ReportError, match="corrupt manifest"):
        RunIndex.discover(str(tmp_path))
    (rd / "manifest.json").write_text(json.dumps({"config": {}}))
    with pytest.raises(ReportError, match="corrupt manifest"):
        RunIndex.discover(str(tmp_path))


def test_missing_columns_exit_nonzero(tmp_path, runs_root):
    src = run_by_mode(runs_root, "sweep_de1").path
    dst = tmp_path / os.path.basename(src)
    shutil.copytree(src, dst)
    cols = (dst / "sweep.csv").read_text().splitlines()
    cols[0] = cols[0].replace("phi", "renamed")
    (dst / "sweep.csv").write_text("\n".join(cols) + "\n")
    out = tmp_path / "out"
    result = CliRunner().invoke(cli.main, [str(tmp_path), "--out", str(out)])
    assert result.exit_code != 0


def test_sweep_fixture_renders_and_refits_slope(tmp_path, runs_root):
    """Acceptance: render_sweep succeeds, figures exist, slope refit agrees."""
    run = run_by_mode(runs_root, "sweep_de1")
    out = tmp_path / "out"
    out.mkdir()
    summary = render_sweep(run, str(out))
    for fig in summary["figures"]:
        assert (out / fig).exists()
    note = [n for n in summary["notes"] if n.startswith("refit slope")][0]
    refit, harness = (float(v) for v in re.findall(r"-?\d+\.\d+", note))
    assert -1.2 <= refit <= -0.8
    assert abs(refit - harness) <= 0.05
    assert summary["checks"]["phi2_slope_in_[-1.2,-0.8]"]
    assert summary["checks"]["phi2_slope_matches_harness_0.05"]


def test_cli_full_root(tmp_path, runs_root):
    out = tmp_path / "out"
    result = CliRunner().invoke(cli.main, [str(runs_root), "--out", str(out)])
    assert result.exit_code == 0, result.output
    summary = (out / "summary.md").read_text()
    # every figure referenced from the summary exists on disk
    refs = re.findall(r"\]\(([^)]+\.(?:png|svg))\)", summary)
    assert refs
    for ref in refs:
        assert (out / ref).exists(), ref
    # one section per run
    assert summary.count("## ") == len(RunIndex.discover(str(runs_root)).runs)


def test_sphere_preset_stress_flagged(tmp_path, runs_root):
    runs = RunIndex.discover(str(runs_root)).by_mode("fokker_planck")
    sphere = [r for r in runs if r.config["resistance"] == "sphere"][0]
    out = tmp_path / "out"
    out.mkdir()
    summary = render_run(sphere, str(out))
    assert summary["checks"]["stress_identically_zero"]
    assert any("identically zero" in n for n in summary["notes"])


def test_render_is_read_only_and_idempotent(tmp_path, runs_root):
    run = run_by_mode(runs_root, "sweep_de1")
    before = {
        f: hashlib.sha256(open(os.path.join(run.path, f), "rb").read()).hexdigest()
        for f in os.listdir(run.path)
    }
    out1, out2 = tmp_path / "a", tmp_path / "b"
    out1.mkdir(), out2.mkdir()
    render_sweep(run, str(out1))
    render_sweep(run, str(out2))
    after = {
        f: hashlib.sha256(open(os.path.join(run.path, f), "rb").read()).hexdigest()
        for f in os.listdir(run.path)
    }
    assert before == after  # run dir untouched
    for f in os.listdir(out1):
        b1 = (out1 / f).read_bytes()
        b2 = (out2 / f).read_bytes()
        assert b1 == b2, f"{f} differs between identical renders"


def test_small_de_and_compare_render(tmp_path, runs_root):
    out = tmp_path / "out"
    out.mkdir()
    summaries = []
    for mode in ("sweep_small_de", "compare_fields"):
        summary = render_run(run_by_mode(runs_root, mode), str(out))
        assert summary["figures"]
        for fig in summary["figures"]:
            assert (out / fig).exists()
        summaries.append(summary)
    path = write_summary(str(out), summaries)
    assert os.path.exists(path)


def test_unknown_mode_skipped(tmp_path, runs_root):
    run = run_by_mode(runs_root, "sweep_de1")
    run.manifest["config"]["mode"] = "simulate"
    summary = render_run(run, str(tmp_path))
    assert summary["figures"] == [] and summary["checks"] == {}
    assert any("no renderer" in n for n in summary["notes"])


def test_read_csv_columns_types(runs_root):
    run = run_by_mode(runs_root, "sweep_de1")
    cols = read_csv_columns(run.artifact("sweep.csv"), required=("n", "phi"))
    assert isinstance(cols["n"][0], float)
    assert isinstance(cols["config_hash"][0], str)
    with pytest.raises(ReportError, match="missing columns"):
        read_csv_columns(run.artifact("sweep.csv"), required=("does_not_exist",))
