from __future__ import annotations

import csv
import json

import pytest

from tda_replicate import harness
from tda_replicate.errors import FitFailure, InvalidArgument
from tda_replicate.harness import (ExperimentConfig, ExperimentError, ExperimentResult, derive_seed, load_config,
                                   preset_config, run_experiment)
from tda_replicate.plotting import emit_plots
from tda_replicate.synthetic import ShapeSpec

TINY = {"preset": "desk", "shape": {"kind": "circle", "n": 120}, "replications": 2, "field_resolution": 30,
        "grid_sizes": [20, 30], "burn_ins": [3, 5], "seed": 7}


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("tiny")
    cfg = ExperimentConfig.from_dict(TINY)
    return cfg, run_experiment(cfg, out)


def test_bookkeeping(tiny_run):
    cfg, res = tiny_run
    assert len(res.records) == 2
    for rec in res.records:
        rep = res.out_dir / f"rep_{rec['index']:03d}"
        assert (rep / "diagram.csv").exists()
        assert sorted(rec["units"]["0"]["fits"]) == ["modified", "original"]
    assert len(res.fits(0, "modified")) == 2 and len(res.fits(0, "original")) == 2


def test_each_combination_once_per_replication(tiny_run):
    cfg, res = tiny_run
    seen = {}
    for row in res.gof_rows:
        if row["metric"] == "wasserstein":
            key = (row["replication"], row["variant"], row["grid"], row["burn_in"])
            seen[key] = seen.get(key, 0) + 1
    expected = {(str(i), v, str(g), str(b)) for i in range(2) for v in cfg.variants
                for g in cfg.grid_sizes for b in cfg.burn_ins}
    assert set(seen) == expected and set(seen.values()) == {1}


def test_resume_after_deleting_gof_tables(tiny_run):
    cfg, res = tiny_run
    manifest = (res.out_dir / "manifest.json").read_bytes()
    table = (res.out_dir / "gof.csv").read_bytes()
    for path in res.out_dir.rglob("gof.csv"):
        path.unlink()
    run_experiment(cfg, res.out_dir)
    assert (res.out_dir / "gof.csv").read_bytes() == table
    assert (res.out_dir / "manifest.json").read_bytes() == manifest


def test_fresh_rerun_is_byte_identical(tiny_run, tmp_path):
    cfg, res = tiny_run
    small = ExperimentConfig.from_dict({**TINY, "replications": 1, "grid_sizes": [20], "burn_ins": [3]})
    run_experiment(small, tmp_path / "a")
    run_experiment(small, tmp_path / "b")
    assert (tmp_path / "a" / "manifest.json").read_bytes() == (tmp_path / "b" / "manifest.json").read_bytes()


def test_loaded_result_matches(tiny_run):
    cfg, res = tiny_run
    back = ExperimentResult.load(res.out_dir)
    assert back.config.to_dict() == cfg.to_dict()
    assert back.gof_rows == res.gof_rows


def test_plots_and_tables(tiny_run, tmp_path):
    cfg, res = tiny_run
    manifest = emit_plots(res, tmp_path)
    for metric in ("bottleneck", "wasserstein"):
        assert (tmp_path / f"h0_{metric}.svg").exists()
        with open(tmp_path / f"h0_{metric}.csv") as fh:
            n_rows = sum(1 for _ in csv.DictReader(fh))
        assert n_rows == len([r for r in res.gof_rows if r["metric"] == metric])
    assert manifest["omitted"] == []
    assert json.loads((tmp_path / "plots_manifest.json").read_text()) == manifest


def test_missing_panels_are_listed(tiny_run, tmp_path):
    cfg, res = tiny_run
    partial = ExperimentResult(cfg, res.out_dir, res.records,
                               [r for r in res.gof_rows if not (r["grid"] == "30" and r["burn_in"] == "5")])
    manifest = emit_plots(partial, tmp_path)
    assert "H0 wasserstein grid 30 burn-in 5" in manifest["omitted"]


def test_failures_are_recorded_then_fatal_past_half(tmp_path, monkeypatch):
    real_fit = harness.fit_model
    calls = {"n": 0}

    def flaky(ppd, variant, K, config):
        calls["n"] += 1
        if calls["n"] == 1:
            raise FitFailure("constructed failure")
        return real_fit(ppd, variant, K, config)

    monkeypatch.setattr(harness, "fit_model", flaky)
    cfg = ExperimentConfig.from_dict({**TINY, "grid_sizes": [20], "burn_ins": [3]})
    res = run_experiment(cfg, tmp_path / "some")
    errors = [rec["errors"] for rec in res.records]
    assert "H0/original" in errors[0] and errors[1] == {}
    assert json.loads((tmp_path / "some" / "manifest.json").read_text())["failed_replications"] == [0]

    def broken(*args, **kwargs):
        raise FitFailure("always")

    monkeypatch.setattr(harness, "fit_model", broken)
    with pytest.raises(ExperimentError):
        run_experiment(cfg, tmp_path / "all")


def test_s3_requires_resolution_fifteen():
    assert preset_config("desk", "s3").field_resolution == 15
    assert preset_config("paper", "s3").field_resolution == 15
    with pytest.raises(InvalidArgument, match="15"):
        ExperimentConfig(shape=ShapeSpec("sphere", dim=3, n=50, center=(0, 0, 0, 0)), field_resolution=20,
                         homology_ranks=(0, 1, 2))


def test_ranks_follow_shape():
    assert preset_config("paper", "circle").homology_ranks == (0,)
    assert preset_config("paper", "s2").homology_ranks == (0, 1)
    assert preset_config("paper", "s3").homology_ranks == (0, 1, 2)
    with pytest.raises(InvalidArgument):
        ExperimentConfig(shape=ShapeSpec("circle", n=50), homology_ranks=(0, 2))


def test_presets_scale():
    paper, desk = preset_config("paper", "circle"), preset_config("desk", "circle")
    assert (paper.replications, paper.shape.n, paper.field_resolution) == (100, 1000, 100)
    assert (desk.replications, desk.shape.n, desk.field_resolution) == (10, 300, 50)
    assert preset_config("paper", "distinct").shape.n == 1300
    assert paper.filtration_eta == 0.1 and paper.fit.alpha_range == (0.0, 4.0)
    assert paper.fit.fallback_range == (0.0, 1.0)


def test_shipped_desk_config_matches_preset():
    cfg = load_config(__file__.rsplit("/tests/", 1)[0] + "/configs/desk.json")
    ref = preset_config("desk", "circle")
    assert cfg.to_dict() == {**ref.to_dict(), "seed": 42}


def test_seed_fan_out_is_stable():
    assert derive_seed(42, 0) == derive_seed(42, 0)
    assert derive_seed(42, 0) != derive_seed(42, 1) != derive_seed(43, 1)
    assert derive_seed(42, 3) == 2541583436


def test_thread_cap_parsing(monkeypatch):
    monkeypatch.setenv(harness.THREADS_ENV, "3")
    assert harness._threads() == 3
    monkeypatch.setenv(harness.THREADS_ENV, "zero")
    assert harness._threads() == 1
