"""End-to-end simulation experiments: sample, persist, fit, replicate, compare.

Every artifact of replication ``i`` lives under ``<out>/rep_<i>/``; anything
already on disk is reused, so an interrupted run resumes where it stopped and
deleting only the goodness-of-fit tables recomputes them from the stored
diagrams.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .cubical import DEFAULT_MAX_CELLS, persistence_by_rank
from .diagram import PersistenceDiagram, load_diagrams, save_diagram, to_ppd
from .errors import DegenerateNormalization, FitFailure, InvalidArgument, ResourceLimitError
from .fit import FitConfig, FittedModel, fit_model, summarize_estimates
from .gof import gof_report
from .kde import data_box, fit_kde, kde_grid
from .mcmc import McmcConfig, replicate
from .synthetic import PointCloud, ShapeSpec, sample_shape

log = logging.getLogger(__name__)

THREADS_ENV = "TDA_REPLICATE_THREADS"


class ExperimentError(RuntimeError):
    """More than half of the replications failed."""


SHAPES = {
    "circle": dict(kind="circle", radii=(1.0,)),
    "concentric": dict(kind="concentric", radii=(0.5, 1.2), fractions=(0.4, 0.6)),
    "distinct": dict(kind="distinct", radii=(0.5, 1.2), separation=1.5),
    "s2": dict(kind="sphere", radii=(1.0,), dim=2, center=(0.0, 0.0, 0.0)),
    "s3": dict(kind="sphere", radii=(1.0,), dim=3, center=(0.0, 0.0, 0.0, 0.0)),
}
_RANKS = {"circle": (0,), "concentric": (0,), "distinct": (0,), "s2": (0, 1), "s3": (0, 1, 2)}


def shape_key(shape: ShapeSpec) -> str:
    if shape.kind == "sphere":
        return f"s{shape.dim}"
    return shape.kind


@dataclass
class ExperimentConfig:
    shape: ShapeSpec
    name: str = "experiment"
    replications: int = 10
    seed: int = 0
    filtration_eta: float = 0.1
    field_resolution: int = 50
    field_padding: float = 0.0
    homology_ranks: tuple = (0,)
    K: int = 3
    variants: tuple = ("original", "modified")
    grid_sizes: tuple = (25, 50, 100)
    burn_ins: tuple = (25, 50, 100)
    proposal_cutoff: float = 1e-4
    fit: FitConfig = field(default_factory=FitConfig)
    wasserstein_p: float = 1.0
    nn_orders: tuple = (1, 2, 3)
    nn_space: str = "pd"
    max_cells: int = DEFAULT_MAX_CELLS
    preset: str | None = None

    def __post_init__(self):
        D = self.shape.ambient_dim
        if self.replications < 1:
            raise InvalidArgument("replications must be positive")
        if not self.homology_ranks or any(not 0 <= r <= D - 1 for r in self.homology_ranks):
            raise InvalidArgument(f"ranks {list(self.homology_ranks)} invalid for a {D}-dimensional field")
        if self.shape.kind == "sphere" and self.shape.dim == 3 and self.field_resolution != 15:
            raise InvalidArgument(f"the S3 experiment uses field resolution 15, got {self.field_resolution}")
        if self.filtration_eta <= 0 or self.field_resolution < 2:
            raise InvalidArgument("filtration_eta must be positive and field_resolution >= 2")
        for v in self.variants:
            if v not in ("original", "modified"):
                raise InvalidArgument(f"unknown variant {v!r}")
        if not self.grid_sizes or not self.burn_ins:
            raise InvalidArgument("need at least one grid size and one burn-in")

    def to_dict(self) -> dict:
        d = {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}
        d["shape"] = self.shape.to_dict()
        d["fit"] = self.fit.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        preset = d.pop("preset", None)
        base = {}
        key = d.pop("shape_key", None)
        if preset:
            base = preset_config(preset, key or _guess_key(d.get("shape", {}))).to_dict()
        shape = dict(base.get("shape", {}))
        shape.update(d.pop("shape", {}))
        fit = dict(base.get("fit", {}))
        fit.update(d.pop("fit", {}))
        merged = {**base, **d}
        merged.pop("shape", None)
        merged.pop("fit", None)
        merged = {k: (tuple(v) if isinstance(v, list) else v) for k, v in merged.items()}
        merged["preset"] = preset or merged.get("preset")
        return cls(shape=ShapeSpec.from_dict(shape), fit=FitConfig.from_dict(fit), **merged)


def _guess_key(shape: dict) -> str:
    if shape.get("kind") == "sphere":
        return f"s{shape.get('dim', 2)}"
    return shape.get("kind", "circle")


def preset_config(preset: str, shape: str = "circle") -> ExperimentConfig:
    """``paper``: the full-scale study; ``desk``: a minutes-scale version of it."""
    if shape not in SHAPES:
        raise InvalidArgument(f"unknown shape {shape!r}; choose from {sorted(SHAPES)}")
    spec = dict(SHAPES[shape])
    if preset == "paper":
        spec["n"] = 1300 if shape == "distinct" else 1000
        resolution = 15 if shape == "s3" else 100
        reps = 100
    elif preset == "desk":
        spec["n"] = 300
        resolution = {"s3": 15, "s2": 30}.get(shape, 50)
        reps = 10
    else:
        raise InvalidArgument(f"unknown preset {preset!r}; choose 'paper' or 'desk'")
    return ExperimentConfig(
        shape=ShapeSpec(**spec),
        name=f"{preset}-{shape}",
        replications=reps,
        field_resolution=resolution,
        homology_ranks=_RANKS[shape],
        preset=preset,
    )


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return ExperimentConfig.from_dict(json.load(fh))


def derive_seed(*parts) -> int:
    """Stable 32-bit seed from integer parts (master seed first)."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _persist_field(points: np.ndarray, cfg: ExperimentConfig):
    kde = fit_kde(points, cfg.filtration_eta)
    box = data_box(points, cfg.field_padding)
    return kde_grid(kde, box, cfg.field_resolution)


def _variant_index(v: str) -> int:
    return ("original", "modified").index(v)


def run_replication(cfg: ExperimentConfig, index: int, out_dir: Path) -> dict:
    """Run (or resume) replication ``index``; returns its manifest record."""
    rep_dir = out_dir / f"rep_{index:03d}"
    rep_dir.mkdir(parents=True, exist_ok=True)
    seed = derive_seed(cfg.seed, index)
    record = {"index": index, "seed": seed, "units": {}, "errors": {}}

    points_path = rep_dir / "points.csv"
    if points_path.exists():
        cloud = PointCloud.from_csv(points_path)
    else:
        cloud = sample_shape(replace(cfg.shape, seed=seed))
        cloud.to_csv(points_path)

    diag_path = rep_dir / "diagram.csv"
    if diag_path.exists():
        stored = load_diagrams(diag_path)
        diagrams = {r: stored.get(r, PersistenceDiagram(r, np.empty((0, 2)))) for r in cfg.homology_ranks}
    else:
        field_ = _persist_field(cloud.points, cfg)
        diagrams = persistence_by_rank(field_, cfg.homology_ranks, max_cells=cfg.max_cells)
        save_diagram([diagrams[r] for r in sorted(diagrams)], diag_path)

    gof_lines = []
    for rank in cfg.homology_ranks:
        pd = diagrams[rank]
        unit = {"n_points": len(pd), "fits": {}, "acceptance": {}}
        record["units"][str(rank)] = unit
        for variant in cfg.variants:
            try:
                model = _fit_unit(cfg, pd, rank, variant, rep_dir)
            except (FitFailure, DegenerateNormalization, InvalidArgument) as exc:
                record["errors"][f"H{rank}/{variant}"] = f"{type(exc).__name__}: {exc}"
                log.warning("replication %d H%d %s failed: %s", index, rank, variant, exc)
                continue
            unit["fits"][variant] = {
                "alpha": model.params.alpha,
                "theta": list(model.params.theta),
                "logpl": model.logpl,
                "aic": model.aic,
                "bic": model.bic,
                "alpha_range": list(model.alpha_range),
            }
            for grid in cfg.grid_sizes:
                for burn in cfg.burn_ins:
                    tag = f"h{rank}_{variant}_g{grid}_b{burn}"
                    sim_path = rep_dir / f"sim_{tag}.csv"
                    acc_path = rep_dir / f"sim_{tag}.json"
                    if sim_path.exists() and acc_path.exists():
                        sim = load_diagrams(sim_path).get(rank, PersistenceDiagram(rank, np.empty((0, 2))))
                        rates = json.loads(acc_path.read_text())["acceptance_rates"]
                    else:
                        mc = McmcConfig(grid_size=grid, burn_in=burn, replicates=1,
                                        seed=derive_seed(cfg.seed, index, rank, _variant_index(variant), grid, burn),
                                        cutoff=cfg.proposal_cutoff)
                        res = replicate(pd, model, mc)
                        sim, rates = res.diagrams[0], res.acceptance_rates
                        save_diagram(sim, sim_path)
                        _write_atomic(acc_path, json.dumps({"config": mc.to_dict(), "acceptance_rates": rates},
                                                           indent=2, sort_keys=True) + "\n")
                    unit["acceptance"][f"{variant}/g{grid}/b{burn}"] = float(np.mean(rates))
                    tags = {"shape": shape_key(cfg.shape), "rank": rank, "variant": variant,
                            "grid": grid, "burn_in": burn, "replication": index}
                    rep = gof_report([pd], [sim], tags, p=cfg.wasserstein_p, orders=cfg.nn_orders,
                                     space=cfg.nn_space)
                    gof_lines.append(rep.to_csv(header=False))
    gof_path = rep_dir / "gof.csv"
    _write_atomic(gof_path, _GOF_HEADER + "".join(gof_lines))
    return record


_GOF_HEADER = "replicate,metric,value,burn_in,grid,rank,replication,shape,variant\n"


def _fit_unit(cfg: ExperimentConfig, pd: PersistenceDiagram, rank: int, variant: str, rep_dir: Path) -> FittedModel:
    path = rep_dir / f"fit_h{rank}_{variant}.json"
    if path.exists():
        data = json.loads(path.read_text())
        if "error" in data:
            raise FitFailure(data["error"])
        return FittedModel.from_dict(data)
    try:
        model = fit_model(to_ppd(pd), variant, cfg.K, cfg.fit)
    except (FitFailure, DegenerateNormalization, InvalidArgument) as exc:
        _write_atomic(path, json.dumps({"error": f"{type(exc).__name__}: {exc}"}, indent=2) + "\n")
        raise
    _write_atomic(path, model.to_json() + "\n")
    return model


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    out_dir: Path
    records: list
    gof_rows: list  # dicts from the long-format GoF table

    def fits(self, rank: int, variant: str) -> list[FittedModel]:
        out = []
        for rec in self.records:
            path = self.out_dir / f"rep_{rec['index']:03d}" / f"fit_h{rank}_{variant}.json"
            if path.exists():
                data = json.loads(path.read_text())
                if "error" not in data:
                    out.append(FittedModel.from_dict(data))
        return out

    def metric_values(self, metric: str, **tags) -> list[float]:
        vals = []
        for row in self.gof_rows:
            if row["metric"] != metric:
                continue
            if all(str(row[k]) == str(v) for k, v in tags.items()):
                vals.append(float(row["value"]))
        return vals

    @classmethod
    def load(cls, out_dir) -> "ExperimentResult":
        out_dir = Path(out_dir)
        manifest = json.loads((out_dir / "manifest.json").read_text())
        cfg = ExperimentConfig.from_dict(manifest["config"])
        return cls(cfg, out_dir, manifest["replications"], _read_gof(out_dir / "gof.csv"))


def _read_gof(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _run_one(args):
    cfg, index, out_dir = args
    try:
        return run_replication(cfg, index, out_dir)
    except (ResourceLimitError, InvalidArgument, FitFailure, DegenerateNormalization) as exc:
        return {"index": index, "seed": derive_seed(cfg.seed, index), "units": {},
                "errors": {"pipeline": f"{type(exc).__name__}: {exc}"}}


def run_experiment(cfg: ExperimentConfig, out_dir) -> ExperimentResult:
    """Run every replication, aggregate the tables, and write ``manifest.json``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_atomic(out_dir / "config.json", json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    jobs = [(cfg, i, out_dir) for i in range(cfg.replications)]
    workers = min(_threads(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_one, jobs))
    else:
        records = [_run_one(j) for j in jobs]
    records.sort(key=lambda r: r["index"])

    failed = [r["index"] for r in records if r["errors"]]
    # full-table aggregation in replication order
    body = []
    for rec in records:
        path = out_dir / f"rep_{rec['index']:03d}" / "gof.csv"
        if path.exists():
            body.extend(path.read_text().splitlines(keepends=True)[1:])
    _write_atomic(out_dir / "gof.csv", _GOF_HEADER + "".join(body))

    result = ExperimentResult(cfg, out_dir, records, _read_gof(out_dir / "gof.csv"))
    summaries = {}
    for rank in cfg.homology_ranks:
        for variant in cfg.variants:
            models = result.fits(rank, variant)
            if not models:
                continue
            summ = summarize_estimates(models)
            key = f"h{rank}_{variant}"
            summaries[key] = summ.to_dict()
            _write_atomic(out_dir / f"estimates_{key}.csv", summ.to_csv())

    artifacts = {}
    for path in sorted(out_dir.rglob("*")):
        if path.is_file() and path.name != "manifest.json" and "plots" not in path.relative_to(out_dir).parts:
            artifacts[str(path.relative_to(out_dir))] = _sha256(path)
    manifest = {
        "config": cfg.to_dict(),
        "replications": records,
        "failed_replications": failed,
        "estimate_summaries": summaries,
        "artifacts": artifacts,
    }
    _write_atomic(out_dir / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    if len(failed) * 2 > len(records):
        raise ExperimentError(f"{len(failed)} of {len(records)} replications failed: {failed}")
    return result
