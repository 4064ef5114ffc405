"""Box-plot figures and their underlying tables for an experiment run."""
from __future__ import annotations

import csv
import io
import json
import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .diagram import load_diagrams  # noqa: E402
from .harness import ExperimentResult  # noqa: E402

log = logging.getLogger(__name__)

_STYLE = {"svg.hashsalt": "tda-replicate", "svg.fonttype": "none", "figure.dpi": 100}


def _save(fig, path: Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None}, bbox_inches="tight")
    plt.close(fig)


def _panel_grid(cfg):
    return list(cfg.grid_sizes), list(cfg.burn_ins)


def _write_rows(path: Path, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue())


def emit_plots(result: ExperimentResult, out_dir) -> dict:
    """Write distance and nearest-neighbour box plots plus CSV tables.

    One distance figure per (rank, metric) with a panel per (grid, burn-in),
    and one nearest-neighbour figure per (rank, order). Panels without data are
    left blank and listed under ``omitted`` in ``plots_manifest.json``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = result.config
    grids, burns = _panel_grid(cfg)
    manifest = {"figures": [], "tables": [], "omitted": []}

    with plt.rc_context(_STYLE):
        for rank in cfg.homology_ranks:
            for metric in ("bottleneck", "wasserstein"):
                rows = []
                fig, axes = plt.subplots(len(grids), len(burns), squeeze=False, sharey=True,
                                         figsize=(3.2 * len(burns), 2.6 * len(grids)))
                for i, g in enumerate(grids):
                    for j, b in enumerate(burns):
                        ax = axes[i][j]
                        data, labels = [], []
                        for v in cfg.variants:
                            vals = result.metric_values(metric, rank=rank, variant=v, grid=g, burn_in=b)
                            rows.extend([[rank, v, g, b, k, val] for k, val in enumerate(vals)])
                            if vals:
                                data.append(vals)
                                labels.append(v)
                        ax.set_title(f"grid {g}, burn-in {b}", fontsize=9)
                        if data:
                            ax.boxplot(data, tick_labels=labels)
                        else:
                            manifest["omitted"].append(f"H{rank} {metric} grid {g} burn-in {b}")
                    axes[i][0].set_ylabel(metric)
                fig.suptitle(f"H{rank}: {metric} distance to the observed diagram")
                name = f"h{rank}_{metric}"
                _save(fig, out / f"{name}.svg")
                _write_rows(out / f"{name}.csv", ["rank", "variant", "grid", "burn_in", "replication", "value"], rows)
                manifest["figures"].append(f"{name}.svg")
                manifest["tables"].append({"file": f"{name}.csv", "rows": len(rows)})

            for k in cfg.nn_orders:
                rows = []
                fig, axes = plt.subplots(len(grids), len(burns), squeeze=False, sharey=True,
                                         figsize=(3.2 * len(burns), 2.6 * len(grids)))
                for i, g in enumerate(grids):
                    for j, b in enumerate(burns):
                        ax = axes[i][j]
                        data, labels = [], []
                        # the observed value is repeated under every variant; take one copy
                        real = []
                        for v in cfg.variants:
                            real = [x for x in result.metric_values(f"nn{k}_real", rank=rank, variant=v, grid=g,
                                                                    burn_in=b) if np.isfinite(x)]
                            if real:
                                break
                        if real:
                            data.append(real)
                            labels.append("observed")
                            rows.extend([[rank, "observed", g, b, n, x] for n, x in enumerate(real)])
                        for v in cfg.variants:
                            vals = [x for x in result.metric_values(f"nn{k}_sim", rank=rank, variant=v, grid=g,
                                                                    burn_in=b) if np.isfinite(x)]
                            rows.extend([[rank, v, g, b, n, x] for n, x in enumerate(vals)])
                            if vals:
                                data.append(vals)
                                labels.append(v)
                        ax.set_title(f"grid {g}, burn-in {b}", fontsize=9)
                        if data:
                            ax.boxplot(data, tick_labels=labels)
                        else:
                            manifest["omitted"].append(f"H{rank} nn{k} grid {g} burn-in {b}")
                    axes[i][0].set_ylabel(f"mean {k}-NN distance")
                fig.suptitle(f"H{rank}: order-{k} nearest-neighbour distance")
                name = f"h{rank}_nn{k}"
                _save(fig, out / f"{name}.svg")
                _write_rows(out / f"{name}.csv", ["rank", "source", "grid", "burn_in", "replication", "value"], rows)
                manifest["figures"].append(f"{name}.svg")
                manifest["tables"].append({"file": f"{name}.csv", "rows": len(rows)})

        diag_path = result.out_dir / "rep_000" / "diagram.csv"
        if diag_path.exists():
            name = "diagram_rep000.svg"
            _plot_diagram(load_diagrams(diag_path), out / name)
            manifest["figures"].append(name)

    (out / "plots_manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    log.info("wrote %d figures to %s", len(manifest["figures"]), out)
    return manifest


def _plot_diagram(diagrams: dict, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(4, 4))
    hi = 0.0
    for rank in sorted(diagrams):
        pts = diagrams[rank].pairs
        if len(pts):
            ax.scatter(pts[:, 0], pts[:, 1], s=8, label=f"H{rank}")
            hi = max(hi, float(pts.max()))
    ax.plot([0, hi], [0, hi], color="grey", lw=0.8)
    ax.set_xlabel("birth")
    ax.set_ylabel("death")
    ax.legend()
    _save(fig, path)
