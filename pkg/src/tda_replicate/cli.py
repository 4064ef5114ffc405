"""Command-line entry point: ``tda-replicate <command> [options]``.

Exit status is 0 on success, 2 for invalid input or configuration and 3 when
a model fit fails.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .cubical import DEFAULT_MAX_CELLS, persistence_by_rank
from .diagram import load_diagram, save_diagram, to_ppd
from .errors import DegenerateNormalization, FitFailure, InvalidArgument, ResourceLimitError
from .fit import FitConfig, FittedModel, fit_model, select_k
from .gof import gof_report
from .harness import SHAPES, ExperimentConfig, ExperimentError, ExperimentResult, preset_config, run_experiment
from .kde import data_box, fit_kde, kde_grid
from .mcmc import McmcConfig, replicate
from .synthetic import PointCloud, ShapeSpec, sample_shape

log = logging.getLogger("tda_replicate")

EXIT_OK, EXIT_INVALID, EXIT_FIT = 0, 2, 3


def _load_json(path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidArgument(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise InvalidArgument(f"config {path} must hold a JSON object")
    return data


def cmd_sample(args) -> int:
    if args.config_data:
        spec = ShapeSpec.from_dict({**args.config_data, **({"seed": args.seed} if args.seed is not None else {})})
    else:
        base = dict(SHAPES[args.shape])
        if args.radii:
            base["radii"] = tuple(args.radii)
        spec = ShapeSpec(**base, n=args.n, seed=args.seed or 0)
    cloud = sample_shape(spec)
    cloud.to_csv(args.out)
    log.info("wrote %d points to %s", len(cloud.points), args.out)
    return EXIT_OK


def cmd_persist(args) -> int:
    cloud = PointCloud.from_csv(args.points)
    kde = fit_kde(cloud.points, args.eta)
    field_ = kde_grid(kde, data_box(cloud.points, args.padding), args.resolution)
    if args.field_out:
        field_.save(args.field_out)
    diagrams = persistence_by_rank(field_, args.ranks, max_cells=args.max_cells)
    save_diagram([diagrams[r] for r in sorted(diagrams)], args.out)
    for r in sorted(diagrams):
        log.info("H%d: %d pairs", r, len(diagrams[r]))
    return EXIT_OK


def _fit_config(args) -> FitConfig:
    data = dict(args.config_data.get("fit", {})) if args.config_data else {}
    if args.alpha_range:
        data["alpha_range"] = tuple(args.alpha_range)
    return FitConfig.from_dict(data) if data else FitConfig()


def cmd_fit(args) -> int:
    pd = load_diagram(args.diagram, args.rank)
    ppd = to_ppd(pd)
    config = _fit_config(args)
    if args.select_k:
        model = select_k(ppd, args.variant, args.select_k, config)
        for k, row in sorted(model.diagnostics["k_selection"].items()):
            log.info("K=%s: %s", k, row)
    else:
        model = fit_model(ppd, args.variant, args.K, config)
    Path(args.out).write_text(model.to_json() + "\n")
    p = model.params
    print(f"variant={p.variant} K={p.K} alpha={p.alpha:.6g} theta={[round(t, 6) for t in p.theta]} "
          f"logPL={model.logpl:.6g} AIC={model.aic:.6g} BIC={model.bic:.6g}")
    return EXIT_OK


def cmd_replicate(args) -> int:
    pd = load_diagram(args.diagram, args.rank)
    model = FittedModel.from_dict(_load_json(args.model))
    cfg = McmcConfig(grid_size=args.grid, burn_in=args.burn_in, replicates=args.replicates,
                     seed=args.seed or 0, cutoff=args.cutoff)
    res = replicate(pd, model, cfg)
    res.write(args.out)
    print(f"{len(res.diagrams)} replicates, mean acceptance {np.mean(res.acceptance_rates):.3f}")
    return EXIT_OK


def cmd_gof(args) -> int:
    real = load_diagram(args.real, args.rank)
    sims = [load_diagram(p, args.rank) for p in args.sim]
    rep = gof_report([real] * len(sims), sims, {"rank": args.rank}, p=args.p, orders=args.orders,
                     space=args.space)
    text = rep.to_csv()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_experiment(args) -> int:
    if args.config_data:
        cfg = ExperimentConfig.from_dict(args.config_data)
    else:
        cfg = preset_config(args.preset, args.shape)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.replications is not None:
        overrides["replications"] = args.replications
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    result = run_experiment(cfg, args.out)
    if not args.no_plots:
        from .plotting import emit_plots

        emit_plots(result, Path(args.out) / "plots")
    print(f"{cfg.name}: {cfg.replications} replications written to {args.out}")
    return EXIT_OK


def cmd_plot(args) -> int:
    from .plotting import emit_plots

    result = ExperimentResult.load(args.results)
    manifest = emit_plots(result, args.out or Path(args.results) / "plots")
    print(f"{len(manifest['figures'])} figures, {len(manifest['omitted'])} empty panels")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tda-replicate", description="Gibbs-model replication of persistence diagrams.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON file with options for this command")
        p.add_argument("--seed", type=int, default=None)
        p.set_defaults(func=func)
        return p

    p = add("sample", cmd_sample, "sample a synthetic point cloud")
    p.add_argument("--shape", choices=sorted(SHAPES), default="circle")
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--radii", type=float, nargs="+")
    p.add_argument("--out", required=True)

    p = add("persist", cmd_persist, "persistence diagrams of the KDE superlevel filtration")
    p.add_argument("--points", required=True)
    p.add_argument("--eta", type=float, default=0.1, help="KDE bandwidth of the filtration")
    p.add_argument("--resolution", type=int, default=50)
    p.add_argument("--padding", type=float, default=0.0)
    p.add_argument("--ranks", type=int, nargs="+", default=[0])
    p.add_argument("--max-cells", type=int, default=DEFAULT_MAX_CELLS)
    p.add_argument("--field-out")
    p.add_argument("--out", required=True)

    p = add("fit", cmd_fit, "fit a Gibbs model to one diagram rank")
    p.add_argument("--diagram", required=True)
    p.add_argument("--rank", type=int, default=0)
    p.add_argument("--variant", choices=("original", "modified"), default="modified")
    p.add_argument("--K", type=int, default=3)
    p.add_argument("--select-k", type=int, nargs="+")
    p.add_argument("--alpha-range", type=float, nargs=2)
    p.add_argument("--out", required=True)

    p = add("replicate", cmd_replicate, "simulate diagrams from a fitted model")
    p.add_argument("--diagram", required=True)
    p.add_argument("--rank", type=int, default=0)
    p.add_argument("--model", required=True)
    p.add_argument("--grid", type=int, default=100)
    p.add_argument("--burn-in", type=int, default=25)
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--cutoff", type=float, default=1e-4)
    p.add_argument("--out", required=True)

    p = add("gof", cmd_gof, "distances and NN summaries between observed and simulated diagrams")
    p.add_argument("--real", required=True)
    p.add_argument("--sim", nargs="+", required=True)
    p.add_argument("--rank", type=int, default=0)
    p.add_argument("--p", type=float, default=1.0)
    p.add_argument("--orders", type=int, nargs="+", default=[1, 2, 3])
    p.add_argument("--space", choices=("pd", "ppd"), default="pd")
    p.add_argument("--out")

    p = add("experiment", cmd_experiment, "run a full simulation study")
    p.add_argument("--preset", choices=("desk", "paper"), default="desk")
    p.add_argument("--shape", choices=sorted(SHAPES), default="circle")
    p.add_argument("--replications", type=int)
    p.add_argument("--no-plots", action="store_true")
    p.add_argument("--out", required=True)

    p = add("plot", cmd_plot, "render figures for a finished experiment")
    p.add_argument("--results", required=True)
    p.add_argument("--out")
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv) -> argparse.Namespace:
    args = parser.parse_args(argv)
    args.config_data = _load_json(args.config) if args.config else {}
    if args.config_data and args.command not in ("sample", "experiment"):
        # flat keys act as defaults; explicit flags still win
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        flat = {k.replace("-", "_"): v for k, v in args.config_data.items() if k.replace("-", "_") in known}
        sub.set_defaults(**flat)
        args = parser.parse_args(argv)
        args.config_data = _load_json(args.config)
    return args


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except InvalidArgument as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (FitFailure, DegenerateNormalization, ExperimentError) as exc:
        print(f"fit failed: {exc}", file=sys.stderr)
        return EXIT_FIT
    except (InvalidArgument, ResourceLimitError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
