"""Gibbs point-process models for persistence diagrams of KDE superlevel filtrations."""
from __future__ import annotations

from .cubical import cubical_persistence, h0_superlevel, persistence_by_rank
from .diagram import (PersistenceDiagram, ProjectedDiagram, from_ppd, load_diagram, load_diagrams,
                      save_diagram, to_ppd)
from .errors import (DegenerateNormalization, DiagramParseError, DivergingEstimate, EmptyProposal, FitFailure,
                     InvalidArgument, ResourceLimitError)
from .fit import FitConfig, FittedModel, fit_model, select_k, summarize_estimates
from .gibbs import ModelParams, QuadratureSpec, conditional_density, log_pseudolikelihood
from .gof import bottleneck, gof_report, nn_stats, wasserstein
from .harness import ExperimentConfig, preset_config, run_experiment
from .kde import Kde, ScalarField, data_box, fit_kde, kde_eval, kde_grid
from .mcmc import McmcConfig, build_proposal, mcmc_sweep, replicate
from .synthetic import PointCloud, ShapeSpec, sample_circle, sample_shape, sample_sphere, sample_two_circles

__version__ = "0.1.0"

__all__ = [
    "bottleneck", "build_proposal", "conditional_density", "cubical_persistence", "data_box",
    "DegenerateNormalization", "DiagramParseError", "DivergingEstimate", "EmptyProposal", "ExperimentConfig",
    "fit_kde", "fit_model", "FitConfig", "FitFailure", "FittedModel", "from_ppd", "gof_report",
    "h0_superlevel", "InvalidArgument", "Kde", "kde_eval", "kde_grid", "load_diagram", "load_diagrams",
    "log_pseudolikelihood", "mcmc_sweep", "McmcConfig", "ModelParams", "nn_stats", "persistence_by_rank",
    "PersistenceDiagram", "PointCloud", "preset_config", "ProjectedDiagram", "QuadratureSpec", "replicate",
    "ResourceLimitError", "run_experiment", "sample_circle", "sample_shape", "sample_sphere",
    "sample_two_circles", "save_diagram", "ScalarField", "select_k", "ShapeSpec", "summarize_estimates",
    "to_ppd", "wasserstein",
]
