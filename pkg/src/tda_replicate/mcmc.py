"""Metropolis-Hastings replication of projected diagrams.

Proposals come from the KDE of the projected diagram, discretized on a grid
and sampled by inverse transform; each sweep visits the points in index order
and replaces one point at a time.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .diagram import PersistenceDiagram, ProjectedDiagram, from_ppd, save_diagram, to_ppd
from .errors import EmptyProposal, InvalidArgument
from .fit import FittedModel
from .gibbs import KDE_FLOOR, ModelParams, QuadratureSpec, _log_numerator, _sorted_neighbours
from .kde import Kde
from .synthetic import make_rng

log = logging.getLogger(__name__)

PROPOSAL_CUTOFF = 1e-4


@dataclass(frozen=True)
class GridProposal:
    """Piecewise-constant proposal: cell masses on a regular grid over ``box``."""

    box: tuple
    grid_size: int
    probs: np.ndarray  # grid_size x grid_size, axis 0 = x1
    cutoff: float = PROPOSAL_CUTOFF

    @property
    def cell_shape(self) -> tuple[float, float]:
        (a, b), (c, d) = self.box
        return (b - a) / self.grid_size, (d - c) / self.grid_size

    @property
    def cell_area(self) -> float:
        w, h = self.cell_shape
        return w * h

    @property
    def cdf(self) -> np.ndarray:
        return np.cumsum(self.probs.ravel())

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        (a, _), (c, _) = self.box
        w, h = self.cell_shape
        return a + (np.arange(self.grid_size) + 0.5) * w, c + (np.arange(self.grid_size) + 0.5) * h

    def cell_of(self, x) -> tuple[int, int] | None:
        (a, b), (c, d) = self.box
        if not (a <= x[0] <= b and c <= x[1] <= d):
            return None
        w, h = self.cell_shape
        i = min(int((x[0] - a) / w), self.grid_size - 1)
        j = min(int((x[1] - c) / h), self.grid_size - 1)
        return i, j

    def density(self, x) -> float:
        """Proposal density at ``x`` (cell mass over cell area; zero outside the box)."""
        cell = self.cell_of(x)
        if cell is None:
            return 0.0
        return float(self.probs[cell]) / self.cell_area


def build_proposal(ppd: ProjectedDiagram, kde: Kde, grid_size: int, box=None,
                   cutoff: float = PROPOSAL_CUTOFF) -> GridProposal:
    """Evaluate ``kde`` at the centers of a ``grid_size x grid_size`` grid and normalize.

    Cells whose KDE value falls below ``cutoff`` get zero mass.  ``box``
    defaults to the data range widened by three bandwidths (``x2 >= 0``).
    """
    if grid_size < 2:
        raise InvalidArgument(f"grid_size must be >= 2, got {grid_size}")
    if box is None:
        pts = ppd.points
        lo = pts.min(axis=0) - 3.0 * kde.bandwidth
        hi = pts.max(axis=0) + 3.0 * kde.bandwidth
        lo[1] = max(lo[1], 0.0)
        box = ((lo[0], hi[0]), (lo[1], hi[1]))
    elif isinstance(box, QuadratureSpec):
        box = box.box
    box = tuple((float(a), float(b)) for a, b in box)
    if box[1][0] < 0:
        raise InvalidArgument("proposal box must satisfy x2 >= 0")
    prop = GridProposal(box, grid_size, np.zeros((grid_size, grid_size)), cutoff)
    cx, cy = prop.centers()
    g1, g2 = np.meshgrid(cx, cy, indexing="ij")
    vals = kde.evaluate(np.column_stack([g1.ravel(), g2.ravel()])).reshape(grid_size, grid_size)
    vals[vals < cutoff] = 0.0
    total = vals.sum()
    if total <= 0:
        raise EmptyProposal(f"every one of {grid_size}x{grid_size} proposal cells has KDE < {cutoff}")
    return GridProposal(box, grid_size, vals / total, cutoff)


def sample_proposal(proposal: GridProposal, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draw of a cell, then a uniform position inside it."""
    cdf = proposal.cdf
    u = rng.random() * cdf[-1]
    flat = min(int(np.searchsorted(cdf, u, side="right")), cdf.size - 1)
    while proposal.probs.ravel()[flat] == 0.0:  # guards u landing exactly on a flat CDF segment
        flat += 1
    i, j = divmod(flat, proposal.grid_size)
    (a, _), (c, _) = proposal.box
    w, h = proposal.cell_shape
    jitter = rng.random(2)
    return np.array([a + (i + jitter[0]) * w, max(c + (j + jitter[1]) * h, 0.0)])


def mh_ratio(log_f_current: float, log_f_proposed: float, q_current: float, q_proposed: float) -> float:
    """``min(1, f(x*) q(x) / (f(x) q(x*)))``, with 1 when the denominator vanishes."""
    if q_proposed <= 0 or log_f_current == -math.inf:
        log.debug("MH denominator vanished; accepting by convention")
        return 1.0
    if q_current <= 0:
        return 0.0
    r = log_f_proposed - log_f_current + math.log(q_current) - math.log(q_proposed)
    return 1.0 if r >= 0 else math.exp(r)


def _log_target(x, neighbours: np.ndarray, params: ModelParams, kde: Kde) -> float:
    d = np.sqrt(((neighbours - x) ** 2).sum(axis=1))
    log_kde = math.log(max(float(kde.evaluate(x[None, :])[0]), KDE_FLOOR))
    return float(_log_numerator(float(np.dot(params.theta, d)), log_kde, params.alpha, params.variant))


def acceptance_prob(x, x_star, context, model: FittedModel | ModelParams, proposal: GridProposal,
                    kde: Kde, renormalize_neighbors: bool | None = None) -> float:
    """Acceptance probability for replacing ``x`` by ``x_star`` given the other points.

    Both conditionals share the normalizing constant, so only their
    numerators enter.  By default both are evaluated against the K nearest
    neighbours of ``x``.
    """
    params = model.params if isinstance(model, FittedModel) else model
    if renormalize_neighbors is None:
        renormalize_neighbors = getattr(model, "renormalize_neighbors", False)
    x = np.asarray(x, dtype=float)
    x_star = np.asarray(x_star, dtype=float)
    ctx = np.atleast_2d(np.asarray(context, dtype=float))
    if len(ctx) < params.K:
        raise InvalidArgument(f"context has {len(ctx)} points, need at least K={params.K}")
    if np.array_equal(x, x_star):
        return 1.0
    nb_idx, _ = _sorted_neighbours(x, ctx, params.K)
    nb_x = ctx[nb_idx]
    if renormalize_neighbors:
        nb_star = ctx[_sorted_neighbours(x_star, ctx, params.K)[0]]
    else:
        nb_star = nb_x
    lf_x = _log_target(x, nb_x, params, kde)
    lf_star = _log_target(x_star, nb_star, params, kde)
    return mh_ratio(lf_x, lf_star, proposal.density(x), proposal.density(x_star))


@dataclass
class SweepStats:
    proposals: int = 0
    accepted: int = 0

    @property
    def rate(self) -> float:
        return self.accepted / self.proposals if self.proposals else 0.0


def mcmc_sweep(ppd: ProjectedDiagram, model: FittedModel, proposal: GridProposal, kde: Kde,
               rng: np.random.Generator, acceptance: Callable | None = None) -> tuple[ProjectedDiagram, SweepStats]:
    """One pass over the points in index order, each proposed once and accepted with MH probability."""
    acceptance = acceptance or acceptance_prob
    pts = ppd.points.copy()
    N = len(pts)
    if N <= model.params.K:
        raise InvalidArgument(f"need more points than neighbours: N={N}, K={model.params.K}")
    stats = SweepStats()
    mask = np.ones(N, dtype=bool)
    for k in range(N):
        x_star = sample_proposal(proposal, rng)
        mask[k] = False
        rho = acceptance(pts[k], x_star, pts[mask], model, proposal, kde)
        mask[k] = True
        u = rng.random()
        stats.proposals += 1
        if u < rho:
            pts[k] = x_star
            stats.accepted += 1
    return ppd.with_points(pts), stats


@dataclass
class McmcConfig:
    grid_size: int = 100
    burn_in: int = 25
    replicates: int = 1
    seed: int = 0
    cutoff: float = PROPOSAL_CUTOFF
    # rebuild the proposal from the current state after every sweep
    rebuild_proposal: bool = False

    def __post_init__(self):
        if self.grid_size < 2 or self.burn_in < 1 or self.replicates < 1:
            raise InvalidArgument(f"invalid MCMC config {self}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ReplicateResult:
    diagrams: list
    acceptance_rates: list = field(default_factory=list)
    config: McmcConfig | None = None

    def write(self, out_dir, prefix: str = "replicate") -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        names = []
        for b, pd in enumerate(self.diagrams):
            name = f"{prefix}_{b:03d}.csv"
            save_diagram(pd, out / name)
            names.append(name)
        manifest = {
            "config": self.config.to_dict() if self.config else None,
            "files": names,
            "acceptance_rates": self.acceptance_rates,
        }
        (out / f"{prefix}_manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def replicate(pd: PersistenceDiagram, model: FittedModel, config: McmcConfig,
              acceptance: Callable | None = None) -> ReplicateResult:
    """Run the chain from the observed diagram and keep the state every ``burn_in`` sweeps."""
    ppd = to_ppd(pd)
    if len(ppd) != model.n_points:
        raise InvalidArgument(f"model was fitted on {model.n_points} points, diagram has {len(ppd)}")
    kde = model.kde_for(ppd)
    proposal = build_proposal(ppd, kde, config.grid_size, box=model.quad, cutoff=config.cutoff)
    rng = make_rng(config.seed)
    state = ppd
    out, rates = [], []
    for _ in range(config.replicates):
        for _ in range(config.burn_in):
            state, stats = mcmc_sweep(state, model, proposal, kde, rng, acceptance)
            rates.append(stats.rate)
            if config.rebuild_proposal:
                proposal = build_proposal(state, kde, config.grid_size, box=model.quad, cutoff=config.cutoff)
        out.append(from_ppd(state))
    return ReplicateResult(out, rates, config)


def independence_chain(log_f: Sequence[float], q: Sequence[float], n_steps: int, seed: int = 0,
                       start: int = 0) -> np.ndarray:
    """Discrete-state independence sampler built on :func:`mh_ratio`; returns visit counts."""
    log_f = np.asarray(log_f, dtype=float)
    q = np.asarray(q, dtype=float)
    q = q / q.sum()
    rng = make_rng(seed)
    cdf = np.cumsum(q)
    counts = np.zeros(len(q), dtype=np.int64)
    state = start
    for _ in range(n_steps):
        prop = min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), len(q) - 1)
        rho = mh_ratio(log_f[state], log_f[prop], q[state], q[prop])
        if rng.random() < rho:
            state = prop
        counts[state] += 1
    return counts
