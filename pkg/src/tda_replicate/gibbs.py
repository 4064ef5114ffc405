"""Nearest-neighbour Gibbs model on projected diagrams.

Two variants share the same K-nearest-neighbour energy
``E(x) = sum_k theta_k * ||x - nn_k(x)||``:

* ``original``: ``f(x) ~ KDE(x)**alpha * exp(-E(x))``
* ``modified``: ``f(x) ~ exp(-E(x) * KDE(x)**alpha)``

Each conditional is normalized by trapezoidal quadrature over a box in R x R+.
By default the integrand keeps the neighbours of ``x`` fixed while ``z`` moves
(``renormalize_neighbors=False``); with the switch on, ``z`` uses its own K
nearest points of the context.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from .diagram import ProjectedDiagram
from .errors import DegenerateNormalization, InvalidArgument
from .kde import Kde

VARIANTS = ("original", "modified")
KDE_FLOOR = 1e-300
LOG_Z_FLOOR = math.log(1e-300)


@dataclass(frozen=True)
class ModelParams:
    variant: str
    K: int
    theta: tuple
    alpha: float = 0.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InvalidArgument(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.K < 1:
            raise InvalidArgument(f"cluster size K must be >= 1, got {self.K}")
        theta = tuple(float(t) for t in np.atleast_1d(self.theta))
        if len(theta) != self.K:
            raise InvalidArgument(f"theta has {len(theta)} entries, K={self.K}")
        if not self.alpha >= 0:
            raise InvalidArgument(f"alpha must be nonnegative, got {self.alpha}")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "alpha", float(self.alpha))

    def to_dict(self) -> dict:
        return {"variant": self.variant, "K": self.K, "theta": list(self.theta), "alpha": self.alpha}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        return cls(d["variant"], int(d["K"]), tuple(d["theta"]), float(d["alpha"]))


@dataclass(frozen=True)
class QuadratureSpec:
    box: tuple
    nodes: tuple = (64, 64)

    def __post_init__(self):
        box = tuple((float(lo), float(hi)) for lo, hi in self.box)
        if len(box) != 2 or any(not lo < hi for lo, hi in box):
            raise InvalidArgument(f"quadrature box must be two nondegenerate intervals, got {self.box}")
        if box[1][0] < 0:
            raise InvalidArgument("quadrature box must satisfy x2 >= 0")
        nodes = tuple(int(n) for n in self.nodes)
        if len(nodes) != 2 or min(nodes) < 8:
            raise InvalidArgument(f"need at least 8 nodes per axis, got {self.nodes}")
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "nodes", nodes)

    @property
    def area(self) -> float:
        (a, b), (c, d) = self.box
        return (b - a) * (d - c)

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        return tuple(np.linspace(lo, hi, n) for (lo, hi), n in zip(self.box, self.nodes))

    def nodes_and_weights(self) -> tuple[np.ndarray, np.ndarray]:
        """Tensor-product trapezoid nodes (``M x 2``) and weights (``M``)."""
        ws = []
        for (lo, hi), n in zip(self.box, self.nodes):
            w = np.full(n, (hi - lo) / (n - 1))
            w[[0, -1]] *= 0.5
            ws.append(w)
        a1, a2 = self.axes()
        g1, g2 = np.meshgrid(a1, a2, indexing="ij")
        return np.column_stack([g1.ravel(), g2.ravel()]), np.outer(ws[0], ws[1]).ravel()

    def to_dict(self) -> dict:
        return {"box": [list(b) for b in self.box], "nodes": list(self.nodes)}

    @classmethod
    def from_dict(cls, d: dict) -> "QuadratureSpec":
        return cls(tuple(tuple(b) for b in d["box"]), tuple(d["nodes"]))


def default_quadrature(ppd: ProjectedDiagram, kde: Kde, pad: float = 3.0, nodes=(64, 64)) -> QuadratureSpec:
    """Data range of each axis widened by ``pad`` bandwidths, clipped at ``x2 = 0``."""
    pts = ppd.points
    lo = pts.min(axis=0) - pad * kde.bandwidth
    hi = pts.max(axis=0) + pad * kde.bandwidth
    lo[1] = max(lo[1], 0.0)
    return QuadratureSpec(((lo[0], hi[0]), (lo[1], hi[1])), nodes)


def _sorted_neighbours(x: np.ndarray, pts: np.ndarray, K: int) -> tuple[np.ndarray, np.ndarray]:
    d = np.sqrt(((pts - x) ** 2).sum(axis=1))
    order = np.lexsort((np.arange(len(d)), d))[:K]
    return order, d[order]


def knn_indices(points: np.ndarray, K: int) -> tuple[np.ndarray, np.ndarray]:
    """Indices and distances of each point's K nearest other points (``N x K``)."""
    pts = np.asarray(points, dtype=float)
    N = len(pts)
    if N <= K:
        raise InvalidArgument(f"need more points than neighbours: N={N}, K={K}")
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=2))
    np.fill_diagonal(dist, np.inf)
    idx = np.argsort(dist, axis=1, kind="stable")[:, :K]
    return idx, np.take_along_axis(dist, idx, axis=1)


def knn_distances(ppd, K: int) -> np.ndarray:
    """Row ``i`` holds the distances from point ``i`` to its 1st..Kth nearest neighbour.

    Column sums are the total k-th nearest-neighbour lengths of the configuration.
    """
    pts = ppd.points if isinstance(ppd, ProjectedDiagram) else ppd
    return knn_indices(pts, K)[1]


def _kde_pow(kde_value, alpha: float):
    v = np.maximum(kde_value, KDE_FLOOR)
    return np.exp(alpha * np.log(v))


def local_energy(x, neighbors, params: ModelParams, kde: Kde | None = None, kde_value: float | None = None) -> float:
    """Energy of ``x`` against its K sorted neighbours; the modified variant scales by KDE(x)**alpha."""
    x = np.asarray(x, dtype=float)
    nb = np.atleast_2d(np.asarray(neighbors, dtype=float))
    if len(nb) != params.K:
        raise InvalidArgument(f"expected {params.K} neighbours, got {len(nb)}")
    e = float(np.dot(params.theta, np.sqrt(((nb - x) ** 2).sum(axis=1))))
    if params.variant == "modified":
        if kde_value is None:
            kde_value = kde(x)
        e *= float(_kde_pow(kde_value, params.alpha))
    return e


def _log_numerator(energy, log_kde, alpha: float, variant: str):
    if variant == "original":
        return alpha * log_kde - energy
    return -energy * np.exp(alpha * log_kde)


def _logsumexp(a: np.ndarray, axis: int = -1) -> np.ndarray:
    # scipy.special.logsumexp carries enough per-call overhead to dominate the fit loop
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return np.squeeze(m, axis=axis) + np.log(np.sum(np.exp(a - m), axis=axis))


def _log_kde(kde: Kde, pts: np.ndarray) -> np.ndarray:
    return np.log(np.maximum(kde.evaluate(pts), KDE_FLOOR))


def log_conditional_density(x, context, params: ModelParams, kde: Kde, quad: QuadratureSpec,
                            renormalize_neighbors: bool = False) -> float:
    """Log of the conditional density of ``x`` given the other points, point-by-point."""
    x = np.asarray(x, dtype=float)
    ctx = np.atleast_2d(np.asarray(context, dtype=float))
    K = params.K
    if len(ctx) < K:
        raise InvalidArgument(f"context has {len(ctx)} points, need at least K={K}")
    theta = np.asarray(params.theta)
    nb_idx, nb_d = _sorted_neighbours(x, ctx, K)
    log_num = _log_numerator(float(theta @ nb_d), _log_kde(kde, x[None, :])[0], params.alpha, params.variant)

    z, w = quad.nodes_and_weights()
    if renormalize_neighbors:
        dz = np.sqrt(((z[:, None, :] - ctx[None, :, :]) ** 2).sum(axis=2))
        dz = np.sort(dz, axis=1)[:, :K]
    else:
        nb = ctx[nb_idx]
        dz = np.sqrt(((z[:, None, :] - nb[None, :, :]) ** 2).sum(axis=2))
    log_int = _log_numerator(dz @ theta, _log_kde(kde, z), params.alpha, params.variant)
    log_z = float(_logsumexp(log_int + np.log(w)))
    if not log_z >= LOG_Z_FLOOR:
        raise DegenerateNormalization(f"normalizing integral {math.exp(log_z) if log_z > -745 else 0.0:.3g} below 1e-300")
    return log_num - log_z


def conditional_density(x, context, params: ModelParams, kde: Kde, quad: QuadratureSpec,
                        renormalize_neighbors: bool = False) -> float:
    return math.exp(log_conditional_density(x, context, params, kde, quad, renormalize_neighbors))


class PseudoLikelihood:
    """Precomputed geometry for fast repeated pseudolikelihood evaluation.

    Distances from every quadrature node to every point's neighbour set are
    computed once, so each ``(theta, alpha)`` evaluation costs one contraction
    over ``N x K x M`` and one log-sum-exp per point.
    """

    def __init__(self, ppd, K: int, variant: str, kde: Kde, quad: QuadratureSpec,
                 renormalize_neighbors: bool = False):
        if variant not in VARIANTS:
            raise InvalidArgument(f"variant must be one of {VARIANTS}, got {variant!r}")
        pts = ppd.points if isinstance(ppd, ProjectedDiagram) else np.asarray(ppd, dtype=float)
        self.points = pts
        self.K = K
        self.variant = variant
        self.kde = kde
        self.quad = quad
        self.renormalize_neighbors = renormalize_neighbors
        N = len(pts)
        nn_idx, self.nn_dist = knn_indices(pts, K)
        z, w = quad.nodes_and_weights()
        self.log_w = np.log(w)
        self.log_kde_points = _log_kde(kde, pts)
        self.log_kde_nodes = _log_kde(kde, z)
        if renormalize_neighbors:
            dz = np.sqrt(((z[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2))  # M x N
            top = np.argsort(dz, axis=1, kind="stable")[:, :K + 1]
            top_d = np.take_along_axis(dz, top, axis=1)
            node_d = np.empty((N, K, len(z)))
            for i in range(N):
                hit = top[:, :K] == i
                p = np.where(hit.any(axis=1), hit.argmax(axis=1), K)
                shifted = np.arange(K)[None, :] >= p[:, None]
                node_d[i] = np.where(shifted, top_d[:, 1:], top_d[:, :K]).T
        else:
            nb = pts[nn_idx]  # N x K x 2
            node_d = np.sqrt(((z[None, None, :, :] - nb[:, :, None, :]) ** 2).sum(axis=3))
        self.node_dist = node_d

    @property
    def n_points(self) -> int:
        return len(self.points)

    def log_conditionals(self, theta, alpha: float, raise_on_degenerate: bool = True) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        log_num = _log_numerator(self.nn_dist @ theta, self.log_kde_points, alpha, self.variant)
        energy = np.einsum("k,ikm->im", theta, self.node_dist)
        log_int = _log_numerator(energy, self.log_kde_nodes[None, :], alpha, self.variant)
        log_z = _logsumexp(log_int + self.log_w[None, :], axis=1)
        bad = ~(log_z >= LOG_Z_FLOOR)
        if raise_on_degenerate and bad.any():
            i = int(np.argmax(bad))
            raise DegenerateNormalization(f"normalizing integral for point {i} below 1e-300", point_index=i)
        return log_num - log_z

    def __call__(self, theta, alpha: float) -> float:
        return math.fsum(self.log_conditionals(theta, alpha))


def log_conditional_densities(ppd, params: ModelParams, kde: Kde, quad: QuadratureSpec,
                              renormalize_neighbors: bool = False) -> np.ndarray:
    ev = PseudoLikelihood(ppd, params.K, params.variant, kde, quad, renormalize_neighbors)
    return ev.log_conditionals(params.theta, params.alpha)


def log_pseudolikelihood(ppd, params: ModelParams, kde: Kde, quad: QuadratureSpec,
                         renormalize_neighbors: bool = False) -> float:
    """Sum over points of the log conditional density given the remaining points."""
    return math.fsum(log_conditional_densities(ppd, params, kde, quad, renormalize_neighbors))
