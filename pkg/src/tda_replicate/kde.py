"""Gaussian kernel density estimation with a diagonal bandwidth."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InvalidArgument

# Kernel contributions beyond this many bandwidths on any axis are dropped.
TAIL_CUTOFF = 12.0
_CHUNK = 1 << 20


def silverman_bandwidth(points: np.ndarray) -> np.ndarray:
    """Per-axis Silverman rule, ``sigma_j * (4 / ((D + 2) n)) ** (1 / (D + 4))``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n, d = pts.shape
    if n < 2:
        raise InvalidArgument("plug-in bandwidth needs at least two points")
    sigma = pts.std(axis=0, ddof=1)
    if np.any(sigma <= 0) or not np.all(np.isfinite(sigma)):
        raise InvalidArgument(f"plug-in bandwidth undefined: per-axis std {sigma.tolist()}")
    return sigma * (4.0 / ((d + 2) * n)) ** (1.0 / (d + 4))


@dataclass(frozen=True)
class Kde:
    samples: np.ndarray
    bandwidth: np.ndarray

    def __post_init__(self):
        z = np.atleast_2d(np.asarray(self.samples, dtype=float))
        h = np.atleast_1d(np.asarray(self.bandwidth, dtype=float))
        if z.shape[0] == 0:
            raise InvalidArgument("KDE needs at least one sample")
        if h.shape != (z.shape[1],):
            raise InvalidArgument(f"bandwidth length {h.size} does not match dimension {z.shape[1]}")
        if np.any(~np.isfinite(h)) or np.any(h <= 0):
            raise InvalidArgument(f"bandwidth entries must be positive, got {h.tolist()}")
        object.__setattr__(self, "samples", z)
        object.__setattr__(self, "bandwidth", h)

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    def __call__(self, p) -> np.ndarray | float:
        p = np.asarray(p, dtype=float)
        if p.ndim == 1:
            return float(self.evaluate(p[None, :])[0])
        return self.evaluate(p)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Density at each row of ``points``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.dim:
            raise InvalidArgument(f"expected {self.dim}-dimensional points, got {pts.shape[1]}")
        z = self.samples / self.bandwidth
        q = pts / self.bandwidth
        norm = 1.0 / (self.n * np.prod(np.sqrt(2.0 * np.pi) * self.bandwidth))
        out = np.empty(len(q))
        step = max(1, _CHUNK // self.n)
        for lo in range(0, len(q), step):
            diff = q[lo:lo + step, None, :] - z[None, :, :]
            sq = np.einsum("ijk,ijk->ij", diff, diff)
            k = np.exp(-0.5 * sq)
            k[np.any(np.abs(diff) > TAIL_CUTOFF, axis=2)] = 0.0
            out[lo:lo + step] = k.sum(axis=1)
        return out * norm


def fit_kde(points, bandwidth: Sequence[float] | float | None = None) -> Kde:
    """Build a :class:`Kde`; without ``bandwidth`` the Silverman diagonal rule is used."""
    pts = points.points if hasattr(points, "points") else np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] == 0:
        raise InvalidArgument("cannot fit a KDE to an empty sample")
    if bandwidth is None:
        h = silverman_bandwidth(pts)
    else:
        h = np.broadcast_to(np.asarray(bandwidth, dtype=float), (pts.shape[1],)).copy()
    return Kde(pts, h)


def kde_eval(kde: Kde, p) -> float:
    p = np.asarray(p, dtype=float)
    if p.shape != (kde.dim,):
        raise InvalidArgument(f"point has shape {p.shape}, expected ({kde.dim},)")
    return float(kde.evaluate(p[None, :])[0])


@dataclass(frozen=True)
class ScalarField:
    """Values of a function sampled on a tensor-product grid (``indexing='ij'``)."""

    axes: tuple
    values: np.ndarray

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != tuple(len(a) for a in axes):
            raise InvalidArgument(f"values shape {vals.shape} does not match axes")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "values", vals)

    @property
    def dim(self) -> int:
        return self.values.ndim

    @property
    def resolution(self) -> tuple:
        return self.values.shape

    def save(self, path) -> None:
        """Plain-text format: one ``axis<j>`` line per axis, then the row-major values."""
        path = Path(path)
        with open(path, "w") as fh:
            fh.write(f"# shape {' '.join(map(str, self.values.shape))}\n")
            for j, a in enumerate(self.axes):
                fh.write(f"axis{j}," + ",".join(format(v, ".17g") for v in a) + "\n")
            fh.write("values\n")
            for v in self.values.ravel():
                fh.write(format(v, ".17g") + "\n")

    @classmethod
    def load(cls, path) -> "ScalarField":
        with open(path) as fh:
            lines = fh.read().splitlines()
        shape = tuple(int(s) for s in lines[0].split()[2:])
        axes = [np.array([float(v) for v in lines[1 + j].split(",")[1:]]) for j in range(len(shape))]
        vals = np.array([float(v) for v in lines[2 + len(shape):]]).reshape(shape)
        return cls(tuple(axes), vals)


def kde_grid(kde: Kde, box: Sequence[tuple[float, float]], resolution: int) -> ScalarField:
    """Evaluate ``kde`` on a uniform ``resolution ** D`` lattice spanning ``box``."""
    if resolution < 2:
        raise InvalidArgument(f"resolution must be >= 2, got {resolution}")
    if len(box) != kde.dim:
        raise InvalidArgument(f"box has {len(box)} axes, KDE has {kde.dim}")
    axes = []
    for lo, hi in box:
        if not lo < hi:
            raise InvalidArgument(f"degenerate box axis ({lo}, {hi})")
        axes.append(np.linspace(lo, hi, resolution))
    mesh = np.meshgrid(*axes, indexing="ij")
    nodes = np.column_stack([m.ravel() for m in mesh])
    vals = kde.evaluate(nodes).reshape((resolution,) * kde.dim)
    return ScalarField(tuple(axes), vals)


def data_box(points: np.ndarray, pad: float = 0.0) -> list[tuple[float, float]]:
    """Per-axis data range, optionally widened by ``pad`` on both sides."""
    pts = np.atleast_2d(points)
    return [(float(lo) - pad, float(hi) + pad) for lo, hi in zip(pts.min(axis=0), pts.max(axis=0))]
