"""Seedable samplers for the geometric test objects (circles and spheres)."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InvalidArgument

SHAPE_KINDS = ("circle", "concentric", "distinct", "sphere")


def make_rng(seed: int) -> np.random.Generator:
    """All sampling goes through PCG64 so a seed replays the exact stream."""
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] == 0 or pts.shape[1] == 0:
            raise InvalidArgument("point cloud must be a non-empty (n, D) array")
        object.__setattr__(self, "points", pts)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    def to_csv(self, path) -> None:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{j + 1}" for j in range(self.dim)])
            for row in self.points:
                w.writerow([format(v, ".17g") for v in row])

    @classmethod
    def from_csv(cls, path) -> "PointCloud":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise InvalidArgument(f"{path}: empty file")
        header, body = rows[0], rows[1:]
        try:
            pts = np.array([[float(v) for v in r] for r in body if r], dtype=float)
        except ValueError as exc:
            raise InvalidArgument(f"{path}: {exc}") from None
        if pts.ndim != 2 or pts.shape[1] != len(header):
            raise InvalidArgument(f"{path}: rows do not match header {header}")
        return cls(pts)


@dataclass(frozen=True)
class ShapeSpec:
    """Geometry of one experiment's sampling object."""

    kind: str
    radii: tuple = (1.0,)
    n: int = 1000
    seed: int = 0
    separation: float = 0.0
    fractions: tuple = ()
    dim: int = 2
    center: tuple = field(default=(0.0, 0.0))

    def __post_init__(self):
        if self.kind not in SHAPE_KINDS:
            raise InvalidArgument(f"unknown shape kind {self.kind!r}")
        want = 2 if self.kind in ("concentric", "distinct") else 1
        if len(self.radii) != want:
            raise InvalidArgument(f"{self.kind} needs {want} radii, got {len(self.radii)}")
        if any(r <= 0 for r in self.radii):
            raise InvalidArgument("radii must be positive")
        if self.separation < 0:
            raise InvalidArgument("separation must be nonnegative")
        if self.n < 1:
            raise InvalidArgument("n must be positive")
        if self.fractions:
            if any(not 0 < f < 1 for f in self.fractions) or abs(sum(self.fractions) - 1) > 1e-9:
                raise InvalidArgument("fractions must lie in (0,1) and sum to 1")

    @property
    def ambient_dim(self) -> int:
        return self.dim + 1 if self.kind == "sphere" else 2

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "radii": list(self.radii),
            "n": self.n,
            "seed": self.seed,
            "separation": self.separation,
            "fractions": list(self.fractions),
            "dim": self.dim,
            "center": list(self.center),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ShapeSpec":
        d = dict(d)
        for key in ("radii", "fractions", "center"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def _circle_points(n: int, r: float, center, rng: np.random.Generator) -> np.ndarray:
    theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
    c = np.asarray(center, dtype=float)
    return np.column_stack([c[0] + r * np.cos(theta), c[1] + r * np.sin(theta)])


def sample_circle(n: int, r: float = 1.0, center: Sequence[float] = (0.0, 0.0), seed: int = 0) -> PointCloud:
    """Draw ``n`` points uniformly in angle on the circle of radius ``r``."""
    if n < 1 or r <= 0:
        raise InvalidArgument(f"need n >= 1 and r > 0 (got n={n}, r={r})")
    if len(center) != 2:
        raise InvalidArgument("center must be a 2-vector")
    return PointCloud(_circle_points(n, r, center, make_rng(seed)))


def sample_two_circles(spec: ShapeSpec) -> PointCloud:
    """Two-circle samplers.

    ``concentric`` puts ``round(f0 * n)`` points on the first circle (``f0``
    defaults to 0.4) and the rest on the second, sharing the center.
    ``distinct`` splits ``n`` evenly; the first circle sits at the origin and the
    second on the positive x axis so that the gap between the curves equals
    ``spec.separation``.
    """
    if spec.kind not in ("concentric", "distinct"):
        raise InvalidArgument(f"sample_two_circles needs concentric/distinct, got {spec.kind!r}")
    r1, r2 = spec.radii
    rng = make_rng(spec.seed)
    if spec.kind == "concentric":
        f0 = spec.fractions[0] if spec.fractions else 0.4
        n1 = int(round(f0 * spec.n))
        c = spec.center
        pts = np.vstack([_circle_points(n1, r1, c, rng), _circle_points(spec.n - n1, r2, c, rng)])
    else:
        if spec.n % 2:
            raise InvalidArgument(f"distinct circles need an even n, got {spec.n}")
        half = spec.n // 2
        offset = r1 + r2 + spec.separation
        pts = np.vstack(
            [_circle_points(half, r1, (0.0, 0.0), rng), _circle_points(half, r2, (offset, 0.0), rng)]
        )
    return PointCloud(pts)


def sample_sphere(n: int, dim: int = 2, r: float = 1.0, seed: int = 0) -> PointCloud:
    """Uniform sample on the ``dim``-sphere of radius ``r`` in R^(dim+1).

    Uses normalized isotropic Gaussian draws, which are exactly uniform.
    """
    if dim not in (2, 3):
        raise InvalidArgument(f"sphere dimension must be 2 or 3, got {dim}")
    if n < 1 or r <= 0:
        raise InvalidArgument(f"need n >= 1 and r > 0 (got n={n}, r={r})")
    g = make_rng(seed).standard_normal((n, dim + 1))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return PointCloud(r * g)


def sample_shape(spec: ShapeSpec) -> PointCloud:
    if spec.kind == "circle":
        return sample_circle(spec.n, spec.radii[0], spec.center, spec.seed)
    if spec.kind == "sphere":
        return sample_sphere(spec.n, spec.dim, spec.radii[0], spec.seed)
    return sample_two_circles(spec)
