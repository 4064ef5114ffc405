"""Goodness of fit between observed and simulated diagrams.

Distances use the L-infinity ground metric with diagonal augmentation: every
point may be matched to its projection on the diagonal at cost
``|death - birth| / 2``, and diagonal slots match each other for free.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .diagram import PersistenceDiagram, to_ppd
from .errors import InvalidArgument


def _points(pd) -> np.ndarray:
    if isinstance(pd, PersistenceDiagram):
        return pd.pairs
    arr = np.asarray(pd, dtype=float)
    return arr.reshape(-1, 2) if arr.size else np.empty((0, 2))


def _check_conventions(pd1, pd2):
    c1 = getattr(pd1, "convention", None)
    c2 = getattr(pd2, "convention", None)
    if c1 and c2 and c1 != c2:
        raise InvalidArgument(f"diagrams use different conventions ({c1} vs {c2})")
    r1, r2 = getattr(pd1, "rank", None), getattr(pd2, "rank", None)
    if r1 is not None and r2 is not None and r1 != r2:
        raise InvalidArgument(f"cannot compare diagrams of ranks {r1} and {r2}")


def _costs(a: np.ndarray, b: np.ndarray):
    """Point-to-point L-inf distances and each point's distance to the diagonal."""
    cross = np.max(np.abs(a[:, None, :] - b[None, :, :]), axis=2) if len(a) and len(b) else np.zeros((len(a), len(b)))
    return cross, np.abs(a[:, 1] - a[:, 0]) / 2.0, np.abs(b[:, 1] - b[:, 0]) / 2.0


def _augmented(cross, diag_a, diag_b) -> np.ndarray:
    n, m = cross.shape
    big = np.full((n + m, m + n), np.inf)
    big[:n, :m] = cross
    big[:n, m:] = diag_a[:, None]
    big[n:, :m] = diag_b[None, :]
    big[n:, m:] = 0.0
    return big


def bottleneck(pd1, pd2) -> float:
    """Exact bottleneck distance by bisection over candidate values with matching checks."""
    _check_conventions(pd1, pd2)
    a, b = _points(pd1), _points(pd2)
    if len(a) == 0 and len(b) == 0:
        return 0.0
    cost = _augmented(*_costs(a, b))
    size = cost.shape[0]
    candidates = np.unique(cost[np.isfinite(cost)])

    def feasible(delta: float) -> bool:
        graph = csr_matrix((cost <= delta).astype(np.int8))
        match = maximum_bipartite_matching(graph, perm_type="column")
        return bool(np.all(match >= 0)) and match.size == size

    lo, hi = 0, len(candidates) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if feasible(candidates[mid]):
            hi = mid
        else:
            lo = mid + 1
    return float(candidates[lo])


def wasserstein(pd1, pd2, p: float = 1.0) -> float:
    """Order-``p`` Wasserstein distance, solved as an assignment problem."""
    if p < 1:
        raise InvalidArgument(f"Wasserstein order must be >= 1, got {p}")
    _check_conventions(pd1, pd2)
    a, b = _points(pd1), _points(pd2)
    if len(a) == 0 and len(b) == 0:
        return 0.0
    cost = _augmented(*_costs(a, b)) ** p
    rows, cols = linear_sum_assignment(cost)
    # fsum is exact up to one rounding, so the value does not depend on argument order
    return math.fsum(cost[rows, cols].tolist()) ** (1.0 / p)


def nn_stats(pd, orders: Sequence[int] = (1, 2, 3), space: str = "pd") -> np.ndarray:
    """Mean distance to the k-th nearest other point for each ``k`` in ``orders``.

    ``space='pd'`` works in (birth, death) coordinates, ``'ppd'`` in projected ones.
    """
    if space == "ppd":
        pts = to_ppd(pd).points
    elif space == "pd":
        pts = _points(pd)
    else:
        raise InvalidArgument(f"space must be 'pd' or 'ppd', got {space!r}")
    kmax = max(orders)
    if len(pts) <= kmax:
        raise InvalidArgument(f"need more than {kmax} points for order-{kmax} neighbours, got {len(pts)}")
    d = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2))
    np.fill_diagonal(d, np.inf)
    d.sort(axis=1)
    return np.array([d[:, k - 1].mean() for k in orders])


@dataclass
class GofReport:
    per_replicate: list  # (bottleneck, wasserstein) per aligned pair
    nn_real: np.ndarray
    nn_sim: np.ndarray
    orders: tuple = (1, 2, 3)
    config_tags: dict = field(default_factory=dict)

    def rows(self) -> list[tuple]:
        out = []
        for r, (bn, ws) in enumerate(self.per_replicate):
            out.append((r, "bottleneck", bn))
            out.append((r, "wasserstein", ws))
            for j, k in enumerate(self.orders):
                out.append((r, f"nn{k}_real", float(self.nn_real[r, j])))
                out.append((r, f"nn{k}_sim", float(self.nn_sim[r, j])))
        return out

    def to_csv(self, header: bool = True) -> str:
        tag_keys = sorted(self.config_tags)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow(["replicate", "metric", "value", *tag_keys])
        for r, metric, value in self.rows():
            w.writerow([r, metric, format(value, ".17g"), *(self.config_tags[k] for k in tag_keys)])
        return buf.getvalue()

    def median(self, metric: str) -> float:
        col = 0 if metric == "bottleneck" else 1
        return float(np.median([row[col] for row in self.per_replicate]))


def gof_report(real_pds: Sequence, sim_pds: Sequence, config_tags: dict | None = None, p: float = 1.0,
               orders: Sequence[int] = (1, 2, 3), space: str = "pd") -> GofReport:
    """Distances and NN summaries for aligned (real, simulated) diagram pairs."""
    if len(real_pds) != len(sim_pds):
        raise InvalidArgument(f"{len(real_pds)} real diagrams but {len(sim_pds)} simulated")
    per, nr, ns = [], [], []
    for real, sim in zip(real_pds, sim_pds):
        per.append((bottleneck(real, sim), wasserstein(real, sim, p)))
        nr.append(_nn_or_nan(real, orders, space))
        ns.append(_nn_or_nan(sim, orders, space))
    shape = (len(per), len(orders))
    return GofReport(per, np.array(nr).reshape(shape), np.array(ns).reshape(shape), tuple(orders),
                     dict(config_tags or {}))


def _nn_or_nan(pd, orders, space):
    try:
        return nn_stats(pd, orders, space)
    except InvalidArgument:
        return np.full(len(orders), math.nan)
