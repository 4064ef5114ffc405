"""Superlevel-set persistent homology of gridded scalar fields.

Cells of the cubical complex are addressed on the doubled grid: a node at index
``i`` along an axis sits at doubled coordinate ``2i`` and the edge between nodes
``i`` and ``i + 1`` at ``2i + 1``.  A cell's dimension is the number of odd
coordinates.  The filtration is the lower-star filtration of the negated field,
with nodes ordered by decreasing value and ties broken by flat node index.
Every cell inherits the position of its latest vertex; cells are sorted by
(position, dimension, doubled flat index).

Pairs created by a single node insertion (birth and death at the same position)
carry no topological information and are not reported.  Classes that never die
receive death equal to the global minimum of the field.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .diagram import PersistenceDiagram
from .errors import InvalidArgument, ResourceLimitError
from .kde import ScalarField

log = logging.getLogger(__name__)

DEFAULT_MAX_CELLS = 4_000_000


@dataclass(frozen=True)
class FiltrationConvention:
    direction: str = "superlevel"
    essential_death: str = "min"


def _values(field) -> np.ndarray:
    vals = field.values if isinstance(field, ScalarField) else np.asarray(field, dtype=float)
    if vals.size == 0:
        raise InvalidArgument("field has no nodes")
    return np.asarray(vals, dtype=float)


def node_order(values: np.ndarray) -> np.ndarray:
    """Flat node indices sorted by decreasing value, ties by increasing index."""
    flat = values.ravel()
    return np.lexsort((np.arange(flat.size), -flat))


def _neighbors(flat_index: int, shape: tuple, strides: tuple):
    rem = flat_index
    for axis, (n, s) in enumerate(zip(shape, strides)):
        coord = rem // s
        rem -= coord * s
        if coord > 0:
            yield flat_index - s
        if coord < n - 1:
            yield flat_index + s


def h0_superlevel(field) -> PersistenceDiagram:
    """Rank-0 superlevel diagram by a descending union-find sweep (elder rule)."""
    vals = _values(field)
    flat = vals.ravel()
    shape = vals.shape
    strides = tuple(int(np.prod(shape[a + 1:])) for a in range(len(shape)))
    order = node_order(vals)
    parent = np.full(flat.size, -1, dtype=np.int64)
    birth_pos = {}
    pairs = []

    def find(x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    for pos, v in enumerate(order):
        v = int(v)
        roots = {find(u) for u in _neighbors(v, shape, strides) if parent[u] >= 0}
        if not roots:
            parent[v] = v
            birth_pos[v] = pos
            continue
        elder = min(roots, key=birth_pos.__getitem__)
        parent[v] = elder
        for r in roots:
            if r != elder:
                pairs.append((flat[order[birth_pos[r]]], flat[v]))
                parent[r] = elder
    gmin = float(flat.min())
    for r, pos in birth_pos.items():
        if parent[r] == r:
            pairs.append((flat[order[pos]], gmin))
    return PersistenceDiagram(0, np.array(pairs, dtype=float).reshape(-1, 2))


class CubicalComplex:
    """Lower-star cubical complex of the negated field, restricted to dims <= ``top_dim``."""

    def __init__(self, values: np.ndarray, top_dim: int, max_cells: int = DEFAULT_MAX_CELLS):
        self.values = values
        self.shape = values.shape
        self.dshape = tuple(2 * n - 1 for n in self.shape)
        ncells = int(np.prod(self.dshape))
        if ncells > max_cells:
            raise ResourceLimitError(
                f"cubical complex on grid {self.shape} has {ncells} cells "
                f"(doubled grid {self.dshape}); budget is {max_cells}"
            )
        D = values.ndim
        self.top_dim = top_dim
        self.node_order = node_order(values)
        pos = np.empty(values.size, dtype=np.int64)
        pos[self.node_order] = np.arange(values.size)

        # max-pool node positions onto every cell of the doubled grid
        key = np.full(self.dshape, -1, dtype=np.int64)
        key[tuple(slice(None, None, 2) for _ in range(D))] = pos.reshape(self.shape)
        for axis in range(D):
            lo = [slice(None)] * D
            hi = [slice(None)] * D
            mid = [slice(None)] * D
            lo[axis], mid[axis], hi[axis] = slice(0, -1, 2), slice(1, None, 2), slice(2, None, 2)
            key[tuple(mid)] = np.maximum(key[tuple(lo)], key[tuple(hi)])

        odd = np.zeros(self.dshape, dtype=np.int8)
        for axis in range(D):
            shp = [1] * D
            shp[axis] = self.dshape[axis]
            odd = odd + (np.arange(self.dshape[axis]) % 2).reshape(shp).astype(np.int8)
        self.key = key.ravel()
        self.cell_dim = odd.ravel()
        keep = np.flatnonzero(self.cell_dim <= top_dim)
        order = np.lexsort((keep, self.cell_dim[keep], self.key[keep]))
        self.cells = keep[order]  # filtration order -> doubled flat index
        self.index = np.full(ncells, -1, dtype=np.int64)
        self.index[self.cells] = np.arange(self.cells.size)
        self.dstrides = tuple(int(np.prod(self.dshape[a + 1:])) for a in range(D))

    def boundary_columns(self, dim: int):
        """Return (filtration indices of dim-``dim`` cells, list of face-index sets)."""
        idx = np.flatnonzero(self.cell_dim[self.cells] == dim)
        cells = self.cells[idx]
        if dim == 0:
            return idx, [set() for _ in idx]
        coords = np.array(np.unravel_index(cells, self.dshape)).T
        oddmask = coords % 2 == 1
        faces = np.empty((cells.size, 2 * dim), dtype=np.int64)
        patterns = {}
        for row, m in enumerate(map(tuple, oddmask)):
            patterns.setdefault(m, []).append(row)
        for m, rows in patterns.items():
            rows = np.array(rows)
            offsets = []
            for axis, is_odd in enumerate(m):
                if is_odd:
                    offsets.extend((-self.dstrides[axis], self.dstrides[axis]))
            faces[rows] = cells[rows, None] + np.array(offsets)[None, :]
        fidx = self.index[faces]
        return idx, [set(r) for r in fidx.tolist()]

    def node_value_at(self, filtration_index: int) -> float:
        return float(self.values.ravel()[self.node_order[self.key[self.cells[filtration_index]]]])


def reduce_with_clearing(cx: CubicalComplex, max_rank: int):
    """Boundary-matrix reduction from the top dimension down, clearing paired columns.

    Returns ``(pairs, essentials)``: ``pairs`` maps rank to a list of
    (birth index, death index) in filtration order; ``essentials`` maps rank to
    unpaired birth indices.
    """
    pairs = {k: [] for k in range(max_rank + 1)}
    cleared = set()
    for dim in range(max_rank + 1, 0, -1):
        idx, cols = cx.boundary_columns(dim)
        pivot_col = {}
        for j, col in zip(idx.tolist(), cols):
            if j in cleared:
                continue
            while col:
                low = max(col)
                other = pivot_col.get(low)
                if other is None:
                    pivot_col[low] = col
                    pairs[dim - 1].append((low, j))
                    cleared.add(low)
                    break
                col ^= other
    # a rank-k class is essential if its cell is neither a paired birth nor a death
    deaths = {d for k in pairs for _, d in pairs[k]}
    essentials = {}
    for k in range(max_rank + 1):
        idx = np.flatnonzero(cx.cell_dim[cx.cells] == k).tolist()
        essentials[k] = [j for j in idx if j not in cleared and j not in deaths]
    return pairs, essentials


def _to_diagrams(cx: CubicalComplex, pairs, essentials, max_rank: int) -> list[PersistenceDiagram]:
    flat = cx.values.ravel()
    gmin = float(flat.min())
    out = []
    for k in range(max_rank + 1):
        pts = []
        for b, d in pairs[k]:
            kb, kd = cx.key[cx.cells[b]], cx.key[cx.cells[d]]
            if kb == kd:
                continue
            pts.append((flat[cx.node_order[kb]], flat[cx.node_order[kd]]))
        for b in essentials[k]:
            pts.append((flat[cx.node_order[cx.key[cx.cells[b]]]], gmin))
        out.append(PersistenceDiagram(k, np.array(pts, dtype=float).reshape(-1, 2)))
    return out


def cubical_persistence(field, max_rank: int, max_cells: int = DEFAULT_MAX_CELLS) -> list[PersistenceDiagram]:
    """Superlevel diagrams of ranks ``0..max_rank`` of a gridded field.

    Raises
    ------
    InvalidArgument
        If ``max_rank`` is outside ``1..D-1`` or ``D > 4``.
    ResourceLimitError
        If the complex would exceed ``max_cells`` cells.
    """
    vals = _values(field)
    D = vals.ndim
    if D > 4:
        raise InvalidArgument(f"fields of dimension {D} > 4 are not supported")
    if not 1 <= max_rank <= D - 1:
        raise InvalidArgument(f"max_rank must be in [1, {D - 1}] for a {D}-dimensional field, got {max_rank}")
    cx = CubicalComplex(vals, max_rank + 1, max_cells=max_cells)
    pairs, essentials = reduce_with_clearing(cx, max_rank)
    return _to_diagrams(cx, pairs, essentials, max_rank)


def persistence_by_rank(field, ranks, max_cells: int = DEFAULT_MAX_CELLS) -> dict[int, PersistenceDiagram]:
    """Diagrams for the requested ranks; rank 0 alone goes through union-find."""
    ranks = sorted(set(ranks))
    if ranks == [0]:
        return {0: h0_superlevel(field)}
    dgms = cubical_persistence(field, max(ranks), max_cells=max_cells)
    return {k: dgms[k] for k in ranks}
