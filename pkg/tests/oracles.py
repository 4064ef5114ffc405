"""Slow, independent reference implementations used as test oracles."""
from __future__ import annotations

import itertools
from collections import Counter

import numpy as np
from scipy import ndimage


def _linf(p, q) -> float:
    return max(abs(p[0] - q[0]), abs(p[1] - q[1]))


def _diag(p) -> float:
    return abs(p[1] - p[0]) / 2.0


def matchings(a, b):
    """Yield the cost lists of every partial matching between ``a`` and ``b``.

    Unmatched points on either side go to their diagonal projection.
    """
    m, n = len(a), len(b)
    for k in range(min(m, n) + 1):
        for left in itertools.combinations(range(m), k):
            for right in itertools.permutations(range(n), k):
                costs = [_linf(a[i], b[j]) for i, j in zip(left, right)]
                costs += [_diag(a[i]) for i in range(m) if i not in left]
                costs += [_diag(b[j]) for j in range(n) if j not in right]
                yield costs


def brute_bottleneck(a, b) -> float:
    return min((max(c) if c else 0.0) for c in matchings(a, b))


def brute_wasserstein(a, b, p: float = 1.0) -> float:
    return min(sum(x ** p for x in c) for c in matchings(a, b)) ** (1.0 / p)


def _cells(shape):
    """All cells of the cubical complex on a vertex grid of ``shape``."""
    ranges = [range(2 * s - 1) for s in shape]
    for c in itertools.product(*ranges):
        yield c


def _vertices(cell):
    axes = [(c // 2,) if c % 2 == 0 else ((c - 1) // 2, (c + 1) // 2) for c in cell]
    return list(itertools.product(*axes))


def _faces(cell):
    out = []
    for i, c in enumerate(cell):
        if c % 2:
            for d in (-1, 1):
                out.append(cell[:i] + (c + d,) + cell[i + 1:])
    return out


def reduce_without_clearing(values: np.ndarray, max_rank: int) -> dict:
    """Superlevel persistence by plain column reduction over GF(2).

    Returns ``{rank: Counter of (birth, death)}`` with essential classes dying
    at the global minimum and zero-length pairs removed.
    """
    values = np.asarray(values, dtype=float)
    cells = [c for c in _cells(values.shape) if sum(x % 2 for x in c) <= max_rank + 1]
    val = {c: min(values[v] for v in _vertices(c)) for c in cells}
    dim = {c: sum(x % 2 for x in c) for c in cells}
    # a cell enters when its smallest vertex value is reached; faces first on ties
    order = sorted(cells, key=lambda c: (-val[c], dim[c], c))
    pos = {c: i for i, c in enumerate(order)}
    columns = []
    for c in order:
        bits = 0
        for f in _faces(c):
            bits |= 1 << pos[f]
        columns.append(bits)
    low_of = {}
    paired = set()
    pairs = {k: Counter() for k in range(max_rank + 1)}
    for j, col in enumerate(columns):
        while col:
            low = col.bit_length() - 1
            if low not in low_of:
                low_of[low] = j
                paired.update((low, j))
                k = dim[order[low]]
                if k <= max_rank:
                    b, d = val[order[low]], val[order[j]]
                    if b != d:
                        pairs[k][(b, d)] += 1
                break
            col ^= columns[low_of[low]]
        columns[j] = col
    vmin = float(values.min())
    for i, c in enumerate(order):
        if i not in paired and dim[c] <= max_rank:
            pairs[dim[c]][(val[c], vmin)] += 1
    return pairs


def h0_threshold_sweep(values: np.ndarray) -> Counter:
    """H0 of the superlevel filtration by relabelling components at every level."""
    values = np.asarray(values, dtype=float)
    levels = np.unique(values)[::-1]
    alive = {}  # representative node -> birth value
    out = Counter()
    for t in levels:
        labels, _ = ndimage.label(values >= t)
        groups = {}
        for rep, birth in alive.items():
            groups.setdefault(labels[rep], []).append((birth, rep))
        new_alive = {}
        for lab in range(1, labels.max() + 1):
            members = groups.get(lab, [])
            if not members:
                mask = labels == lab
                idx = np.unravel_index(np.argmax(np.where(mask, values, -np.inf)), values.shape)
                new_alive[idx] = float(values[idx])
                continue
            members.sort(reverse=True)
            for birth, _ in members[1:]:
                if birth != t:
                    out[(birth, float(t))] += 1
            new_alive[members[0][1]] = members[0][0]
        alive = new_alive
    for birth in alive.values():
        out[(birth, float(values.min()))] += 1
    return out
