"""Persistence diagrams, their projected (birth, persistence) form, and CSV IO.

Orientation
-----------
A superlevel diagram has ``birth >= death``; a sublevel one ``death >= birth``.
Projection always uses the lower endpoint as the first coordinate and the gap as
the second, so the projected points live in R x R+ whatever the orientation::

    x1 = min(b, d),  x2 = |d - b|

and the inverse maps ``x -> (x1 + x2, x1)`` as (upper, lower), read back as
(birth, death) for superlevel diagrams and (death, birth) for sublevel ones.
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DiagramParseError, InvalidArgument

CONVENTIONS = ("superlevel", "sublevel")


def _as_pairs(pairs) -> np.ndarray:
    arr = np.asarray(pairs, dtype=float)
    if arr.size == 0:
        return np.empty((0, 2))
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InvalidArgument(f"pairs must have shape (N, 2), got {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class PersistenceDiagram:
    """(birth, death) pairs of a single homology rank."""

    rank: int
    pairs: np.ndarray
    convention: str = "superlevel"
    essential_death: str = "min"

    def __post_init__(self):
        if self.rank < 0:
            raise InvalidArgument(f"homology rank must be >= 0, got {self.rank}")
        if self.convention not in CONVENTIONS:
            raise InvalidArgument(f"unknown convention {self.convention!r}")
        arr = _as_pairs(self.pairs)
        if not np.all(np.isfinite(arr)):
            raise InvalidArgument("diagram coordinates must be finite")
        gap = arr[:, 0] - arr[:, 1] if self.convention == "superlevel" else arr[:, 1] - arr[:, 0]
        if np.any(gap < 0):
            i = int(np.argmax(gap < 0))
            raise InvalidArgument(
                f"pair {i} {tuple(arr[i])} has negative persistence under the {self.convention} convention"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "pairs", arr)

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def births(self) -> np.ndarray:
        return self.pairs[:, 0]

    @property
    def deaths(self) -> np.ndarray:
        return self.pairs[:, 1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, PersistenceDiagram):
            return NotImplemented
        return (
            self.rank == other.rank
            and self.convention == other.convention
            and self.pairs.shape == other.pairs.shape
            and bool(np.all(self.pairs == other.pairs))
        )

    def sorted(self) -> "PersistenceDiagram":
        order = np.lexsort((self.pairs[:, 1], self.pairs[:, 0]))
        return PersistenceDiagram(self.rank, self.pairs[order], self.convention, self.essential_death)


@dataclass(frozen=True, eq=False)
class ProjectedDiagram:
    """Points ``(x1, x2)`` with ``x2 >= 0``; the modeling space for the Gibbs model."""

    points: np.ndarray
    source_rank: int = 0
    convention: str = "superlevel"

    def __post_init__(self):
        arr = _as_pairs(self.points)
        if np.any(arr[:, 1] < 0):
            raise InvalidArgument("projected points must have nonnegative second coordinate")
        object.__setattr__(self, "points", arr)

    def __len__(self) -> int:
        return len(self.points)

    def with_points(self, points: np.ndarray) -> "ProjectedDiagram":
        return ProjectedDiagram(points, self.source_rank, self.convention)


def to_ppd(pd: PersistenceDiagram) -> ProjectedDiagram:
    b, d = pd.pairs[:, 0], pd.pairs[:, 1]
    lower = np.minimum(b, d)
    pts = np.column_stack([lower, np.abs(d - b)])
    return ProjectedDiagram(pts, pd.rank, pd.convention)


def from_ppd(ppd: ProjectedDiagram) -> PersistenceDiagram:
    x1, x2 = ppd.points[:, 0], ppd.points[:, 1]
    upper = x1 + x2
    if ppd.convention == "superlevel":
        pairs = np.column_stack([upper, x1])
    else:
        pairs = np.column_stack([x1, upper])
    return PersistenceDiagram(ppd.source_rank, pairs, ppd.convention)


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def diagrams_to_csv_text(diagrams) -> str:
    lines = ["rank,birth,death"]
    for pd in diagrams:
        lines.extend(f"{pd.rank},{_fmt(b)},{_fmt(d)}" for b, d in pd.pairs)
    return "\n".join(lines) + "\n"


def save_diagram(pd, path) -> None:
    """Write one diagram (or a list of diagrams) as ``rank,birth,death`` CSV."""
    diagrams = [pd] if isinstance(pd, PersistenceDiagram) else list(pd)
    _atomic_write_text(Path(path), diagrams_to_csv_text(diagrams))


def load_diagrams(path, convention: str = "superlevel") -> dict[int, PersistenceDiagram]:
    """Parse a ``rank,birth,death`` CSV into one diagram per rank present."""
    rows: dict[int, list] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DiagramParseError("empty file (missing header)", 1)
        if [h.strip() for h in header] != ["rank", "birth", "death"]:
            raise DiagramParseError(f"expected header rank,birth,death, got {header}", 1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise DiagramParseError(f"expected 3 fields, got {len(row)}", lineno)
            try:
                rank, b, d = int(row[0]), float(row[1]), float(row[2])
            except ValueError as exc:
                raise DiagramParseError(str(exc), lineno) from None
            if rank < 0:
                raise DiagramParseError(f"negative rank {rank}", lineno)
            gap = b - d if convention == "superlevel" else d - b
            if not np.isfinite(b) or not np.isfinite(d):
                raise DiagramParseError("non-finite coordinate", lineno)
            if gap < 0:
                raise DiagramParseError(
                    f"negative persistence ({b}, {d}) under the {convention} convention", lineno
                )
            rows.setdefault(rank, []).append((b, d))
    return {r: PersistenceDiagram(r, np.array(p), convention) for r, p in sorted(rows.items())}


def load_diagram(path, rank: int | None = None, convention: str = "superlevel") -> PersistenceDiagram:
    diagrams = load_diagrams(path, convention)
    if rank is None:
        if len(diagrams) > 1:
            raise InvalidArgument(f"{path} holds ranks {sorted(diagrams)}; pass rank=")
        if not diagrams:
            return PersistenceDiagram(0, np.empty((0, 2)), convention)
        return next(iter(diagrams.values()))
    return diagrams.get(rank, PersistenceDiagram(rank, np.empty((0, 2)), convention))


def save_ppd(ppd: ProjectedDiagram, path) -> None:
    lines = ["x1,x2,rank"]
    lines.extend(f"{_fmt(a)},{_fmt(b)},{ppd.source_rank}" for a, b in ppd.points)
    _atomic_write_text(Path(path), "\n".join(lines) + "\n")


def load_ppd(path, convention: str = "superlevel") -> ProjectedDiagram:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["x1", "x2", "rank"]:
            raise DiagramParseError(f"expected header x1,x2,rank, got {header}", 1)
        pts, ranks = [], set()
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                pts.append((float(row[0]), float(row[1])))
                ranks.add(int(row[2]))
            except (ValueError, IndexError) as exc:
                raise DiagramParseError(str(exc), lineno) from None
            if pts[-1][1] < 0:
                raise DiagramParseError("negative persistence coordinate", lineno)
    if len(ranks) > 1:
        raise DiagramParseError(f"mixed ranks {sorted(ranks)} in one projected diagram")
    return ProjectedDiagram(np.array(pts), ranks.pop() if ranks else 0, convention)
