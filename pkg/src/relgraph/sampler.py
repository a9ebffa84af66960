"""2-D (L, C) binning of the design space and the sub-sampling schemes built on it."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

from .generators import make_rng

BINS_PER_AXIS = 15 * 9


@dataclass(frozen=True)
class BinSpec:
    """Bin edges for average path length (rows) and clustering (columns).

    Bins are half-open ``[edge_i, edge_{i+1})`` except the last bin on each
    axis, which also includes the top edge.
    """

    l_edges: np.ndarray
    c_edges: np.ndarray

    def __post_init__(self):
        for name in ("l_edges", "c_edges"):
            e = np.asarray(getattr(self, name), dtype=np.float64)
            if e.ndim != 1 or len(e) < 2 or not np.all(np.diff(e) > 0):
                raise ValueError(f"{name} must be a strictly increasing array of >= 2 edges")
            object.__setattr__(self, name, e)

    @classmethod
    def appendix(cls) -> "BinSpec":
        return cls(np.linspace(1, 4.5, BINS_PER_AXIS + 1), np.linspace(0, 1, BINS_PER_AXIS + 1))

    @classmethod
    def uniform(cls, l_range, c_range, l_bins: int, c_bins: int) -> "BinSpec":
        return cls(np.linspace(*l_range, l_bins + 1), np.linspace(*c_range, c_bins + 1))

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.l_edges) - 1, len(self.c_edges) - 1

    def to_dict(self) -> dict:
        return {"l_edges": self.l_edges.tolist(), "c_edges": self.c_edges.tolist()}


def _axis_index(x: float, edges: np.ndarray) -> int | None:
    if x is None or not np.isfinite(x) or x < edges[0] or x > edges[-1]:
        return None
    if x == edges[-1]:
        return len(edges) - 2
    return int(np.searchsorted(edges, x, side="right")) - 1


def bin_index(L: float | None, C: float, spec: BinSpec) -> tuple[int, int] | None:
    """(li, ci) for a measured graph, or None when outside the grid (or disconnected)."""
    li = _axis_index(L, spec.l_edges)
    ci = _axis_index(C, spec.c_edges)
    if li is None or ci is None:
        return None
    return li, ci


def _lc(measures) -> tuple[float | None, float]:
    if hasattr(measures, "avg_path_length"):
        return measures.avg_path_length, measures.clustering
    L, C = measures
    return L, C


@dataclass(frozen=True)
class Binned:
    li: int
    ci: int
    L: float
    C: float
    item: Any


def subsample_one_per_bin(entries: Iterable[tuple[Any, Any]], spec: BinSpec, seed: int = 0) -> list[Binned]:
    """Keep one uniformly chosen entry per occupied bin, sorted by (li, ci).

    ``entries`` are ``(item, measures)`` pairs; measures is a GraphMeasures
    or an ``(L, C)`` tuple. Entries outside the grid are dropped.
    """
    members: dict[tuple[int, int], list[Binned]] = defaultdict(list)
    for item, measures in entries:
        L, C = _lc(measures)
        idx = bin_index(L, C, spec)
        if idx is not None:
            members[idx].append(Binned(idx[0], idx[1], L, C, item))
    rng = make_rng(seed)
    out = []
    for key in sorted(members):
        group = members[key]
        out.append(group[int(rng.integers(len(group)))] if len(group) > 1 else group[0])
    return out


def subsample_every_ninth(binned: Sequence[Binned], residue: int = 5, period: int = 9) -> list[Binned]:
    """Keep entries whose row and column bin index are both ``residue`` mod ``period``."""
    return [b for b in binned if b.li % period == residue and b.ci % period == residue]


@dataclass
class Cell:
    samples: list[float] = field(default_factory=list)
    members: list[Any] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.samples)

    @property
    def mean(self) -> float:
        return float(np.mean(self.samples))


@dataclass
class BinGrid:
    geometry: BinSpec
    cells: dict[tuple[int, int], Cell] = field(default_factory=dict)
    outside: int = 0

    def means(self) -> dict[tuple[int, int], float]:
        return {k: c.mean for k, c in sorted(self.cells.items())}

    def cell_bounds(self, key: tuple[int, int]) -> tuple[float, float, float, float]:
        li, ci = key
        g = self.geometry
        return g.l_edges[li], g.l_edges[li + 1], g.c_edges[ci], g.c_edges[ci + 1]

    def __len__(self):
        return len(self.cells)


def aggregate_points(records: Iterable[tuple[float | None, float, float]], geometry: BinSpec, members: Iterable[Any] | None = None) -> BinGrid:
    """Bin ``(L, C, value)`` records; values outside the geometry are counted, not binned."""
    grid = BinGrid(geometry)
    members = iter(members) if members is not None else None
    for L, C, value in records:
        member = next(members) if members is not None else None
        idx = bin_index(L, C, geometry)
        if idx is None:
            grid.outside += 1
            continue
        cell = grid.cells.setdefault(idx, Cell())
        cell.samples.append(float(value))
        cell.members.append(member)
    return grid


def coarse_geometry(points: Sequence[tuple[float, float]], l_bins: int = 9, c_bins: int = 6) -> BinSpec:
    """Uniform grid spanning the observed (L, C) ranges."""
    arr = np.asarray(points, dtype=np.float64)
    ranges = []
    for col in (0, 1):
        lo, hi = float(arr[:, col].min()), float(arr[:, col].max())
        if hi <= lo:
            hi = lo + 1.0
        ranges.append((lo, hi))
    return BinSpec.uniform(ranges[0], ranges[1], l_bins, c_bins)


def coarse_grid(records: Sequence[tuple[float, float, float]], l_bins: int = 9, c_bins: int = 6, members=None) -> BinGrid:
    """Aggregate records on a coarse uniform grid; only occupied cells are kept."""
    if not records:
        raise ValueError("coarse_grid needs at least one record")
    geometry = coarse_geometry([(L, C) for L, C, _ in records], l_bins, c_bins)
    return aggregate_points(records, geometry, members)
