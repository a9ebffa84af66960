"""Statistics over experiment records: bin aggregation, sweet spots, correlations, U-shape fits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .generators import make_rng
from .measures import GraphMeasures
from .sampler import BinGrid, BinSpec, Cell, aggregate_points

# Reported sweet spot for the 5-layer MLP on CIFAR-10 (documentation constant;
# needs full-scale training to reproduce).
PAPER_MLP_CIFAR10_SWEET_SPOT = {"C": (0.10, 0.50), "L": (1.82, 2.75)}
PAPER_EPOCH3_CORRELATION = 0.93
PAPER_52_SAMPLE_CORRELATION = 0.90


class AnalysisError(ValueError):
    pass


@dataclass
class ExperimentRecord:
    graph_id: str
    measures: GraphMeasures | None
    width: int | None
    flops: int | None
    seed: int
    final_error: float | None
    curve: list[float] = field(default_factory=list)
    status: str = "ok"
    meta: dict = field(default_factory=dict)

    @property
    def L(self) -> float | None:
        return self.measures.avg_path_length if self.measures is not None else None

    @property
    def C(self) -> float | None:
        return self.measures.clustering if self.measures is not None else None

    def to_dict(self) -> dict:
        return {
            "graph_id": self.graph_id,
            "measures": self.measures.to_dict() if self.measures is not None else None,
            "width": self.width,
            "flops": self.flops,
            "seed": self.seed,
            "final_error": self.final_error,
            "curve": list(self.curve),
            "status": self.status,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentRecord":
        m = d.get("measures")
        return cls(
            graph_id=d["graph_id"],
            measures=GraphMeasures(**m) if m is not None else None,
            width=d.get("width"),
            flops=d.get("flops"),
            seed=d.get("seed", 0),
            final_error=d.get("final_error"),
            curve=list(d.get("curve", [])),
            status=d.get("status", "ok"),
            meta=d.get("meta", {}),
        )


def aggregate(records: Iterable[ExperimentRecord], geometry: BinSpec) -> BinGrid:
    """Bin final errors by (L, C); disconnected or out-of-range records land in ``outside``."""
    records = [r for r in records if r.final_error is not None]
    return aggregate_points(((r.L, r.C, r.final_error) for r in records), geometry, members=records)


# --- Student t distribution ----------------------------------------------------


def _betacf(a: float, b: float, x: float, tol: float = 1e-15, max_iter: int = 10_000) -> float:
    """Continued fraction for the regularized incomplete beta (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise AnalysisError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_sf(t: float, df: float) -> float:
    """P(T >= t) for Student's t with ``df`` degrees of freedom."""
    t2 = t * t
    if t2 < df:
        # near t = 0 the other argument rounds to 1; integrate from the small side
        tail = 0.5 - 0.5 * regularized_incomplete_beta(0.5, df / 2.0, t2 / (df + t2))
    else:
        tail = 0.5 * regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t2))
    return tail if t >= 0 else 1.0 - tail


def welch_t(sample_a: Sequence[float], sample_b: Sequence[float]) -> tuple[float, float]:
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if len(a) < 2 or len(b) < 2:
        raise AnalysisError(f"t-test needs >= 2 samples per group, got {len(a)} and {len(b)}")
    va, vb = a.var(ddof=1) / len(a), b.var(ddof=1) / len(b)
    se2 = va + vb
    if se2 == 0:
        raise AnalysisError("t-test degenerate: both samples have zero variance")
    t = (a.mean() - b.mean()) / math.sqrt(se2)
    df = se2**2 / (va**2 / (len(a) - 1) + vb**2 / (len(b) - 1))
    return float(t), float(df)


def one_tailed_t_test(sample_a, sample_b) -> float:
    """Welch one-tailed p-value for H1: mean(a) > mean(b)."""
    t, df = welch_t(sample_a, sample_b)
    return student_t_sf(t, df)


# --- sweet spot ------------------------------------------------------------------


@dataclass(frozen=True)
class SweetSpot:
    best_bin: tuple[int, int]
    member_bins: frozenset
    rectangle: tuple[float, float, float, float]  # L_min, L_max, C_min, C_max
    alpha: float
    p_values: dict = field(default_factory=dict, compare=False)
    untested_bins: tuple = ()

    def to_dict(self) -> dict:
        L_min, L_max, C_min, C_max = self.rectangle
        return {
            "best_bin": list(self.best_bin),
            "member_bins": sorted(list(b) for b in self.member_bins),
            "rectangle": {"L_min": L_min, "L_max": L_max, "C_min": C_min, "C_max": C_max},
            "alpha": self.alpha,
            "p_values": {f"{k[0]},{k[1]}": v for k, v in sorted(self.p_values.items())},
            "untested_bins": [list(b) for b in self.untested_bins],
        }


def _worse_p(cell_samples, best_samples) -> float:
    try:
        return one_tailed_t_test(cell_samples, best_samples)
    except AnalysisError:
        # both constant: the ordering of the means is certain
        diff = np.mean(cell_samples) - np.mean(best_samples)
        return 0.5 if diff == 0 else (0.0 if diff > 0 else 1.0)


def sweet_spot(grid: BinGrid, alpha: float = 0.05) -> SweetSpot:
    """Bins not significantly worse than the best bin, and their bounding rectangle.

    Only bins with >= 2 samples take part; single-sample bins are reported in
    ``untested_bins``. Ties for the best mean go to the lowest (li, ci).
    """
    testable = {k: c for k, c in grid.cells.items() if c.count >= 2}
    if not testable:
        raise AnalysisError("no bin has >= 2 samples; cannot run t-tests")
    best = min(sorted(testable), key=lambda k: testable[k].mean)
    members = {best}
    p_values = {}
    for key in sorted(testable):
        if key == best:
            continue
        p = _worse_p(testable[key].samples, testable[best].samples)
        p_values[key] = p
        if p >= alpha:
            members.add(key)
    bounds = [grid.cell_bounds(k) for k in members]
    rect = (
        float(min(b[0] for b in bounds)),
        float(max(b[1] for b in bounds)),
        float(min(b[2] for b in bounds)),
        float(max(b[3] for b in bounds)),
    )
    untested = tuple(sorted(k for k, c in grid.cells.items() if c.count < 2))
    return SweetSpot(best, frozenset(members), rect, alpha, p_values, untested)


# --- correlation and regression ----------------------------------------------


def pearson(xs, ys) -> float:
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 2:
        raise AnalysisError("pearson needs two equal-length sequences of >= 2 values")
    dx, dy = x - x.mean(), y - y.mean()
    sx, sy = math.sqrt(float(dx @ dx)), math.sqrt(float(dy @ dy))
    if sx == 0 or sy == 0:
        raise AnalysisError("pearson undefined for zero variance")
    return float(np.clip((dx @ dy) / (sx * sy), -1.0, 1.0))


@dataclass(frozen=True)
class QuadraticFit:
    a: float
    b: float
    c: float
    residual: float

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        return self.a * x * x + self.b * x + self.c

    def __iter__(self):
        return iter((self.a, self.b, self.c))


def polyfit2(xs, ys) -> QuadraticFit:
    """Least-squares y ~ a*x^2 + b*x + c via column-scaled normal equations."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if len(np.unique(x)) < 3:
        raise AnalysisError("polyfit2 needs at least 3 distinct x values")
    design = np.column_stack([x * x, x, np.ones_like(x)])
    scale = np.linalg.norm(design, axis=0)
    ds = design / scale
    coef = np.linalg.solve(ds.T @ ds, ds.T @ y) / scale
    resid = y - design @ coef
    return QuadraticFit(float(coef[0]), float(coef[1]), float(coef[2]), float(resid @ resid))


def curve_correlation(records: Sequence[ExperimentRecord], epoch: int) -> float:
    """Pearson r between errors after ``epoch`` (1-based) and final errors."""
    if any(len(r.curve) < epoch for r in records):
        raise AnalysisError(f"every record needs at least {epoch} epochs")
    early = [r.curve[epoch - 1] for r in records]
    final = [r.curve[-1] for r in records]
    return pearson(early, final)


def subsample_grid(grid: BinGrid, k: int, seed: int = 0) -> BinGrid:
    """Keep ``k`` samples in total, at least one per cell, chosen uniformly."""
    keys = sorted(grid.cells)
    if k < len(keys):
        raise AnalysisError(f"k={k} would empty cells ({len(keys)} occupied)")
    rng = make_rng(seed)
    keep: dict = {}
    leftovers = []
    for key in keys:
        samples = grid.cells[key].samples
        first = int(rng.integers(len(samples)))
        keep[key] = [first]
        leftovers.extend((key, i) for i in range(len(samples)) if i != first)
    extra = k - len(keys)
    if extra > len(leftovers):
        raise AnalysisError(f"k={k} exceeds the {len(keys) + len(leftovers)} available samples")
    for j in rng.choice(len(leftovers), size=extra, replace=False):
        key, i = leftovers[int(j)]
        keep[key].append(i)
    out = BinGrid(grid.geometry, outside=grid.outside)
    for key in keys:
        src = grid.cells[key]
        idx = sorted(keep[key])
        out.cells[key] = Cell([src.samples[i] for i in idx], [src.members[i] for i in idx])
    return out


def subsample_correlation(grid_full: BinGrid, k: int, seed: int = 0) -> float:
    """Pearson r between cell means of a k-sample sub-grid and of the full grid."""
    sub = subsample_grid(grid_full, k, seed)
    keys = sorted(grid_full.cells)
    return pearson([sub.cells[key].mean for key in keys], [grid_full.cells[key].mean for key in keys])
