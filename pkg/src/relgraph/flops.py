"""Multiply-add accounting for masked networks and width matching to a FLOPS budget."""

from __future__ import annotations

from dataclasses import dataclass

from .generators import complete
from .graph import Graph, GraphError
from .translate import NetworkSpec, relational_cnn_flops_spec, relational_mlp_spec

# Reference budgets quoted for the complete-graph baselines (documentation only;
# stem/head details of the conv nets are not recoverable exactly).
PAPER_REFERENCE_FLOPS = {
    "mlp": 2.89e6,
    "resnet34": 3.66e9,
    "resnet34_sep": 0.55e9,
    "resnet50": 4.09e9,
    "efficientnet_b0": 0.39e9,
    "cnn8": 0.17e9,
}


class FlopsError(GraphError):
    pass


def mlp_flops(spec: NetworkSpec) -> int:
    """Dense layers cost in*out, masked layers cost their trainable entries."""
    return sum(spec.masked_entries(layer) for layer in range(spec.layers.num_layers))


def cnn_flops(spec: NetworkSpec) -> int:
    if spec.kernel_areas is None or spec.spatial is None:
        raise FlopsError("cnn_flops needs per-layer kernel areas and spatial sizes")
    total = 0
    for layer in range(spec.layers.num_layers):
        side = spec.spatial[layer]
        total += spec.kernel_areas[layer] * side * side * spec.masked_entries(layer)
    return total


def spec_flops(spec: NetworkSpec) -> int:
    return cnn_flops(spec) if spec.kind == "cnn" else mlp_flops(spec)


@dataclass(frozen=True)
class FlopsBudget:
    reference: int
    tolerance: float = 0.005

    def __post_init__(self):
        if self.reference <= 0:
            raise FlopsError("reference FLOPS must be positive")
        if not 0 < self.tolerance <= 0.05:
            raise FlopsError("tolerance must lie in (0, 0.05]")

    def deviation(self, flops: int) -> float:
        return (flops - self.reference) / self.reference


@dataclass(frozen=True)
class MlpTemplate:
    input_dim: int = 3072
    hidden_dim: int = 512
    hidden_layers: int = 5
    output_dim: int = 10

    @property
    def base_widths(self) -> tuple[int, ...]:
        return (self.hidden_dim,)

    def build(self, g: Graph, widths) -> NetworkSpec:
        return relational_mlp_spec(g, self.input_dim, int(widths[0]), self.hidden_layers, self.output_dim)


@dataclass(frozen=True)
class CnnTemplate:
    """Default: ResNet-style 7x7 stem, three 3x3 stages of two convs, linear head."""

    stage_widths: tuple[int, ...] = (64, 128, 256)
    stage_depths: tuple[int, ...] = (2, 2, 2)
    kernel_area: int = 9
    spatial_sizes: tuple[int, ...] = (28, 14, 7)
    in_channels: int = 3
    stem_kernel_area: int | None = 49
    stem_spatial: int | None = 112
    num_classes: int | None = 1000

    @property
    def base_widths(self) -> tuple[int, ...]:
        return self.stage_widths

    def build(self, g: Graph, widths) -> NetworkSpec:
        return relational_cnn_flops_spec(
            g,
            widths,
            self.stage_depths,
            self.kernel_area,
            self.spatial_sizes,
            in_channels=self.in_channels,
            stem_kernel_area=self.stem_kernel_area,
            stem_spatial=self.stem_spatial,
            num_classes=self.num_classes,
        )


def reference_budget(template, n: int = 1, tolerance: float = 0.005) -> FlopsBudget:
    """Budget of the complete-graph baseline at the template's base widths."""
    spec = template.build(complete(n), template.base_widths)
    return FlopsBudget(spec_flops(spec), tolerance)


@dataclass(frozen=True)
class WidthMatch:
    widths: tuple[int, ...]
    flops: int
    deviation: float
    within_tolerance: bool

    @property
    def width(self) -> int:
        return self.widths[0]

    def to_dict(self) -> dict:
        return {
            "widths": list(self.widths),
            "flops": self.flops,
            "deviation": self.deviation,
            "within_tolerance": self.within_tolerance,
        }


def _result(budget: FlopsBudget, widths, flops: int) -> WidthMatch:
    dev = budget.deviation(flops)
    return WidthMatch(tuple(int(w) for w in widths), int(flops), dev, 0 <= dev <= budget.tolerance)


def _w_max(template, w_max):
    return w_max if w_max is not None else 64 * max(template.base_widths)


def match_width_uniform(g: Graph, budget: FlopsBudget, arch=None, w_max: int | None = None) -> WidthMatch:
    """Smallest common width >= n whose FLOPS reach the reference.

    FLOPS grow strictly with width, so a bracketing binary search returns the
    same width as scanning upward one at a time.
    """
    arch = arch or MlpTemplate()
    hi_cap = _w_max(arch, w_max)
    n_stages = len(arch.base_widths)

    def flops_at(w):
        return spec_flops(arch.build(g, [w] * n_stages))

    lo = g.n
    if flops_at(lo) >= budget.reference:
        return _result(budget, [lo] * n_stages, flops_at(lo))
    if flops_at(hi_cap) < budget.reference:
        raise FlopsError(f"no width in [{g.n}, {hi_cap}] reaches {budget.reference} FLOPS")
    hi = hi_cap  # invariant: flops(lo) < ref <= flops(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if flops_at(mid) >= budget.reference:
            hi = mid
        else:
            lo = mid
    return _result(budget, [hi] * n_stages, flops_at(hi))


def match_width_staged(g: Graph, budget: FlopsBudget, stage_ratios=None, arch=None, w_max: int | None = None) -> WidthMatch:
    """Stage-by-stage width matching, narrowest stage first.

    For the narrowest unfixed stage, its width is increased by 1 from n while
    wider unfixed stages follow the ratios; the first width whose total FLOPS
    reach the reference is fixed. Repeats over the remaining stages.
    """
    arch = arch or CnnTemplate()
    ratios = list(stage_ratios) if stage_ratios is not None else list(arch.base_widths)
    if len(ratios) != len(arch.base_widths) or min(ratios) <= 0:
        raise FlopsError("stage_ratios must be positive, one per stage")
    hi_cap = _w_max(arch, w_max)
    order = sorted(range(len(ratios)), key=lambda s: ratios[s])
    fixed: dict[int, int] = {}
    flops = None
    for pos, s in enumerate(order):
        remaining = order[pos:]
        for w in range(g.n, hi_cap + 1):
            widths = [fixed.get(t, 0) for t in range(len(ratios))]
            for t in remaining:
                widths[t] = max(g.n, round(w * ratios[t] / ratios[s]))
            flops = spec_flops(arch.build(g, widths))
            if flops >= budget.reference:
                break
        else:
            raise FlopsError(f"stage {s}: no width in [{g.n}, {hi_cap}] reaches {budget.reference} FLOPS")
        fixed[s] = w
    widths = [fixed[t] for t in range(len(ratios))]
    return _result(budget, widths, spec_flops(arch.build(g, widths)))
