import math

import numpy as np
import pytest

from relgraph.flops import (
    PAPER_REFERENCE_FLOPS,
    CnnTemplate,
    FlopsBudget,
    FlopsError,
    MlpTemplate,
    cnn_flops,
    match_width_staged,
    match_width_uniform,
    mlp_flops,
    reference_budget,
    spec_flops,
)
from relgraph.generators import complete, ws_flex
from relgraph.graph import new_graph, sparsity
from relgraph.translate import relational_cnn_flops_spec, relational_mlp_spec

BASELINE = 2_888_704


def scan_width(g, budget, arch=MlpTemplate(), w_hi=4096):
    for w in range(g.n, w_hi + 1):
        if spec_flops(arch.build(g, [w])) >= budget.reference:
            return w
    return None


class TestCounting:
    def test_baseline(self):
        spec = relational_mlp_spec(complete(64), 3072, 512, 5, 10)
        assert mlp_flops(spec) == 3072 * 512 + 5 * 512**2 + 512 * 10 == BASELINE
        assert f"{mlp_flops(spec):.2e}" == f"{PAPER_REFERENCE_FLOPS['mlp']:.2e}"

    def test_edgeless_two_nodes(self):
        spec = relational_mlp_spec(new_graph(2, []), 3072, 512, 5, 10)
        assert mlp_flops(spec) == BASELINE - 1_310_720 + 655_360

    def test_no_hidden_layers(self):
        assert mlp_flops(relational_mlp_spec(complete(4), 30, 8, 0, 5)) == 30 * 5

    def test_kernel_one_scales_by_area(self):
        g = ws_flex(16, 5, 0.4, 0)
        kw = dict(stem_kernel_area=None, stem_spatial=None, num_classes=None)
        one = cnn_flops(relational_cnn_flops_spec(g, (32,), (3,), 1, (1,), **kw))
        big = cnn_flops(relational_cnn_flops_spec(g, (32,), (3,), 1, (14,), **kw))
        assert big == 196 * one

    def test_density_proportional(self):
        kw = dict(stem_kernel_area=None, stem_spatial=None, num_classes=None, in_channels=32)
        n = 8
        dense = cnn_flops(relational_cnn_flops_spec(complete(n), (32,), (2,), 9, (7,), **kw))
        for g in (new_graph(n, []), ws_flex(n, 3.5, 0.0), ws_flex(n, 3.5, 0.7, 2)):
            masked = cnn_flops(relational_cnn_flops_spec(g, (32,), (2,), 9, (7,), **kw))
            # equal partitions: cost scales with the (2|E| + n) / n^2 block density
            assert masked * n * n == dense * (2 * g.num_edges + n)

    def test_cnn8_order_of_magnitude(self):
        f = spec_flops(CnnTemplate().build(complete(64), CnnTemplate().base_widths))
        assert f == 262_776_832
        assert 0.1 < f / 1e9 < 1.0

    @pytest.mark.xfail(strict=True, reason="stem/head of the 8-layer CNN are under-specified; default template lands at 0.26e9")
    def test_cnn8_within_two_percent(self):
        f = spec_flops(CnnTemplate().build(complete(64), CnnTemplate().base_widths))
        assert abs(f - PAPER_REFERENCE_FLOPS["cnn8"]) / PAPER_REFERENCE_FLOPS["cnn8"] <= 0.02


class TestBudget:
    def test_validation(self):
        with pytest.raises(FlopsError):
            FlopsBudget(0)
        with pytest.raises(FlopsError):
            FlopsBudget(100, 0.1)

    def test_reference(self):
        assert reference_budget(MlpTemplate()).reference == BASELINE


class TestUniform:
    def test_complete_is_fixed_point(self):
        r = match_width_uniform(complete(64), reference_budget(MlpTemplate()))
        assert r.width == 512 and r.deviation == 0 and r.within_tolerance

    def test_half_sparse_matches_scan(self):
        budget = reference_budget(MlpTemplate())
        g = ws_flex(64, 31.5, 0.3, 5)
        assert sparsity(g) == pytest.approx(0.5, abs=0.01)
        assert match_width_uniform(g, budget).width == scan_width(g, budget)

    def test_edgeless_two_nodes_quadratic(self):
        budget = reference_budget(MlpTemplate())
        r = match_width_uniform(new_graph(2, []), budget)
        # with equal halves, hidden cost is 5 * w^2 / 2
        root = (-3082 + math.sqrt(3082**2 + 4 * 2.5 * BASELINE)) / 5
        assert r.width in (math.floor(root), math.ceil(root))
        assert r.width == scan_width(new_graph(2, []), budget)
        assert r.deviation <= 0.005

    def test_sparser_is_wider(self):
        budget = reference_budget(MlpTemplate())
        widths = [match_width_uniform(ws_flex(64, k, 0.2, 1), budget).width for k in (8, 16, 32, 62)]
        assert widths == sorted(widths, reverse=True)

    def test_self_consistent(self):
        budget = reference_budget(MlpTemplate())
        g = ws_flex(64, 12.7, 0.6, 2)
        r = match_width_uniform(g, budget)
        f = mlp_flops(MlpTemplate().build(g, r.widths))
        assert f == r.flops and budget.deviation(f) == r.deviation

    def test_infeasible(self):
        with pytest.raises(FlopsError):
            match_width_uniform(new_graph(64, []), reference_budget(MlpTemplate()), w_max=100)


class TestStaged:
    def test_complete_recovers_template(self):
        arch = CnnTemplate()
        r = match_width_staged(complete(64), reference_budget(arch), (1, 2, 4), arch)
        assert r.widths == (64, 128, 256) and r.deviation == 0

    def test_single_stage_equals_uniform(self):
        arch = MlpTemplate()
        g = ws_flex(64, 20, 0.4, 3)
        budget = reference_budget(arch)
        assert match_width_staged(g, budget, (1,), arch).widths == match_width_uniform(g, budget, arch).widths

    def test_efficientnet_like_ratios(self):
        arch = CnnTemplate((16, 24, 40, 80), (1, 2, 2, 3), 9, (112, 56, 28, 14), stem_kernel_area=9, num_classes=1000)
        budget = reference_budget(arch)
        g = ws_flex(16, 4.5, 0.3, 7)
        r = match_width_staged(g, budget, arch.stage_widths, arch)
        assert r.deviation <= 0.005
        assert spec_flops(arch.build(g, r.widths)) == r.flops
        assert all(a <= b for a, b in zip(r.widths, r.widths[1:]))

    def test_bad_ratios(self):
        with pytest.raises(FlopsError):
            match_width_staged(complete(16), reference_budget(CnnTemplate()), (1, 2))
