import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special, stats

from relgraph.analyze import (
    PAPER_MLP_CIFAR10_SWEET_SPOT,
    AnalysisError,
    ExperimentRecord,
    aggregate,
    curve_correlation,
    one_tailed_t_test,
    pearson,
    polyfit2,
    regularized_incomplete_beta,
    student_t_sf,
    subsample_correlation,
    subsample_grid,
    sweet_spot,
    welch_t,
)
from relgraph.measures import GraphMeasures
from relgraph.sampler import BinGrid, BinSpec, Cell, aggregate_points


def scipy_p(a, b):
    return stats.ttest_ind(a, b, equal_var=False, alternative="greater").pvalue


def planted_grid(planted, shape=(6, 5), good=0.20, bad=0.40, size=10, seed=0):
    rng = np.random.default_rng(seed)
    noise = rng.normal(0, 0.01, size)
    geom = BinSpec.uniform((1.0, 4.0), (0.0, 1.0), *shape)
    grid = BinGrid(geom)
    for li in range(shape[0]):
        for ci in range(shape[1]):
            base = good if (li, ci) in planted else bad
            grid.cells[(li, ci)] = Cell(list(base + noise), [None] * size)
    return grid


def record(gid, L, C, err, curve=None, seed=0):
    m = GraphMeasures(L, C, 4.0, 0.5, 0.5, 1.0)
    return ExperimentRecord(gid, m, 32, 1000, seed, err, curve if curve is not None else [err])


class TestStudentT:
    def test_incomplete_beta(self):
        for a, b, x in [(0.5, 0.5, 0.3), (2.0, 3.0, 0.9), (30.0, 0.5, 0.97), (1.5, 12.0, 0.01)]:
            assert regularized_incomplete_beta(a, b, x) == pytest.approx(special.betainc(a, b, x), abs=1e-12)

    @given(t=st.floats(-30, 30), df=st.floats(1.0, 500.0))
    @settings(max_examples=200)
    def test_sf_matches_scipy(self, t, df):
        assert student_t_sf(t, df) == pytest.approx(stats.t.sf(t, df), abs=1e-10)

    def test_identical_samples(self):
        assert one_tailed_t_test([0.1, 0.2, 0.3], [0.1, 0.2, 0.3]) == pytest.approx(0.5)

    def test_clear_shift(self):
        a, b = [0.40, 0.41, 0.42], [0.30, 0.31, 0.32]
        p = one_tailed_t_test(a, b)
        assert p < 0.001
        assert p == pytest.approx(scipy_p(a, b), rel=1e-8)
        assert one_tailed_t_test(b, a) > 0.5

    def test_matches_scipy_random(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            a = rng.normal(rng.uniform(-1, 1), rng.uniform(0.1, 2), rng.integers(2, 30))
            b = rng.normal(rng.uniform(-1, 1), rng.uniform(0.1, 2), rng.integers(2, 30))
            assert one_tailed_t_test(a, b) == pytest.approx(scipy_p(a, b), abs=1e-10)

    def test_swap_complements(self):
        a, b = [0.3, 0.5, 0.45, 0.6], [0.2, 0.25, 0.4]
        assert one_tailed_t_test(a, b) + one_tailed_t_test(b, a) == pytest.approx(1.0)

    def test_monotone_in_shift(self):
        b = [0.1, 0.2, 0.15, 0.3]
        ps = [one_tailed_t_test([0.1 + d, 0.2 + d, 0.25 + d], b) for d in np.linspace(-0.2, 0.2, 9)]
        assert all(x > y for x, y in zip(ps, ps[1:]))

    def test_degenerate(self):
        with pytest.raises(AnalysisError):
            welch_t([0.1], [0.2, 0.3])
        with pytest.raises(AnalysisError):
            welch_t([0.1, 0.1], [0.2, 0.2])


class TestSweetSpot:
    def test_recovers_planted_rectangle(self):
        planted = {(1, 1), (1, 2), (2, 1), (2, 2)}
        grid = planted_grid(planted)
        spot = sweet_spot(grid, 0.05)
        assert spot.member_bins == planted
        assert spot.best_bin == (1, 1)
        bounds = [grid.cell_bounds(k) for k in planted]
        assert spot.rectangle == (
            min(b[0] for b in bounds),
            max(b[1] for b in bounds),
            min(b[2] for b in bounds),
            max(b[3] for b in bounds),
        )
        best = grid.cells[spot.best_bin].samples
        oracle = {k for k, c in grid.cells.items() if k == spot.best_bin or scipy_p(c.samples, best) >= 0.05}
        assert oracle == spot.member_bins

    def test_all_equal(self):
        grid = planted_grid(set(), good=0.3, bad=0.3)
        spot = sweet_spot(grid)
        assert spot.member_bins == set(grid.cells)
        assert spot.rectangle == (1.0, 4.0, 0.0, 1.0)

    def test_single_sample_bins_reported(self):
        grid = planted_grid({(0, 0), (0, 1)})
        grid.cells[(5, 4)] = Cell([0.01], [None])
        spot = sweet_spot(grid)
        assert (5, 4) in spot.untested_bins and (5, 4) not in spot.member_bins

    def test_membership_grows_as_alpha_falls(self):
        rng = np.random.default_rng(3)
        geom = BinSpec.uniform((1, 4), (0, 1), 4, 4)
        grid = BinGrid(geom)
        for li in range(4):
            for ci in range(4):
                grid.cells[(li, ci)] = Cell(list(rng.normal(0.2 + 0.01 * (li + ci), 0.02, 6)), [None] * 6)
        sizes = [len(sweet_spot(grid, a).member_bins) for a in (0.2, 0.1, 0.05, 0.01, 0.001)]
        assert sizes == sorted(sizes)

    def test_no_testable_bins(self):
        grid = BinGrid(BinSpec.uniform((1, 2), (0, 1), 2, 2))
        grid.cells[(0, 0)] = Cell([0.1], [None])
        with pytest.raises(AnalysisError):
            sweet_spot(grid)

    def test_documentation_constant(self):
        assert PAPER_MLP_CIFAR10_SWEET_SPOT == {"C": (0.10, 0.50), "L": (1.82, 2.75)}


class TestAggregate:
    def test_three_in_one_cell(self):
        geom = BinSpec.uniform((1, 3), (0, 1), 2, 2)
        grid = aggregate([record(str(i), 1.2, 0.2, e) for i, e in enumerate((0.3, 0.4, 0.5))], geom)
        assert grid.cells[(0, 0)].mean == pytest.approx(0.4) and grid.cells[(0, 0)].count == 3

    def test_empty(self):
        assert aggregate([], BinSpec.uniform((1, 3), (0, 1), 2, 2)).cells == {}

    def test_disconnected_outside(self):
        r = ExperimentRecord("x", GraphMeasures(None, 0.0, 0.0, 0.0, 0.0, 0.0), None, None, 0, 0.5)
        grid = aggregate([r], BinSpec.uniform((1, 3), (0, 1), 2, 2))
        assert grid.outside == 1 and not grid.cells

    def test_record_round_trip(self):
        r = record("g", 2.0, 0.4, 0.3, [0.5, 0.3])
        assert ExperimentRecord.from_dict(r.to_dict()) == r


class TestRegression:
    def test_pearson(self):
        xs = np.arange(10.0)
        assert pearson(xs, 2 * xs + 1) == pytest.approx(1.0)
        assert pearson(xs, -xs) == pytest.approx(-1.0)
        assert pearson([1, 2, 3, 4], [2, 1, 4, 3]) == pytest.approx(0.6)
        with pytest.raises(AnalysisError):
            pearson([1, 1, 1], [1, 2, 3])

    def test_pearson_invariances(self):
        rng = np.random.default_rng(0)
        x, y = rng.normal(size=30), rng.normal(size=30)
        r = pearson(x, y)
        assert pearson(3 * x + 2, 0.5 * y - 1) == pytest.approx(r)
        assert pearson(-x, y) == pytest.approx(-r)
        assert r == pytest.approx(stats.pearsonr(x, y)[0])

    def test_polyfit_exact(self):
        xs = np.linspace(1, 4, 20)
        fit = polyfit2(xs, 0.7 * xs**2 - 2 * xs + 3)
        np.testing.assert_allclose(tuple(fit), (0.7, -2.0, 3.0), atol=1e-9)

    def test_polyfit_matches_numpy(self):
        rng = np.random.default_rng(2)
        xs = rng.uniform(1, 4, 80)
        ys = 0.1 * (xs - 2.4) ** 2 + rng.normal(0, 0.01, 80)
        fit = polyfit2(xs, ys)
        np.testing.assert_allclose(tuple(fit), np.polyfit(xs, ys, 2), rtol=1e-8)
        assert fit.a > 0
        lin = np.polyfit(xs, ys, 1)
        assert fit.residual <= np.sum((ys - np.polyval(lin, xs)) ** 2)

    def test_polyfit_linear(self):
        xs = np.linspace(0, 1, 11)
        fit = polyfit2(xs, 3 * xs + 1)
        assert abs(fit.a) < 1e-9 and fit.b == pytest.approx(3.0)

    def test_polyfit_rank_deficient(self):
        with pytest.raises(AnalysisError):
            polyfit2([2, 2, 2, 2], [1, 2, 3, 4])


class TestCorrelations:
    def test_curve_final_epoch(self):
        rng = np.random.default_rng(0)
        recs = [record(str(i), 2, 0.3, 0, list(rng.random(5))) for i in range(10)]
        assert curve_correlation(recs, 5) == pytest.approx(1.0)
        with pytest.raises(AnalysisError):
            curve_correlation(recs, 6)

    def test_monotone_curves(self):
        rng = np.random.default_rng(1)
        recs = []
        for i in range(20):
            final = rng.uniform(0.1, 0.5)
            recs.append(record(str(i), 2, 0.3, final, list(final + 0.3 * np.exp(-np.arange(10)) + rng.normal(0, 0.005, 10))))
        assert curve_correlation(recs, 3) > 0.9

    def test_subsample_all(self):
        grid = planted_grid({(0, 0)})
        total = sum(c.count for c in grid.cells.values())
        assert subsample_correlation(grid, total) == pytest.approx(1.0)

    def test_subsample_low_noise(self):
        rng = np.random.default_rng(5)
        geom = BinSpec.uniform((1, 4), (0, 1), 9, 6)
        grid = aggregate_points(
            [(L, C, 0.2 + 0.1 * (L - 2.5) ** 2 + rng.normal(0, 0.002)) for L, C in zip(rng.uniform(1, 4, 3000), rng.uniform(0, 1, 3000))],
            geom,
        )
        assert subsample_correlation(grid, len(grid.cells), seed=2) > 0.95

    def test_subsample_keeps_every_cell(self):
        grid = planted_grid({(0, 0)})
        sub = subsample_grid(grid, 40, seed=1)
        assert set(sub.cells) == set(grid.cells)
        assert sum(c.count for c in sub.cells.values()) == 40
        with pytest.raises(AnalysisError):
            subsample_grid(grid, 10)
