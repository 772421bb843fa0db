import csv

import numpy as np
import pytest

from geopref.degree import (DegreeLawParams, compare, degree_table,
                            mean_degree, tail_index, theorem3_bracket,
                            theoretical_cdf, theoretical_pmf, write_degree_csv)
from geopref.errors import DegreeBelowM, EmptyHistogram, ParameterOutOfRange


class TestTheoreticalLaw:
    def test_tree_case_closed_form(self):
        # m=1 at unit fitness: q(d) = 4 / (d (d+1) (d+2))
        params = DegreeLawParams(1, 1.0)
        d = np.arange(1, 101)
        closed = 4.0 / (d * (d + 1.0) * (d + 2.0))
        assert np.max(np.abs(theoretical_pmf(params, d) - closed)) <= 1e-12

    @pytest.mark.parametrize("m,phi", [(1, 1.0), (2, 0.7), (3, 1.8),
                                       (1, 0.3), (5, 1.2)])
    def test_stationarity_recursion(self, m, phi):
        params = DegreeLawParams(m, phi)
        d = np.arange(m, 400)
        q = theoretical_pmf(params, d)
        # boundary: q(m) (1 + phi m / 2) = 1
        assert q[0] * (1 + phi * m / 2) == pytest.approx(1.0, abs=1e-12)
        lhs = q[1:] * (1.0 + phi * d[1:] / 2.0)
        rhs = q[:-1] * (phi * d[:-1] / 2.0)
        assert np.max(np.abs(lhs - rhs)) <= 1e-12

    @pytest.mark.parametrize("m,phi", [(1, 1.0), (2, 0.7), (3, 1.8),
                                       (1, 0.3), (5, 1.2)])
    def test_cdf_telescopes_direct_sum(self, m, phi):
        params = DegreeLawParams(m, phi)
        d = np.arange(m, 200)
        direct = np.cumsum(theoretical_pmf(params, d))
        assert np.max(np.abs(direct - theoretical_cdf(params, d))) <= 1e-12

    def test_total_mass(self):
        for phi in (0.3, 1.0, 1.9):
            params = DegreeLawParams(2, phi)
            assert theoretical_cdf(params, 10 ** 6) >= 1.0 - 1e-3

    def test_scalar_input_gives_scalar(self):
        params = DegreeLawParams(2, 1.0)
        assert np.isscalar(theoretical_pmf(params, 5))
        assert np.isscalar(theoretical_cdf(params, 5))

    def test_degree_below_m_rejected(self):
        params = DegreeLawParams(3, 1.0)
        with pytest.raises(DegreeBelowM):
            theoretical_pmf(params, 2)

    @pytest.mark.parametrize("m,phi", [(0, 1.0), (1, 0.0), (1, 2.0),
                                       (1.5, 1.0)])
    def test_params_validated(self, m, phi):
        with pytest.raises(ParameterOutOfRange):
            DegreeLawParams(m, phi)


class TestTailAndMean:
    def test_tail_index_values(self):
        assert tail_index(1.0) == pytest.approx(2.0)
        assert tail_index(0.5) == pytest.approx(4.0)
        assert tail_index(1.999) > 1.0
        assert tail_index(1.999) == pytest.approx(2 / 1.999)

    def test_mean_matches_closed_form(self):
        rng = np.random.default_rng(23)
        for _ in range(50):
            m = int(rng.integers(1, 8))
            phi = float(rng.uniform(0.2, 1.9))
            exact = 2.0 * m / (2.0 - phi)
            assert abs(mean_degree(DegreeLawParams(m, phi)) - exact) <= 1e-6 * exact

    def test_mean_insensitive_to_split_point(self):
        params = DegreeLawParams(2, 1.3)
        a = mean_degree(params, split=500)
        b = mean_degree(params, split=5000)
        assert a == pytest.approx(b, rel=1e-10)


class TestBracket:
    def test_orders_and_collapses(self):
        lo, hi = theorem3_bracket(1, 1.2, 0.8, 10)
        assert 0 < lo < hi < 1
        lo2, hi2 = theorem3_bracket(1, 1.0, 1.0, 10, delta=1e-12)
        assert hi2 - lo2 <= 1e-9

    def test_contains_pointwise_law(self):
        params = DegreeLawParams(2, 1.1)
        for d in (2, 5, 20):
            lo, hi = theorem3_bracket(2, 1.2, 1.0, d)
            assert lo <= theoretical_cdf(params, d) <= hi

    def test_vectorized(self):
        d = np.arange(1, 31)
        lo, hi = theorem3_bracket(1, 1.05, 0.95, d)
        assert lo.shape == d.shape
        assert np.all(lo <= hi)

    def test_range_validated(self):
        with pytest.raises(ParameterOutOfRange):
            theorem3_bracket(1, 0.8, 1.2, 5)
        with pytest.raises(ParameterOutOfRange):
            theorem3_bracket(1, 2.0, 1.0, 5)
        with pytest.raises(ParameterOutOfRange):
            theorem3_bracket(1, 1.0, 1e-12, 5, delta=1e-9)


class TestCompare:
    def test_exact_histogram_has_zero_distance(self):
        params = DegreeLawParams(1, 1.0)
        scale = 10 ** 7
        hist = {d: int(round(scale * theoretical_pmf(params, d)))
                for d in range(1, 51)}
        rep = compare(hist, params, d_max=50)
        assert rep.tv_distance <= 1e-3
        assert rep.d_max == 50

    def test_window_renormalization(self):
        # counts beyond d_max must not distort the distance
        params = DegreeLawParams(1, 1.0)
        hist = {1: 667, 2: 167, 1000: 999999}
        rep = compare(hist, params, d_max=2)
        q = theoretical_pmf(params, np.array([1, 2]))
        q = q / q.sum()
        expected = 0.5 * (abs(667 / 834 - q[0]) + abs(167 / 834 - q[1]))
        assert rep.tv_distance == pytest.approx(expected, abs=1e-12)

    def test_empty_histogram_rejected(self):
        with pytest.raises(EmptyHistogram):
            compare({}, DegreeLawParams(1, 1.0), 50)
        with pytest.raises(EmptyHistogram):
            compare({100: 5}, DegreeLawParams(1, 1.0), 50)

    def test_tail_slope_recovers_exponent(self):
        # a histogram drawn exactly from the law should show the
        # theoretical log-log pmf slope -(1 + 2/phi)
        params = DegreeLawParams(1, 1.0)
        scale = 10 ** 9
        hist = {d: int(round(scale * theoretical_pmf(params, d)))
                for d in range(1, 201)}
        rep = compare(hist, params, d_max=200)
        assert rep.tail_slope is not None
        assert abs(rep.tail_slope - (-(1 + 2 / 1.0))) <= 0.3


class TestTableAndCsv:
    def test_table_layout(self):
        params = DegreeLawParams(2, 1.0)
        hist = {2: 10, 3: 5, 4: 2}
        table = degree_table(hist, params, d_max=6, location="1")
        assert table.vertex_count == 17
        assert [r[0] for r in table.rows] == [2, 3, 4, 5, 6]
        assert table.rows[0][1] == 10
        assert table.rows[0][2] == pytest.approx(10 / 17)
        assert table.truncation_remainder == pytest.approx(
            1.0 - theoretical_cdf(params, 6), abs=1e-15)

    def test_csv_round_trip(self, tmp_path):
        params = DegreeLawParams(1, 1.0)
        hist = {1: 7, 2: 4, 5: 1}
        table = degree_table(hist, params, d_max=5, location="0")
        path = tmp_path / "deg.csv"
        write_degree_csv(table, path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["location", "d", "empirical_count",
                           "empirical_fraction", "theoretical_mass",
                           "cum_empirical", "cum_theoretical"]
        assert len(rows) == 1 + 5
        # cumulative columns agree with the pointwise ones
        cum = 0.0
        for row in rows[1:]:
            cum += float(row[3])
            assert float(row[5]) == pytest.approx(cum, abs=1e-15)
        assert float(rows[-1][5]) == pytest.approx(1.0, abs=1e-12)
        raw = open(path, "rb").read()
        assert b"\r" not in raw
