import numpy as np
import pytest

from finprint.curves import PlanarCurve
from finprint.matching import contour_f_measure, match_pixel_sets, rasterize


def hline(y, x0=0.0, x1=100.0, n=101):
    return PlanarCurve(np.column_stack([np.linspace(x0, x1, n), np.full(n, y)]))


class TestRasterize:
    def test_horizontal_line_pixels(self):
        px = rasterize(hline(0.0))
        assert len(px) == 101
        assert (px[:, 1] == 0).all()

    def test_closed_curve_includes_wrap_segment(self):
        sq = PlanarCurve(np.array([[0.0, 0.0], [4.0, 0.0], [4.0, 4.0], [0.0, 4.0]]), closed=True)
        px = set(map(tuple, rasterize(sq)))
        assert (0, 2) in px  # on the wrap edge


class TestFMeasure:
    def test_identical_curves(self):
        assert contour_f_measure(hline(0.0), hline(0.0)) == 1.0

    def test_disjoint_beyond_tolerance(self):
        assert contour_f_measure(hline(0.0), hline(50.0), tol=2.0) == 0.0

    def test_half_coverage(self):
        half = hline(0.0, 0.0, 50.0, n=51)
        f = contour_f_measure(half, hline(0.0))
        # P = 1, R = 51/101, F = 2PR/(P+R)
        p, r = 1.0, 51.0 / 101.0
        assert f == pytest.approx(2 * p * r / (p + r))

    def test_symmetry(self):
        rng = np.random.default_rng(2)
        a = PlanarCurve(np.cumsum(rng.normal(size=(40, 2)), axis=0) * 3.0)
        b = PlanarCurve(np.cumsum(rng.normal(size=(40, 2)), axis=0) * 3.0)
        assert contour_f_measure(a, b) == pytest.approx(contour_f_measure(b, a))

    def test_empty_truth_raises(self):
        with pytest.raises(ValueError):
            match_pixel_sets(np.array([[0, 0]]), np.empty((0, 2), dtype=int), 2.0)

    def test_matching_is_one_to_one(self):
        # 3 candidate pixels crowd one truth pixel: only one can match.
        cand = np.array([[0, 0], [1, 0], [0, 1]])
        truth = np.array([[0, 0]])
        stats = match_pixel_sets(cand, truth, tol=1.5)
        assert stats.matched == 1
        assert stats.precision == pytest.approx(1.0 / 3.0)
        assert stats.recall == 1.0

    def test_exact_beats_greedy_on_crossing_pairs(self):
        # Greedy takes the single closest pair and strands a pixel; the exact
        # assignment matches both.
        cand = np.array([[0.0, 0.0], [2.0, 0.0]])
        truth = np.array([[1.0, 0.0], [2.5, 0.0]])
        stats = match_pixel_sets(cand, truth, tol=2.0)
        assert stats.exact
        assert stats.matched == 2
