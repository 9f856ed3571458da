import numpy as np
import pytest

from finprint import forest as rf
from finprint.curves import PlanarCurve, ScaleSpaceParams
from finprint.strokes import (
    RegionContour,
    Stroke,
    filter_regions,
    generate_stroke_pool,
    normal_histogram,
    region_keypoints,
    score_and_nms,
    stroke_features,
)

DET = ScaleSpaceParams(1.0, 4.0, 128)


def circle_region(r, rank, n=200, cx=0.0, cy=0.0):
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    pts = np.column_stack([cx + r * np.cos(t), cy + r * np.sin(t)])
    return RegionContour(PlanarCurve(pts, closed=True), rank)


def blob_region(rank, seed, r=60.0, wobble=0.25, n=220):
    rng = np.random.default_rng(seed)
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    radius = r * (1.0 + wobble * np.sin(3 * t + rng.uniform(0, 2 * np.pi))
                  + 0.5 * wobble * np.sin(5 * t + rng.uniform(0, 2 * np.pi)))
    pts = np.column_stack([radius * np.cos(t), radius * np.sin(t)])
    return RegionContour(PlanarCurve(pts, closed=True), rank)


class TestFilterRegions:
    def test_short_boundary_discarded(self):
        # Circumferences roughly 50, 200, 300 pixels.
        pool = [
            circle_region(50 / (2 * np.pi), 0),
            circle_region(200 / (2 * np.pi), 1),
            circle_region(300 / (2 * np.pi), 2),
        ]
        kept = filter_regions(pool, k=12)
        assert len(kept) == 2
        assert all(r.boundary.length >= 70 for r in kept)

    def test_duplicate_cluster_keeps_best_rank(self):
        a = circle_region(40, 3)
        b = circle_region(40, 5)
        kept = filter_regions([b, a], k=12)
        assert len(kept) == 1
        assert kept[0].hierarchy_rank == 3

    def test_top_k_by_rank(self):
        pool = [circle_region(30, rank, cx=rank * 100.0) for rank in range(15)]
        kept = filter_regions(pool, k=12)
        assert [r.hierarchy_rank for r in kept] == list(range(12))

    def test_empty_pool_raises(self):
        with pytest.raises(ValueError):
            filter_regions([], k=12)


class TestStrokePool:
    def test_two_keypoints_give_two_arcs(self):
        region = blob_region(0, seed=1)
        strokes = generate_stroke_pool([region], 2)
        assert len(strokes) == 2
        # The two complementary arcs partition the boundary (shared endpoints).
        total = sum(s.points.length for s in strokes)
        assert total == pytest.approx(region.boundary.length, rel=0.05)

    def test_pool_size_formula(self):
        regions = [blob_region(i, seed=10 + i, wobble=0.3) for i in range(3)]
        n = 5
        strokes = generate_stroke_pool(regions, n)
        expected = 0
        for r in regions:
            found = len(region_keypoints(r, n))
            expected += found * found - found
        assert len(strokes) == expected

    def test_pairwise_distinct_sequences(self):
        region = blob_region(0, seed=3)
        strokes = generate_stroke_pool([region], 3)
        assert len(strokes) == 6
        seen = set()
        for s in strokes:
            key = s.points.points.tobytes()
            assert key not in seen
            seen.add(key)

    def test_arcs_lie_on_parent_boundary(self):
        region = blob_region(0, seed=4)
        boundary = {tuple(p) for p in region.boundary.points}
        for s in generate_stroke_pool([region], 4):
            assert all(tuple(p) in boundary for p in s.points.points[1:-1])


def make_stroke(points):
    return Stroke(0, 0, 1, "forward", PlanarCurve(points))


class TestNormalHistogram:
    def test_straight_stroke_uniform_single_orientation(self):
        pts = np.column_stack([np.linspace(0, 100, 50), np.zeros(50)])
        vec = normal_histogram(make_stroke(pts))
        assert vec.shape == (160,)
        nz = np.nonzero(vec)[0]
        assert len(nz) == 20
        assert np.allclose(vec[nz], 1.0 / np.sqrt(20))
        # All mass in one orientation column: +y normal is bin 2 of 8.
        assert set(nz % 8) == {2}

    def test_unit_norm(self):
        rng = np.random.default_rng(5)
        heading = np.cumsum(rng.normal(scale=0.2, size=80))
        pts = np.cumsum(np.column_stack([np.cos(heading), np.sin(heading)]), axis=0)
        vec = normal_histogram(make_stroke(pts))
        assert np.linalg.norm(vec) == pytest.approx(1.0, abs=1e-12)

    def test_reversal_shifts_orientation_and_space(self):
        rng = np.random.default_rng(6)
        heading = np.cumsum(rng.normal(scale=0.2, size=80))
        pts = np.cumsum(np.column_stack([np.cos(heading), np.sin(heading)]), axis=0)
        fwd = normal_histogram(make_stroke(pts)).reshape(20, 8)
        rev = normal_histogram(make_stroke(pts[::-1].copy())).reshape(20, 8)
        # Reversed traversal flips normals (4 orientation bins) and runs the
        # arc backwards (spatial bins reversed).
        assert np.allclose(rev, np.roll(fwd[::-1], 4, axis=1))

    def test_rotation_shifts_orientation_bins(self):
        rng = np.random.default_rng(7)
        heading = np.cumsum(rng.normal(scale=0.15, size=100))
        pts = np.cumsum(np.column_stack([np.cos(heading), np.sin(heading)]), axis=0)
        theta = np.pi / 4
        rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
        fwd = normal_histogram(make_stroke(pts)).reshape(20, 8)
        turned = normal_histogram(make_stroke(pts @ rot.T)).reshape(20, 8)
        assert np.allclose(turned, np.roll(fwd, 1, axis=1), atol=1e-12)

    def test_degenerate_stroke_raises(self):
        pts = np.array([[0.0, 0.0], [1e-15, 0.0], [0.0, 1e-15]])
        with pytest.raises(ValueError):
            normal_histogram(make_stroke(pts))


def quality_model(strokes, targets, seed=0):
    X = np.asarray([stroke_features(s.points) for s in strokes])
    return rf.train(X, np.asarray(targets), rf.TrainConfig(n_trees=20, seed=seed))


class TestScoreAndNms:
    def _pool(self):
        region = blob_region(0, seed=8, wobble=0.35)
        return generate_stroke_pool([region], 5)

    def test_identical_strokes_suppressed(self):
        pool = self._pool()
        dup = [pool[0], pool[0], pool[3]]
        model = quality_model(pool, np.linspace(0.1, 0.9, len(pool)))
        kept = score_and_nms(dup, model, overlap=0.2)
        kept_strokes = [s for s, _ in kept]
        assert kept_strokes.count(pool[0]) == 1

    def test_disjoint_strokes_survive(self):
        a = make_stroke(np.column_stack([np.linspace(0, 40, 30), np.zeros(30)]))
        b = make_stroke(np.column_stack([np.linspace(0, 40, 30), np.full(30, 500.0)]))
        model = quality_model([a, b], [0.9, 0.8])
        kept = score_and_nms([a, b], model, overlap=0.2)
        assert len(kept) == 2

    def test_output_subset_and_low_overlap(self):
        from finprint.matching import contour_f_measure

        pool = self._pool()
        rng = np.random.default_rng(9)
        model = quality_model(pool, rng.uniform(size=len(pool)))
        kept = score_and_nms(pool, model, overlap=0.2)
        assert 0 < len(kept) <= len(pool)
        strokes = [s for s, _ in kept]
        for i in range(len(strokes)):
            for j in range(i + 1, len(strokes)):
                assert contour_f_measure(strokes[i].points, strokes[j].points) <= 0.2

    def test_scores_sorted_descending(self):
        pool = self._pool()
        rng = np.random.default_rng(10)
        model = quality_model(pool, rng.uniform(size=len(pool)))
        kept = score_and_nms(pool, model, overlap=0.2)
        preds = [sc.predicted_quality for _, sc in kept]
        assert preds == sorted(preds, reverse=True)
