import numpy as np
import pytest

from finprint.evaluation import (
    ImageDetections,
    average_precision,
    detection_ap,
    evaluate_detection,
    evaluate_identification,
    pr_curve,
)


class TestAveragePrecision:
    def test_perfect_ranking(self):
        assert average_precision([0.9, 0.8, 0.1], [True, True, False]) == 1.0

    def test_hand_computed_mixed_ranking(self):
        # Ranked: hit, miss, hit, miss -> AP = (1/2) * (1/1 + 2/3) = 5/6.
        scores = [4.0, 3.0, 2.0, 1.0]
        labels = [True, False, True, False]
        assert average_precision(scores, labels) == pytest.approx(5.0 / 6.0)

    def test_ties_grouped(self):
        # All scores equal: one group, precision = 2/4, recall jumps to 1.
        assert average_precision([1.0] * 4, [True, False, True, False]) == pytest.approx(0.5)

    def test_no_positives_returns_zero(self):
        assert average_precision([0.5, 0.1], [False, False]) == 0.0

    def test_random_scores_near_positive_rate(self):
        rng = np.random.default_rng(0)
        labels = np.zeros(2000, dtype=bool)
        labels[::2] = True  # positive rate 0.5
        scores = rng.uniform(size=2000)
        assert abs(average_precision(scores, labels) - 0.5) < 0.05


class TestPrCurve:
    def test_monotone_recall(self):
        rng = np.random.default_rng(1)
        scores = rng.uniform(size=100)
        labels = rng.uniform(size=100) > 0.7
        p, r, t = pr_curve(scores, labels)
        assert (np.diff(r) >= 0).all()
        assert (np.diff(t) <= 0).all()
        assert r[-1] == 1.0


def ranked(entries):
    return list(entries)


class TestEvaluateIdentification:
    def test_perfect_queries(self):
        results = [
            (ranked([("a", 1.0), ("b", 0.0)]), "a"),
            (ranked([("b", 2.0), ("a", 0.1)]), "b"),
        ]
        report = evaluate_identification(results)
        assert report.ap == 1.0
        assert report.mean_ap == 1.0

    def test_hand_built_three_query_table(self):
        # Pooled pairs sorted by score:
        #  1.0 hit -> P=1    (recall 1/3)
        #  0.9 miss
        #  0.8 hit -> P=2/3  (recall 2/3)
        #  0.7 miss
        #  0.6 hit -> P=3/5  (recall 3/3)
        #  0.5 miss
        # AP = (1 + 2/3 + 3/5)/3
        results = [
            (ranked([("a", 1.0), ("b", 0.5)]), "a"),
            (ranked([("a", 0.9), ("b", 0.8)]), "b"),
            (ranked([("a", 0.7), ("b", 0.6)]), "b"),
        ]
        report = evaluate_identification(results)
        assert report.ap == pytest.approx((1.0 + 2.0 / 3.0 + 3.0 / 5.0) / 3.0)
        # Individual 'a': its one query ranks (1.0 hit, 0.5 miss) -> AP 1.
        assert report.per_individual_ap["a"] == 1.0

    def test_mean_ap_unweighted_over_individuals(self):
        results = [
            (ranked([("a", 1.0), ("b", 0.0)]), "a"),
            (ranked([("b", 0.2), ("a", 0.9)]), "b"),
            (ranked([("b", 0.3), ("a", 0.8)]), "b"),
        ]
        report = evaluate_identification(results)
        a_ap = report.per_individual_ap["a"]
        b_ap = report.per_individual_ap["b"]
        assert report.mean_ap == pytest.approx((a_ap + b_ap) / 2.0)


class TestDetection:
    def test_perfect_single_detections(self):
        images = [
            ImageDetections("im1", [0.9], [[0.95]]),
            ImageDetections("im2", [0.8], [[0.99]]),
        ]
        assert detection_ap(images, 0.9) == 1.0

    def test_all_below_threshold(self):
        images = [ImageDetections("im1", [0.9], [[0.5]])]
        assert detection_ap(images, 0.7) == 0.0

    def test_hand_computed_three_image_set(self):
        # Three images, one truth each. Pooled detections by score:
        #  0.9 quality 0.8 -> TP   P=1/1
        #  0.8 quality 0.3 -> FP
        #  0.7 quality 0.9 -> TP   P=2/3
        #  0.6 quality 0.85 (same truth as the 0.9 one, already taken) -> FP
        #  0.5 quality 0.75 -> TP  P=3/5
        # At t=0.7: AP = (1/3)(1 + 2/3 + 3/5) = 0.755...
        images = [
            ImageDetections("a", [0.9, 0.6], [[0.8], [0.85]]),
            ImageDetections("b", [0.8, 0.7], [[0.3], [0.9]]),
            ImageDetections("c", [0.5], [[0.75]]),
        ]
        expected = (1.0 + 2.0 / 3.0 + 3.0 / 5.0) / 3.0
        assert detection_ap(images, 0.7) == pytest.approx(expected, abs=1e-9)

    def test_ap_volume_is_mean_over_grid(self):
        images = [
            ImageDetections("a", [0.9, 0.6], [[0.8], [0.85]]),
            ImageDetections("b", [0.8, 0.7], [[0.3], [0.9]]),
        ]
        report = evaluate_detection(images, thresholds=[0.25, 0.5, 0.75])
        expected = np.mean([detection_ap(images, t) for t in (0.25, 0.5, 0.75)])
        assert report.ap_volume == pytest.approx(expected)

    def test_empty_detections_warn_and_zero(self):
        images = [ImageDetections("a", np.zeros(0), np.zeros((0, 1)))]
        assert detection_ap(images, 0.5) == 0.0

    def test_recall_denominator_counts_all_truths(self):
        # One detection, two truths: recall can only reach 1/2.
        images = [ImageDetections("a", [0.9], [[0.95, 0.0]])]
        assert detection_ap(images, 0.5) == pytest.approx(0.5)
