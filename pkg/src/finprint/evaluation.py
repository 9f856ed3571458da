"""Ranked-retrieval and detection evaluation: PR curves, AP, mAP, AP volume.

AP is the step integral of the precision-recall curve: equal scores form one
threshold group and contribute at the group's precision, so tie ordering
cannot affect the result.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


def pr_curve(scores, labels) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Precision and recall at each distinct score threshold, descending."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must align")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    l = labels[order]
    # Last entry of each tie group.
    boundary = np.nonzero(np.diff(s))[0]
    ends = np.concatenate([boundary, [len(s) - 1]])
    tp = np.cumsum(l)[ends]
    npos = l.sum()
    precision = tp / (ends + 1.0)
    recall = tp / npos if npos else np.zeros_like(tp, dtype=float)
    return precision, recall, s[ends]


def average_precision(scores, labels) -> float:
    """Area under the PR curve via the step integral over threshold groups."""
    labels = np.asarray(labels, dtype=bool)
    if not labels.any():
        log.warning("average_precision: no positive labels, returning 0")
        return 0.0
    precision, recall, _ = pr_curve(scores, labels)
    prev = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev) * precision))


@dataclass
class IdentificationReport:
    ap: float
    mean_ap: float
    per_individual_ap: dict[str, float]
    precision: np.ndarray
    recall: np.ndarray
    thresholds: np.ndarray


def evaluate_identification(results) -> IdentificationReport:
    """Pool every (query, class) score; AP overall plus mean per-individual AP.

    `results` is a sequence of (ranked, true_class) where ranked exposes
    (class, score) entries for every candidate class.
    """
    if not results:
        raise ValueError("no query results to evaluate")
    scores: list[float] = []
    labels: list[bool] = []
    by_individual: dict[str, tuple[list[float], list[bool]]] = {}
    for ranked, true_class in results:
        entries = ranked.entries if hasattr(ranked, "entries") else ranked
        ind_scores, ind_labels = by_individual.setdefault(true_class, ([], []))
        for cls, score in entries:
            hit = cls == true_class
            scores.append(score)
            labels.append(hit)
            ind_scores.append(score)
            ind_labels.append(hit)
    ap = average_precision(scores, labels)
    per_ind = {
        ind: average_precision(s, l) for ind, (s, l) in sorted(by_individual.items())
    }
    precision, recall, thresholds = pr_curve(scores, labels)
    return IdentificationReport(
        ap=ap,
        mean_ap=float(np.mean(list(per_ind.values()))),
        per_individual_ap=per_ind,
        precision=precision,
        recall=recall,
        thresholds=thresholds,
    )


@dataclass(eq=False)
class ImageDetections:
    """Scored detections for one image against that image's ground truths.

    qualities[i, t] is the boundary F-measure of detection i against truth t.
    """

    image_id: str
    scores: np.ndarray      # (n_detections,)
    qualities: np.ndarray   # (n_detections, n_truths)

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.qualities = np.asarray(self.qualities, dtype=np.float64)
        if self.qualities.ndim != 2 or len(self.scores) != self.qualities.shape[0]:
            raise ValueError("qualities must be (n_detections, n_truths)")


@dataclass
class DetectionReport:
    ap_by_threshold: dict[float, float]
    ap_volume: float


def _detection_outcomes(images, threshold) -> tuple[np.ndarray, np.ndarray, int]:
    """Pooled (score, is_tp) with greedy truth assignment per image."""
    scores: list[float] = []
    hits: list[bool] = []
    n_truths = 0
    for img in images:
        n_det, n_tr = img.qualities.shape
        n_truths += n_tr
        taken = np.zeros(n_tr, dtype=bool)
        order = np.argsort(-img.scores, kind="stable")
        for i in order:
            q = img.qualities[i]
            candidates = np.nonzero(~taken & (q >= threshold))[0]
            if len(candidates):
                best = candidates[np.argmax(q[candidates])]
                taken[best] = True
                hits.append(True)
            else:
                hits.append(False)
            scores.append(float(img.scores[i]))
    return np.asarray(scores), np.asarray(hits), n_truths


def detection_ap(images, threshold: float) -> float:
    """AP at one quality threshold, pooled over all images.

    A detection is a true positive when it is the highest-scored detection
    claiming a still-unmatched truth of quality >= threshold.
    """
    scores, hits, n_truths = _detection_outcomes(images, threshold)
    if len(scores) == 0:
        log.warning("detection_ap: empty detection set")
        return 0.0
    if n_truths == 0:
        raise ValueError("no ground truths")
    precision, _, _ = pr_curve(scores, hits)
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    h = hits[order]
    ends = np.concatenate([np.nonzero(np.diff(s))[0], [len(s) - 1]])
    tp = np.cumsum(h)[ends]
    prev = np.concatenate([[0.0], tp[:-1]])
    recall_step = (tp - prev) / n_truths
    return float(np.sum(recall_step * precision))


def evaluate_detection(images, thresholds=None) -> DetectionReport:
    """AP at each quality threshold plus their mean (the PR-surface volume)."""
    if thresholds is None:
        thresholds = np.linspace(0.0, 1.0, 21)
    ap_by_t = {float(t): detection_ap(images, float(t)) for t in thresholds}
    return DetectionReport(ap_by_t, float(np.mean(list(ap_by_t.values()))))
