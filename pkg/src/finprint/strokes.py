"""Open-contour stroke candidates from pools of closed region contours.

Regions are pruned and deduplicated, partitioned into strokes at corner
keypoints, described by a spatial histogram of boundary normals, scored by a
quality-regression forest, and thinned by overlap-based non-maximum
suppression.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from shapely.geometry import Polygon

from . import forest as rf
from .curves import PlanarCurve, ScaleSpaceParams, detect_keypoints, map_to_source_index, resample
from .matching import contour_f_measure, match_pixel_sets, rasterize

log = logging.getLogger(__name__)

MIN_BOUNDARY_PIXELS = 70.0
REGION_OVERLAP_THRESHOLD = 0.95
DETECTION_PARAMS = ScaleSpaceParams(sigma=1.0, sigma_ratio=4.0, resample_len=128)

SPATIAL_BINS = 20
ORIENTATION_BINS = 8
STROKE_SAMPLES = SPATIAL_BINS * 8  # uniform sample count per spatial bin


@dataclass(frozen=True, eq=False)
class RegionContour:
    boundary: PlanarCurve
    hierarchy_rank: int

    def __post_init__(self):
        if not self.boundary.closed:
            raise ValueError("region boundary must be a closed curve")
        if self.hierarchy_rank < 0:
            raise ValueError("hierarchy_rank must be non-negative")


@dataclass(frozen=True, eq=False)
class Stroke:
    parent: int          # index into the region list the stroke was cut from
    start_kp: int        # sample indices on the detection-resolution contour
    end_kp: int
    direction: str       # traversal sense relative to the parent boundary
    points: PlanarCurve  # contiguous arc of the parent boundary, open

    def __post_init__(self):
        if self.start_kp == self.end_kp:
            raise ValueError("stroke endpoints must differ")
        if self.points.closed:
            raise ValueError("stroke must be an open curve")


@dataclass(frozen=True)
class StrokeScore:
    predicted_quality: float
    true_quality: float | None = None


def _region_polygon(region: RegionContour) -> Polygon:
    poly = Polygon(region.boundary.points)
    if not poly.is_valid:
        poly = poly.buffer(0)
    return poly


def area_overlap(a: RegionContour, b: RegionContour) -> float:
    """Intersection-over-union of the two region interiors."""
    pa, pb = _region_polygon(a), _region_polygon(b)
    union = pa.union(pb).area
    if union == 0.0:
        return 0.0
    return pa.intersection(pb).area / union


def filter_regions(pool: Sequence[RegionContour], k: int = 12) -> list[RegionContour]:
    """Reject small regions, deduplicate near-identical ones, keep the top k by rank.

    Regions shorter than 70 boundary pixels are dropped. Survivors are
    clustered greedily at IoU >= 0.95 in rank order, keeping each cluster's
    best-ranked member, then the k best-ranked representatives are returned.
    """
    if not pool:
        raise ValueError("region pool is empty")
    sized = [r for r in pool if r.boundary.length >= MIN_BOUNDARY_PIXELS]
    sized.sort(key=lambda r: r.hierarchy_rank)
    representatives: list[RegionContour] = []
    for region in sized:
        if any(area_overlap(region, rep) >= REGION_OVERLAP_THRESHOLD for rep in representatives):
            continue
        representatives.append(region)
    return representatives[:k]


def region_keypoints(
    region: RegionContour,
    n: int,
    params: ScaleSpaceParams = DETECTION_PARAMS,
):
    return detect_keypoints(region.boundary, n, params)


def _slice_arc(points: np.ndarray, start: int, end: int) -> np.ndarray:
    if start < end:
        arc = points[start:end + 1]
    else:
        arc = np.vstack([points[start:], points[:end + 1]])
    if len(arc) == 2:
        arc = np.vstack([arc[0], 0.5 * (arc[0] + arc[1]), arc[1]])
    return arc


def generate_stroke_pool(
    regions: Sequence[RegionContour],
    n: int,
    params: ScaleSpaceParams = DETECTION_PARAMS,
) -> list[Stroke]:
    """All keypoint-to-keypoint arcs of every region, in forward traversal.

    Each ordered keypoint pair (a, b) contributes the arc running forward
    from a to b, so a region with m keypoints yields m^2 - m strokes. Regions
    with fewer than n detectable keypoints use what they have.
    """
    strokes: list[Stroke] = []
    for ridx, region in enumerate(regions):
        kps = region_keypoints(region, n, params)
        if len(kps) < n:
            log.info("region %d: only %d of %d keypoints detected", ridx, len(kps), n)
        if len(kps) < 2:
            continue
        sample_idx = sorted(kp.index for kp in kps)
        vertex_idx = [
            map_to_source_index(s, params.resample_len, region.boundary) for s in sample_idx
        ]
        pts = region.boundary.points
        for i, (si, vi) in enumerate(zip(sample_idx, vertex_idx)):
            for j, (sj, vj) in enumerate(zip(sample_idx, vertex_idx)):
                if i == j:
                    continue
                if vi == vj:
                    log.warning("region %d: keypoints %d/%d collapse to one vertex", ridx, si, sj)
                    continue
                arc = _slice_arc(pts, vi, vj)
                strokes.append(
                    Stroke(ridx, si, sj, "forward", PlanarCurve(arc, closed=False))
                )
    return strokes


def normal_histogram(stroke: Stroke | PlanarCurve) -> np.ndarray:
    """L2-normalised histogram of boundary normals: 20 spatial x 8 orientation bins.

    The stroke is resampled to a fixed length, unit normals are taken left of
    the tangent, and each sample votes into (arc-position bin, 45-degree
    orientation bin). Returned flattened spatial-major, 160 entries.
    """
    curve = stroke.points if isinstance(stroke, Stroke) else stroke
    sampled = resample(curve, STROKE_SAMPLES)
    tangent = np.gradient(sampled.points, axis=0)
    norms = np.linalg.norm(tangent, axis=1)
    if (norms < 1e-12).any():
        raise ValueError("degenerate stroke: vanishing tangent")
    tangent /= norms[:, None]
    normal_angle = np.arctan2(tangent[:, 0], -tangent[:, 1])  # angle of (-ty, tx)
    obin = np.floor((normal_angle % (2.0 * np.pi)) / (2.0 * np.pi / ORIENTATION_BINS)).astype(int)
    obin = np.clip(obin, 0, ORIENTATION_BINS - 1)
    sbin = np.arange(STROKE_SAMPLES) // (STROKE_SAMPLES // SPATIAL_BINS)
    hist = np.zeros((SPATIAL_BINS, ORIENTATION_BINS))
    np.add.at(hist, (sbin, obin), 1.0)
    vec = hist.ravel()
    return vec / np.linalg.norm(vec)


AppearanceFeature = Callable[[PlanarCurve], np.ndarray]


def stroke_features(points: PlanarCurve, appearance: AppearanceFeature | None = None) -> np.ndarray:
    """Feature vector for quality regression: shape histogram, optionally
    concatenated with an L2-normalised appearance descriptor."""
    shape_vec = normal_histogram(points)
    if appearance is None:
        return shape_vec
    app = np.asarray(appearance(points), dtype=np.float64)
    norm = np.linalg.norm(app)
    if norm > 0:
        app = app / norm
    return np.concatenate([shape_vec, app])


def score_strokes(
    strokes: Sequence[Stroke],
    model: rf.Forest,
    appearance: AppearanceFeature | None = None,
) -> np.ndarray:
    """Predicted quality per stroke: the max over the two traversal directions."""
    if not strokes:
        return np.zeros(0)
    feats = []
    for stroke in strokes:
        feats.append(stroke_features(stroke.points, appearance))
        feats.append(stroke_features(stroke.points.reverse(), appearance))
    preds = rf.predict_regression(model, np.asarray(feats))
    return np.maximum(preds[0::2], preds[1::2])


def stroke_qualities(
    strokes: Sequence[Stroke],
    truth: PlanarCurve,
    tol: float = 2.0,
) -> np.ndarray:
    """Boundary F-measure of every stroke against one truth contour."""
    truth_px = rasterize(truth)
    return np.array([
        match_pixel_sets(rasterize(s.points), truth_px, tol).f_measure for s in strokes
    ])


def score_and_nms(
    strokes: Sequence[Stroke],
    model: rf.Forest,
    overlap: float = 0.2,
    appearance: AppearanceFeature | None = None,
    true_qualities: Sequence[float] | None = None,
    tol: float = 2.0,
) -> list[tuple[Stroke, StrokeScore]]:
    """Score every stroke and keep a greedy set with pairwise overlap <= threshold.

    Overlap between strokes is their boundary F-measure at the given pixel
    tolerance. Candidates are visited in descending predicted quality (ties
    by input order).
    """
    preds = score_strokes(strokes, model, appearance)
    order = np.argsort(-preds, kind="stable")
    pixels = [rasterize(s.points) for s in strokes]
    boxes = np.array([[p.min(axis=0), p.max(axis=0)] for p in pixels], dtype=float)

    def may_overlap(i: int, j: int) -> bool:
        # Size bound: F <= 2*min(|A|,|B|)/(|A|+|B|); box bound: disjoint -> F = 0.
        na, nb = len(pixels[i]), len(pixels[j])
        if 2.0 * min(na, nb) / (na + nb) <= overlap:
            return False
        gap = np.maximum(boxes[i, 0] - boxes[j, 1], boxes[j, 0] - boxes[i, 1])
        return bool(gap.max() <= tol)

    kept: list[tuple[Stroke, StrokeScore]] = []
    kept_idx: list[int] = []
    for i in order:
        if any(
            may_overlap(i, j) and match_pixel_sets(pixels[i], pixels[j], tol).f_measure > overlap
            for j in kept_idx
        ):
            continue
        kept_idx.append(int(i))
        truth = None if true_qualities is None else float(true_qualities[i])
        kept.append((strokes[i], StrokeScore(float(preds[i]), truth)))
    return kept
