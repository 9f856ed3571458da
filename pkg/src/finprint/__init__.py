"""Contour biometrics: fin stroke detection, multi-scale boundary encoding,
and individual identification over region contours."""

__version__ = "0.1.0"

from .curves import (
    Keypoint,
    PlanarCurve,
    ScaleSpaceParams,
    detect_keypoints,
    dog_response,
    gaussian_smooth,
    prominence_peaks,
    resample,
)
from .encoding import (
    BiometricDescriptor,
    EncodingSettings,
    FinContour,
    Subsection,
    encode_dogn,
    encode_fin,
    encode_normal,
    generate_subsections,
)
from .evaluation import evaluate_detection, evaluate_identification
from .forest import Forest, TrainConfig, predict_proba, predict_regression, train
from .lnbnn import IdentityIndex, MatchRecord, RankedResult, build_index, classify_query, local_score
from .finspace import (
    EdgePartitioning,
    FinSpaceConfig,
    ScoringVector,
    assign_spatial_bin,
    build_scoring_vector,
    rank_identities,
    sigma_global,
    train_reliability_model,
)
from .matching import contour_f_measure
from .strokes import (
    RegionContour,
    Stroke,
    StrokeScore,
    filter_regions,
    generate_stroke_pool,
    normal_histogram,
    score_and_nms,
)
from .config import RunConfig

__all__ = [
    "__version__",
    "PlanarCurve", "ScaleSpaceParams", "Keypoint",
    "resample", "gaussian_smooth", "dog_response", "prominence_peaks", "detect_keypoints",
    "RegionContour", "Stroke", "StrokeScore",
    "filter_regions", "generate_stroke_pool", "normal_histogram", "score_and_nms",
    "contour_f_measure",
    "Forest", "TrainConfig", "train", "predict_regression", "predict_proba",
    "FinContour", "Subsection", "BiometricDescriptor", "EncodingSettings",
    "generate_subsections", "encode_dogn", "encode_normal", "encode_fin",
    "IdentityIndex", "MatchRecord", "RankedResult",
    "build_index", "local_score", "classify_query",
    "FinSpaceConfig", "EdgePartitioning", "ScoringVector",
    "assign_spatial_bin", "sigma_global", "build_scoring_vector",
    "train_reliability_model", "rank_identities",
    "evaluate_identification", "evaluate_detection",
    "RunConfig",
]
