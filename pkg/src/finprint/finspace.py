"""Global fin space: anatomical binning of descriptors, per-class scoring
vectors, and the learned reliability model that re-ranks identities.

Fin space indexes a descriptor by family, by the contiguous run of edge
partitions its subsection occupies (55 bins over 10 partitions), and by its
globally normalised filter scale (5 bins): 550 coordinates in total.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import forest as rf
from .encoding import (
    DOG,
    NORMAL,
    EncodingSettings,
    FinContour,
    FinEncoding,
    Subsection,
    encode_fin_full,
)
from .evaluation import average_precision
from .lnbnn import IdentityIndex, RankedResult, build_index, match_tables

log = logging.getLogger(__name__)

KIND_ORDER = (DOG, NORMAL)


def sigma_global(sigma: float, n_samples: int, length_fraction: float) -> float:
    """Filter scale as a proportion of the whole fin contour."""
    if n_samples <= 0:
        raise ValueError("n_samples must be positive")
    if not 0.0 < length_fraction <= 1.0:
        raise ValueError("length_fraction must be in (0, 1]")
    return sigma * length_fraction / n_samples


def spatial_bin_index(i: int, j: int, n_partitions: int = 10) -> int:
    """Canonical index of the contiguous partition interval [i..j], 1-based ends."""
    if not 1 <= i <= j <= n_partitions:
        raise ValueError("need 1 <= i <= j <= n_partitions")
    return (i - 1) * n_partitions - (i - 1) * (i - 2) // 2 + (j - i)


def spatial_bin_interval(idx: int, n_partitions: int = 10) -> tuple[int, int]:
    """Inverse of spatial_bin_index."""
    for i in range(1, n_partitions + 1):
        base = spatial_bin_index(i, i, n_partitions)
        width = n_partitions - i
        if base <= idx <= base + width:
            return i, i + (idx - base)
    raise ValueError(f"bin index {idx} out of range")


def scale_bin_edges(scales, n_samples: int, min_length_fraction: float, n_bins: int = 5) -> np.ndarray:
    """Logarithmically spaced bin edges spanning the attainable global scales."""
    lo = min(scales) * min_length_fraction / n_samples
    hi = max(scales) * 1.0 / n_samples
    return np.geomspace(lo, hi, n_bins + 1)


def assign_scale_bin(sg: float, edges: np.ndarray) -> int:
    """Bin of a global scale; values outside the range clip to the end bins."""
    idx = int(np.searchsorted(edges, sg, side="left")) - 1
    return int(np.clip(idx, 0, len(edges) - 2))


@dataclass(frozen=True)
class FinSpaceConfig:
    partitions_per_edge: int = 5
    n_scale_bins: int = 5
    min_length_fraction: float = 0.01
    edges: tuple[float, ...] = ()

    @classmethod
    def create(
        cls,
        settings: EncodingSettings,
        partitions_per_edge: int = 5,
        n_scale_bins: int = 5,
        min_length_fraction: float = 0.01,
    ) -> "FinSpaceConfig":
        edges = scale_bin_edges(
            settings.scales, settings.descriptor_samples, min_length_fraction, n_scale_bins
        )
        return cls(partitions_per_edge, n_scale_bins, min_length_fraction, tuple(edges))

    @property
    def n_partitions(self) -> int:
        return 2 * self.partitions_per_edge

    @property
    def n_spatial_bins(self) -> int:
        n = self.n_partitions
        return n * (n + 1) // 2

    @property
    def dimension(self) -> int:
        return len(KIND_ORDER) * self.n_spatial_bins * self.n_scale_bins

    def flat_coordinate(self, kind: str, spatial_bin: int, scale_bin: int) -> int:
        k = KIND_ORDER.index(kind)
        return (k * self.n_spatial_bins + spatial_bin) * self.n_scale_bins + scale_bin

    def to_dict(self) -> dict:
        return {
            "partitions_per_edge": self.partitions_per_edge,
            "n_scale_bins": self.n_scale_bins,
            "min_length_fraction": self.min_length_fraction,
            "edges": list(self.edges),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FinSpaceConfig":
        return cls(
            int(d["partitions_per_edge"]),
            int(d["n_scale_bins"]),
            float(d["min_length_fraction"]),
            tuple(float(e) for e in d["edges"]),
        )


@dataclass(frozen=True, eq=False)
class EdgePartitioning:
    """Partition boundaries in sample units: equal arcs per edge, split at the tip."""

    boundaries: np.ndarray  # (n_partitions + 1,) increasing sample positions

    @classmethod
    def for_tip(cls, tip_index: int, n_samples: int, per_edge: int = 5) -> "EdgePartitioning":
        lead = np.linspace(0.0, tip_index, per_edge + 1)
        trail = np.linspace(tip_index, n_samples - 1, per_edge + 1)
        return cls(np.concatenate([lead, trail[1:]]))

    @property
    def n_partitions(self) -> int:
        return len(self.boundaries) - 1


def assign_spatial_bin(sub: Subsection, part: EdgePartitioning) -> int | None:
    """Canonical bin of the partitions a subsection occupies by more than half.

    Returns None when no partition reaches majority coverage (the subsection
    is unbinned and contributes nothing to fin space).
    """
    a, b = float(sub.start_kp), float(sub.end_kp)
    bounds = part.boundaries
    occupied = []
    for q in range(part.n_partitions):
        lo, hi = bounds[q], bounds[q + 1]
        width = hi - lo
        if width <= 0.0:
            continue
        overlap = min(b, hi) - max(a, lo)
        if overlap > 0.5 * width:
            occupied.append(q + 1)  # 1-based
    if not occupied:
        return None
    if occupied[-1] - occupied[0] != len(occupied) - 1:
        raise AssertionError("occupied partitions of a contiguous arc must be contiguous")
    return spatial_bin_index(occupied[0], occupied[-1], part.n_partitions)


def subsection_coordinates(
    enc: FinEncoding,
    config: FinSpaceConfig,
    settings: EncodingSettings,
) -> dict[tuple[str, float], np.ndarray]:
    """Flat fin-space coordinate per descriptor row of every block (-1 unbinned)."""
    part = EdgePartitioning.for_tip(enc.tip_index, len(enc.curve), config.partitions_per_edge)
    spatial = np.array(
        [-1 if (b := assign_spatial_bin(s, part)) is None else b for s in enc.subsections],
        dtype=np.int64,
    )
    edges = np.asarray(config.edges)
    out = {}
    for key, block in enc.blocks.items():
        kind, scale = key
        bins = np.full(block.vectors.shape[0], -1, dtype=np.int32)
        for row in range(block.vectors.shape[0]):
            sb = spatial[block.sub_index[row]]
            if sb < 0:
                continue
            p = enc.subsections[block.sub_index[row]].length_fraction
            sg = sigma_global(scale, settings.descriptor_samples, p)
            bins[row] = config.flat_coordinate(kind, int(sb), assign_scale_bin(sg, edges))
        out[key] = bins
    return out


def make_bin_assigner(config: FinSpaceConfig, settings: EncodingSettings):
    """Bin-assigner callback for lnbnn.build_index."""
    def assigner(enc: FinEncoding):
        return subsection_coordinates(enc, config, settings)
    return assigner


@dataclass(eq=False)
class ScoringVector:
    values: np.ndarray
    query_id: str | None
    class_label: str
    missing_class: bool = False


def score_all_classes(
    enc: FinEncoding,
    index: IdentityIndex,
    config: FinSpaceConfig,
) -> tuple[np.ndarray, np.ndarray]:
    """Scoring vectors for every class at once, plus the plain margin totals.

    vectors[c, bin] accumulates the margins whose matched reference descriptor
    lives in that fin-space bin; totals[c] is the unrestricted equal-weight
    sum over both descriptor families (the tie-break baseline).
    """
    vectors = np.zeros((index.n_classes, config.dimension))
    totals = np.zeros(index.n_classes)
    for table in match_tables(enc, index, kinds=KIND_ORDER):
        sub = index.subindexes[table.key]
        totals += table.scores.sum(axis=0)
        for c in range(index.n_classes):
            sc = table.scores[:, c]
            hit = sc > 0.0
            if not hit.any():
                continue
            rows = table.nearest_rows[hit, c]
            bins = sub.bins[rows]
            valid = bins >= 0
            if valid.any():
                np.add.at(vectors[c], bins[valid], sc[hit][valid])
    return vectors, totals


def build_scoring_vector(
    query: FinContour | FinEncoding,
    class_label: str,
    index: IdentityIndex,
    config: FinSpaceConfig,
    query_id: str | None = None,
) -> ScoringVector:
    """Sum-pooled margins of one query against one class over fin-space bins."""
    enc = query if isinstance(query, FinEncoding) else encode_fin_full(query, "query", index.settings)
    if class_label not in index.classes:
        log.warning("class %s not in index; zero scoring vector", class_label)
        return ScoringVector(np.zeros(config.dimension), query_id, class_label, True)
    vectors, _ = score_all_classes(enc, index, config)
    return ScoringVector(vectors[index.class_id(class_label)], query_id, class_label)


@dataclass(eq=False)
class ReliabilityModel:
    forest: rf.Forest
    finspace: FinSpaceConfig
    settings: EncodingSettings


@dataclass(eq=False)
class CrossValReport:
    scores: np.ndarray   # held-out P(same) per (query, class) pair
    labels: np.ndarray   # same/not-same ground truth
    ap: float
    folds: dict[str, int]


@dataclass(eq=False)
class ReliabilityTraining:
    model: ReliabilityModel
    cv: CrossValReport


@dataclass(eq=False)
class IdentificationDataset:
    """One-shot identification data: one reference per individual plus queries."""

    references: list[tuple[FinContour, str]]
    queries: list[tuple[FinContour, str]]

    def individuals(self) -> list[str]:
        return sorted({label for _, label in self.references})


def _fold_records(fold_refs, fold_queries, settings, config):
    index = build_index(
        fold_refs,
        settings=settings,
        exact_mode=True,
        bin_assigner=make_bin_assigner(config, settings),
    )
    records = []  # (query_ordinal, class_label, vector, is_same)
    for qid, (fin, true_label) in enumerate(fold_queries):
        enc = encode_fin_full(fin, "query", settings)
        vectors, _ = score_all_classes(enc, index, config)
        for c, label in enumerate(index.classes):
            records.append((qid, label, vectors[c], label == true_label))
    return records


def _subsample_training(records, rng, negatives_per_query: int):
    by_query: dict[int, list] = {}
    for rec in records:
        by_query.setdefault(rec[0], []).append(rec)
    X, y = [], []
    for qid in sorted(by_query):
        recs = by_query[qid]
        positives = [r for r in recs if r[3]]
        negatives = [r for r in recs if not r[3]]
        if len(negatives) > negatives_per_query:
            pick = rng.choice(len(negatives), size=negatives_per_query, replace=False)
            negatives = [negatives[i] for i in sorted(pick)]
        for r in positives + negatives:
            X.append(r[2])
            y.append(int(r[3]))
    return np.asarray(X), np.asarray(y)


def train_reliability_model(
    dataset: IdentificationDataset,
    config: rf.TrainConfig,
    finspace_config: FinSpaceConfig | None = None,
    settings: EncodingSettings = EncodingSettings(),
    negatives_per_query: int = 5,
) -> ReliabilityTraining:
    """Two-fold cross-validation split by individual, then a final model on all.

    Each fold forms a self-contained identification problem: its references
    build an index, its queries produce per-class scoring vectors. The model
    evaluated on a fold is trained on the other fold's vectors only, so
    held-out predictions never see their own individuals during training.
    """
    fs = finspace_config or FinSpaceConfig.create(settings)
    individuals = dataset.individuals()
    if len(individuals) < 4:
        raise ValueError("need at least 4 individuals for two-fold cross-validation")
    rng = np.random.default_rng(config.seed)
    perm = rng.permutation(len(individuals))
    half = len(individuals) // 2
    folds = [
        {individuals[i] for i in perm[:half]},
        {individuals[i] for i in perm[half:]},
    ]
    if min(len(f) for f in folds) < 2:
        raise ValueError("each fold needs at least two individuals")
    fold_records = []
    for members in folds:
        refs = [(f, l) for f, l in dataset.references if l in members]
        queries = [(f, l) for f, l in dataset.queries if l in members]
        fold_records.append(_fold_records(refs, queries, settings, fs))
    cv_scores, cv_labels = [], []
    for held_out in (0, 1):
        train_recs = fold_records[1 - held_out]
        X, y = _subsample_training(train_recs, rng, negatives_per_query)
        fold_forest = rf.train(X, y, config, rf.CLASSIFICATION)
        test_recs = fold_records[held_out]
        Xt = np.asarray([r[2] for r in test_recs])
        same_col = int(np.nonzero(fold_forest.classes == 1)[0][0])
        p = rf.predict_proba(fold_forest, Xt)[:, same_col]
        cv_scores.extend(p.tolist())
        cv_labels.extend(bool(r[3]) for r in test_recs)
    cv_scores = np.asarray(cv_scores)
    cv_labels = np.asarray(cv_labels, dtype=bool)
    cv = CrossValReport(
        scores=cv_scores,
        labels=cv_labels,
        ap=average_precision(cv_scores, cv_labels),
        folds={ind: (0 if ind in folds[0] else 1) for ind in individuals},
    )
    X_all, y_all = _subsample_training(fold_records[0] + [
        (r[0] + 1_000_000, r[1], r[2], r[3]) for r in fold_records[1]
    ], rng, negatives_per_query)
    final = rf.train(X_all, y_all, config, rf.CLASSIFICATION)
    return ReliabilityTraining(ReliabilityModel(final, fs, settings), cv)


def rank_identities(
    query: FinContour | FinEncoding,
    index: IdentityIndex,
    model: ReliabilityModel,
) -> RankedResult:
    """Rank classes by predicted reliability, margin totals breaking ties."""
    enc = query if isinstance(query, FinEncoding) else encode_fin_full(query, "query", index.settings)
    vectors, totals = score_all_classes(enc, index, model.finspace)
    forest = model.forest
    if forest.classes is not None and (forest.classes == 1).any():
        same_col = int(np.nonzero(forest.classes == 1)[0][0])
        p_same = rf.predict_proba(forest, vectors)[:, same_col]
    else:  # degenerate single-class model
        p_same = np.zeros(index.n_classes)
    order = sorted(
        range(index.n_classes),
        key=lambda c: (-p_same[c], -totals[c], index.classes[c]),
    )
    entries = [(index.classes[c], float(p_same[c])) for c in order]
    return RankedResult(entries)
