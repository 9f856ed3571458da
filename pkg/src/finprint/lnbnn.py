"""Local naive-Bayes nearest-neighbour identification over descriptor indexes.

Each query descriptor scores a class by the margin between its nearest
reference descriptor outside the class and its nearest inside it (squared
Euclidean); class totals sum these margins per filter scale with configurable
scale weights.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .encoding import (
    DOG,
    NORMAL,
    BiometricDescriptor,
    EncodingSettings,
    FinContour,
    FinEncoding,
    encode_fin_full,
)

log = logging.getLogger(__name__)

DIST_CHUNK_ROWS = 256  # bound the distance-matrix working set


@dataclass(eq=False)
class SubIndex:
    """Reference descriptors of one (kind, scale): vectors, labels, fin-space bins."""

    vectors: np.ndarray   # (n, dim)
    labels: np.ndarray    # (n,) int32 class index
    bins: np.ndarray      # (n,) int32 fin-space flat bin, -1 when unbinned
    fins: np.ndarray      # (n,) int32 reference fin ordinal
    _tree: cKDTree | None = field(default=None, repr=False)

    def tree(self) -> cKDTree:
        if self._tree is None:
            self._tree = cKDTree(self.vectors)
        return self._tree


@dataclass(eq=False)
class IdentityIndex:
    classes: list[str]
    subindexes: dict[tuple[str, float], SubIndex]
    settings: EncodingSettings
    exact_mode: bool = True
    config_hash: str | None = None

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def class_id(self, label: str) -> int:
        try:
            return self.classes.index(label)
        except ValueError:
            raise KeyError(f"unknown class {label!r}") from None


@dataclass(frozen=True)
class MatchRecord:
    query_row: int
    class_label: str
    dist_same: float      # squared distance to the nearest same-class reference
    dist_other: float     # squared distance to the nearest other-class reference
    score: float          # margin when positive, else zero
    matched_row: int      # row in the sub-index, -1 when the class is absent
    missing_class: bool = False


@dataclass
class RankedResult:
    entries: list[tuple[str, float]]
    note: str | None = None


BinAssigner = Callable[[FinEncoding], dict[tuple[str, float], np.ndarray]]


def build_index(
    references: Sequence[tuple[FinContour, str]],
    settings: EncodingSettings = EncodingSettings(),
    exact_mode: bool = True,
    bin_assigner: BinAssigner | None = None,
    config_hash: str | None = None,
) -> IdentityIndex:
    """Encode every reference bidirectionally and stack per (kind, scale).

    Degenerate descriptors never enter the index. An optional bin assigner
    attaches a fin-space bin to each stored row (for scoring vectors).
    """
    labels = [label for _, label in references]
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise ValueError("index needs at least two classes (margin undefined otherwise)")
    parts: dict[tuple[str, float], list] = {}
    for fin_ordinal, (fin, label) in enumerate(references):
        enc = encode_fin_full(fin, role="reference", settings=settings)
        bins = bin_assigner(enc) if bin_assigner is not None else None
        cid = classes.index(label)
        for key, block in enc.blocks.items():
            keep = ~block.degenerate
            if not keep.any():
                continue
            row_bins = bins[key][keep] if bins is not None else np.full(keep.sum(), -1, np.int32)
            parts.setdefault(key, []).append((
                block.vectors[keep],
                np.full(keep.sum(), cid, dtype=np.int32),
                row_bins.astype(np.int32),
                np.full(keep.sum(), fin_ordinal, dtype=np.int32),
            ))
    subindexes = {}
    for key, chunks in sorted(parts.items()):
        vectors = np.vstack([c[0] for c in chunks])
        subindexes[key] = SubIndex(
            vectors=vectors,
            labels=np.concatenate([c[1] for c in chunks]),
            bins=np.concatenate([c[2] for c in chunks]),
            fins=np.concatenate([c[3] for c in chunks]),
        )
    return IdentityIndex(classes, subindexes, settings, exact_mode, config_hash)


def _squared_distances(queries: np.ndarray, refs: np.ndarray) -> np.ndarray:
    d = (
        np.sum(queries**2, axis=1)[:, None]
        + np.sum(refs**2, axis=1)[None, :]
        - 2.0 * queries @ refs.T
    )
    return np.maximum(d, 0.0)


def class_distances(queries: np.ndarray, sub: SubIndex, n_classes: int
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Per-class nearest squared distance and its sub-index row, per query row.

    Classes absent from the sub-index get +inf / row -1.
    """
    nq = queries.shape[0]
    mins = np.full((nq, n_classes), np.inf)
    rows = np.full((nq, n_classes), -1, dtype=np.int64)
    class_rows = [np.nonzero(sub.labels == c)[0] for c in range(n_classes)]
    for start in range(0, nq, DIST_CHUNK_ROWS):
        stop = min(nq, start + DIST_CHUNK_ROWS)
        d = _squared_distances(queries[start:stop], sub.vectors)
        for c, cr in enumerate(class_rows):
            if len(cr) == 0:
                continue
            block = d[:, cr]
            k = np.argmin(block, axis=1)
            mins[start:stop, c] = block[np.arange(stop - start), k]
            rows[start:stop, c] = cr[k]
    return mins, rows


def _knn_class_distances(queries: np.ndarray, sub: SubIndex, n_classes: int
                         ) -> tuple[np.ndarray, np.ndarray]:
    """Approximate per-class distances from a grown k-NN list.

    The list is expanded until it spans at least two classes; classes outside
    the list keep +inf, which makes their margins exactly zero.
    """
    nq = queries.shape[0]
    n = sub.vectors.shape[0]
    mins = np.full((nq, n_classes), np.inf)
    rows = np.full((nq, n_classes), -1, dtype=np.int64)
    tree = sub.tree()
    k = min(n, 32)
    while True:
        dist, idx = tree.query(queries, k=k)
        if k == 1:
            dist, idx = dist[:, None], idx[:, None]
        seen_classes = sub.labels[idx]
        enough = np.array([len(np.unique(row)) >= 2 for row in seen_classes])
        if enough.all() or k == n:
            break
        k = min(n, k * 2)
    sq = dist**2
    for q in range(nq):
        for j in range(k):
            c = int(seen_classes[q, j])
            if sq[q, j] < mins[q, c]:
                mins[q, c] = sq[q, j]
                rows[q, c] = idx[q, j]
    return mins, rows


def margin_scores(mins: np.ndarray) -> np.ndarray:
    """Per-(query, class) LNBNN margin: nearest-other minus nearest-same, floored at 0."""
    order = np.argsort(mins, axis=1, kind="stable")
    best = order[:, 0]
    best_val = np.take_along_axis(mins, best[:, None], axis=1)[:, 0]
    second_val = np.take_along_axis(mins, order[:, 1][:, None], axis=1)[:, 0]
    n_classes = mins.shape[1]
    dist_other = np.where(
        np.arange(n_classes)[None, :] == best[:, None],
        second_val[:, None],
        best_val[:, None],
    )
    with np.errstate(invalid="ignore"):
        f = dist_other - mins
    f[~np.isfinite(f)] = 0.0
    return np.maximum(f, 0.0)


@dataclass(eq=False)
class MatchTable:
    """Batched LNBNN state for one query against one sub-index."""

    key: tuple[str, float]
    query_rows: np.ndarray   # row -> index into the encoding's subsections
    scores: np.ndarray       # (nq, n_classes) margins
    mins: np.ndarray         # (nq, n_classes) nearest same-class squared distances
    nearest_rows: np.ndarray # (nq, n_classes) sub-index row of the class NN
    dist_other: np.ndarray   # (nq, n_classes)


def match_tables(
    enc: FinEncoding,
    index: IdentityIndex,
    kinds: Sequence[str] = (DOG, NORMAL),
) -> list[MatchTable]:
    """LNBNN margins of every non-degenerate query descriptor, per sub-index."""
    tables = []
    for key in sorted(index.subindexes):
        kind, _scale = key
        if kind not in kinds:
            continue
        block = enc.blocks.get(key)
        if block is None:
            continue
        keep = ~block.degenerate
        queries = block.vectors[keep]
        if queries.shape[0] == 0:
            continue
        sub = index.subindexes[key]
        if index.exact_mode:
            mins, rows = class_distances(queries, sub, index.n_classes)
        else:
            mins, rows = _knn_class_distances(queries, sub, index.n_classes)
        scores = margin_scores(mins)
        order = np.argsort(mins, axis=1, kind="stable")
        best = order[:, 0]
        best_val = np.take_along_axis(mins, best[:, None], axis=1)[:, 0]
        second_val = np.take_along_axis(mins, order[:, 1][:, None], axis=1)[:, 0]
        dist_other = np.where(
            np.arange(index.n_classes)[None, :] == best[:, None],
            second_val[:, None],
            best_val[:, None],
        )
        tables.append(MatchTable(key, block.sub_index[keep], scores, mins, rows, dist_other))
    return tables


def local_score(
    descriptor: BiometricDescriptor,
    class_label: str,
    index: IdentityIndex,
    query_row: int = 0,
) -> MatchRecord:
    """Margin of a single descriptor against one class, exhaustively."""
    key = (descriptor.kind, float(descriptor.scale))
    sub = index.subindexes.get(key)
    if sub is None:
        raise KeyError(f"index has no descriptors for {key}")
    cid = index.class_id(class_label)
    q = descriptor.vector[None, :]
    d = _squared_distances(q, sub.vectors)[0]
    same = sub.labels == cid
    if not same.any():
        log.warning("class %s absent from sub-index %s", class_label, key)
        other = float(d[~same].min()) if (~same).any() else float("inf")
        return MatchRecord(query_row, class_label, float("inf"), other, 0.0, -1, True)
    same_rows = np.nonzero(same)[0]
    other_rows = np.nonzero(~same)[0]
    i = same_rows[np.argmin(d[same_rows])]
    dist_same = float(d[i])
    dist_other = float(d[other_rows].min()) if len(other_rows) else float("inf")
    score = dist_other - dist_same if dist_other > dist_same else 0.0
    if not np.isfinite(score):
        score = 0.0
    return MatchRecord(query_row, class_label, dist_same, dist_other, score, int(i))


def _resolve_weights(weights, scales: Sequence[float]) -> dict[float, float]:
    if weights is None:
        return {float(s): 1.0 for s in scales}
    if isinstance(weights, dict):
        return {float(s): float(weights.get(s, weights.get(float(s), 1.0))) for s in scales}
    return {float(s): float(w) for s, w in zip(scales, weights)}


def classify_query(
    fin: FinContour | FinEncoding,
    index: IdentityIndex,
    weights=None,
    kinds: Sequence[str] = (DOG,),
    scales: Sequence[float] | None = None,
) -> RankedResult:
    """Rank classes by the weighted multi-scale sum of LNBNN margins.

    The default follows the identification baseline: DoG descriptors only,
    every scale weighted 1. Pass kinds=("dog", "normal") to pool families.
    """
    enc = fin if isinstance(fin, FinEncoding) else encode_fin_full(fin, "query", index.settings)
    use_scales = [float(s) for s in (scales if scales is not None else index.settings.scales)]
    w = _resolve_weights(weights, use_scales)
    totals = np.zeros(index.n_classes)
    any_rows = False
    for table in match_tables(enc, index, kinds):
        _kind, scale = table.key
        if scale not in use_scales:
            continue
        any_rows = True
        totals += w[scale] * table.scores.sum(axis=0)
    note = None
    if not any_rows:
        note = "query produced no usable descriptors"
        log.warning(note)
        return RankedResult([], note)
    order = sorted(range(index.n_classes), key=lambda c: (-totals[c], index.classes[c]))
    entries = [(index.classes[c], float(totals[c])) for c in order]
    return RankedResult(entries, note)
