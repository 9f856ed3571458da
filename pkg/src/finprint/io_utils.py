"""Persistent formats: contour files, manifests, forests, reliability models,
the binary descriptor index, detections, and evaluation reports.

Text artifacts are versioned JSON written atomically; floats round-trip
exactly via repr. The descriptor index uses a small self-describing binary
container (JSON header + raw arrays) so reruns are byte-identical.
"""
from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass

import numpy as np

from . import forest as rf
from .curves import PlanarCurve
from .encoding import EncodingSettings, FinContour
from .finspace import FinSpaceConfig, IdentificationDataset, ReliabilityModel
from .lnbnn import IdentityIndex, SubIndex

CONTOURS_FORMAT = "finprint-contours/1"
MANIFEST_FORMAT = "finprint-manifest/1"
FOREST_FORMAT = "finprint-forest/1"
RELIABILITY_FORMAT = "finprint-reliability/1"
INDEX_MAGIC = b"FINIDX01"
INDEX_FORMAT = "finprint-index/1"
DETECTIONS_FORMAT = "finprint-detections/1"
EVALUATION_FORMAT = "finprint-evaluation/1"


class FileFormatError(ValueError):
    pass


def atomic_write_bytes(path, payload: bytes) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)


def _dump_json(doc: dict) -> bytes:
    return (json.dumps(doc, indent=1) + "\n").encode("utf-8")


def _load_json(path) -> dict:
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        return json.loads(raw)
    except json.JSONDecodeError as e:
        raise FileFormatError(f"{path}: malformed JSON at byte {e.pos}: {e.msg}") from None


def _expect_format(doc: dict, expected: str, path) -> None:
    got = doc.get("format")
    if got != expected:
        raise FileFormatError(
            f"{path}: format {got!r} does not match {expected!r}; migrate or regenerate"
        )


@dataclass(eq=False)
class ContourRecord:
    name: str
    curve: PlanarCurve
    tip_index: int | None = None
    class_label: str | None = None
    hierarchy_rank: int | None = None

    def fin(self) -> FinContour:
        if self.tip_index is None:
            raise ValueError(f"contour {self.name!r} has no tip_index")
        return FinContour(self.curve, self.tip_index)


def write_contours(path, records: list[ContourRecord]) -> None:
    curves = []
    for rec in records:
        entry = {
            "name": rec.name,
            "closed": rec.curve.closed,
            "points": [[float(x), float(y)] for x, y in rec.curve.points],
        }
        if rec.tip_index is not None:
            entry["tip_index"] = int(rec.tip_index)
        if rec.class_label is not None:
            entry["class_label"] = rec.class_label
        if rec.hierarchy_rank is not None:
            entry["hierarchy_rank"] = int(rec.hierarchy_rank)
        curves.append(entry)
    atomic_write_bytes(path, _dump_json({"format": CONTOURS_FORMAT, "curves": curves}))


def read_contours(path) -> list[ContourRecord]:
    doc = _load_json(path)
    _expect_format(doc, CONTOURS_FORMAT, path)
    records = []
    for entry in doc["curves"]:
        pts = np.asarray(entry["points"], dtype=np.float64)
        records.append(
            ContourRecord(
                name=entry["name"],
                curve=PlanarCurve(pts, closed=bool(entry["closed"])),
                tip_index=entry.get("tip_index"),
                class_label=entry.get("class_label"),
                hierarchy_rank=entry.get("hierarchy_rank"),
            )
        )
    return records


def write_manifest(path, manifest: dict) -> None:
    doc = {"format": MANIFEST_FORMAT, **manifest}
    atomic_write_bytes(path, _dump_json(doc))


def read_manifest(path) -> dict:
    doc = _load_json(path)
    _expect_format(doc, MANIFEST_FORMAT, path)
    return doc


def load_identification_dataset(manifest_path) -> IdentificationDataset:
    """Resolve a manifest's contour files into an in-memory dataset."""
    doc = read_manifest(manifest_path)
    base = os.path.dirname(os.fspath(manifest_path))

    def load_side(entries):
        out = []
        for entry in entries:
            records = read_contours(os.path.join(base, entry["file"]))
            named = {r.name: r for r in records}
            rec = named[entry["name"]]
            out.append((rec.fin(), entry["class_label"]))
        return out

    return IdentificationDataset(
        references=load_side(doc["references"]),
        queries=load_side(doc["queries"]),
    )


def forest_to_dict(forest: rf.Forest) -> dict:
    return {
        "task": forest.task,
        "n_features": forest.n_features,
        "classes": None if forest.classes is None else forest.classes.tolist(),
        "train_config": {
            "n_trees": forest.config.n_trees,
            "max_depth": forest.config.max_depth,
            "min_leaf": forest.config.min_leaf,
            "features_per_split": forest.config.features_per_split,
            "seed": forest.config.seed,
            "bootstrap": forest.config.bootstrap,
        },
        "trees": [
            {
                "feature": t.feature.tolist(),
                "threshold": t.threshold.tolist(),
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "value": t.value.tolist(),
            }
            for t in forest.trees
        ],
    }


def forest_from_dict(doc: dict) -> rf.Forest:
    trees = [
        rf.Tree(
            feature=np.asarray(t["feature"], dtype=np.int32),
            threshold=np.asarray(t["threshold"], dtype=np.float64),
            left=np.asarray(t["left"], dtype=np.int32),
            right=np.asarray(t["right"], dtype=np.int32),
            value=np.asarray(t["value"], dtype=np.float64),
        )
        for t in doc["trees"]
    ]
    classes = doc["classes"]
    return rf.Forest(
        trees=trees,
        task=doc["task"],
        config=rf.TrainConfig(**doc["train_config"]),
        n_features=int(doc["n_features"]),
        classes=None if classes is None else np.asarray(classes),
    )


def save_forest(path, forest: rf.Forest) -> None:
    atomic_write_bytes(path, _dump_json({"format": FOREST_FORMAT, **forest_to_dict(forest)}))


def load_forest(path) -> rf.Forest:
    doc = _load_json(path)
    _expect_format(doc, FOREST_FORMAT, path)
    return forest_from_dict(doc)


def save_reliability_model(path, model: ReliabilityModel) -> None:
    doc = {
        "format": RELIABILITY_FORMAT,
        "finspace": model.finspace.to_dict(),
        "encoding": model.settings.to_dict(),
        "forest": forest_to_dict(model.forest),
    }
    atomic_write_bytes(path, _dump_json(doc))


def load_reliability_model(path, expect_finspace: FinSpaceConfig | None = None,
                           expect_settings: EncodingSettings | None = None) -> ReliabilityModel:
    doc = _load_json(path)
    _expect_format(doc, RELIABILITY_FORMAT, path)
    finspace = FinSpaceConfig.from_dict(doc["finspace"])
    settings = EncodingSettings.from_dict(doc["encoding"])
    if expect_finspace is not None and finspace != expect_finspace:
        raise FileFormatError(f"{path}: fin-space configuration does not match the current run config")
    if expect_settings is not None and settings != expect_settings:
        raise FileFormatError(f"{path}: encoding settings do not match the current run config")
    return ReliabilityModel(forest_from_dict(doc["forest"]), finspace, settings)


def save_index(path, index: IdentityIndex) -> None:
    keys = sorted(index.subindexes)
    header = {
        "format": INDEX_FORMAT,
        "classes": index.classes,
        "exact_mode": index.exact_mode,
        "config_hash": index.config_hash,
        "settings": index.settings.to_dict(),
        "blocks": [
            {
                "kind": kind,
                "scale": scale,
                "rows": int(index.subindexes[(kind, scale)].vectors.shape[0]),
                "dim": int(index.subindexes[(kind, scale)].vectors.shape[1]),
            }
            for kind, scale in keys
        ],
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [INDEX_MAGIC, struct.pack("<Q", len(head)), head]
    for key in keys:
        sub = index.subindexes[key]
        parts.append(np.ascontiguousarray(sub.vectors, dtype=np.float64).tobytes())
        parts.append(np.ascontiguousarray(sub.labels, dtype=np.int32).tobytes())
        parts.append(np.ascontiguousarray(sub.bins, dtype=np.int32).tobytes())
        parts.append(np.ascontiguousarray(sub.fins, dtype=np.int32).tobytes())
    atomic_write_bytes(path, b"".join(parts))


def load_index(path, expect_hash: str | None = None) -> IdentityIndex:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(INDEX_MAGIC)] != INDEX_MAGIC:
        raise FileFormatError(f"{path}: not a descriptor index file")
    (head_len,) = struct.unpack_from("<Q", blob, len(INDEX_MAGIC))
    offset = len(INDEX_MAGIC) + 8
    header = json.loads(blob[offset:offset + head_len])
    if header.get("format") != INDEX_FORMAT:
        raise FileFormatError(f"{path}: index format {header.get('format')!r} unsupported; regenerate")
    if expect_hash is not None and header["config_hash"] != expect_hash:
        raise FileFormatError(f"{path}: index was built under a different configuration")
    offset += head_len
    subindexes = {}
    for block in header["blocks"]:
        rows, dim = block["rows"], block["dim"]
        vectors = np.frombuffer(blob, dtype=np.float64, count=rows * dim, offset=offset).reshape(rows, dim)
        offset += rows * dim * 8
        labels = np.frombuffer(blob, dtype=np.int32, count=rows, offset=offset)
        offset += rows * 4
        bins = np.frombuffer(blob, dtype=np.int32, count=rows, offset=offset)
        offset += rows * 4
        fins = np.frombuffer(blob, dtype=np.int32, count=rows, offset=offset)
        offset += rows * 4
        subindexes[(block["kind"], float(block["scale"]))] = SubIndex(
            vectors.copy(), labels.copy(), bins.copy(), fins.copy()
        )
    return IdentityIndex(
        classes=list(header["classes"]),
        subindexes=subindexes,
        settings=EncodingSettings.from_dict(header["settings"]),
        exact_mode=bool(header["exact_mode"]),
        config_hash=header["config_hash"],
    )


def save_detections(path, images: list[dict]) -> None:
    atomic_write_bytes(path, _dump_json({"format": DETECTIONS_FORMAT, "images": images}))


def read_detections(path) -> list[dict]:
    doc = _load_json(path)
    _expect_format(doc, DETECTIONS_FORMAT, path)
    return doc["images"]


def save_evaluation(path, report: dict) -> None:
    atomic_write_bytes(path, _dump_json({"format": EVALUATION_FORMAT, **report}))


def read_evaluation(path) -> dict:
    doc = _load_json(path)
    _expect_format(doc, EVALUATION_FORMAT, path)
    return doc
