"""Command-line pipeline: synth | detect | encode | index | identify |
finspace-train | evaluate | report."""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import forest as rf
from .config import RunConfig, load_config
from .curves import PlanarCurve
from .encoding import encode_fin_full
from .evaluation import ImageDetections, average_precision, evaluate_detection, evaluate_identification
from .finspace import (
    FinSpaceConfig,
    make_bin_assigner,
    rank_identities,
    score_all_classes,
    train_reliability_model,
)
from .io_utils import (
    ContourRecord,
    FileFormatError,
    load_identification_dataset,
    load_index,
    load_forest,
    load_reliability_model,
    read_contours,
    read_detections,
    read_evaluation,
    save_detections,
    save_evaluation,
    save_forest,
    save_index,
    save_reliability_model,
    write_contours,
    atomic_write_bytes,
)
from .lnbnn import build_index, classify_query
from .matching import contour_f_measure
from .strokes import RegionContour, generate_stroke_pool, score_and_nms, stroke_features
from .synth import PerturbationRanges, emit_dataset, generate_population, make_region_pool, base_contour


def _config_from(args) -> RunConfig:
    return load_config(args.config) if args.config else RunConfig()


def cmd_synth(args) -> int:
    cfg = _config_from(args)
    population = generate_population(args.individuals, args.seed)
    ranges = PerturbationRanges(
        min_noise=args.min_noise, max_noise=args.max_noise,
        min_occlusion=args.min_occlusion, max_occlusion=args.max_occlusion,
    )
    manifest = emit_dataset(population, args.per, ranges, args.seed, args.out)
    if args.detection_images:
        pool_dir = os.path.join(args.out, "pools")
        os.makedirs(pool_dir, exist_ok=True)
        for i in range(args.detection_images):
            ind = population[i % len(population)]
            regions, truth = make_region_pool(base_contour(ind), seed=args.seed + 1000 + i)
            records = [
                ContourRecord(f"region_{r.hierarchy_rank:02d}", r.boundary,
                              hierarchy_rank=r.hierarchy_rank)
                for r in regions
            ]
            write_contours(os.path.join(pool_dir, f"pool_{i:03d}.contour.json"), records)
            write_contours(
                os.path.join(pool_dir, f"truth_{i:03d}.contour.json"),
                [ContourRecord("truth", truth, class_label=ind.individual_id)],
            )
    print(manifest)
    return 0


def _load_regions(path) -> list[RegionContour]:
    records = read_contours(path)
    regions = []
    for rec in sorted(records, key=lambda r: (r.hierarchy_rank or 0, r.name)):
        rank = rec.hierarchy_rank if rec.hierarchy_rank is not None else len(regions)
        regions.append(RegionContour(rec.curve, rank))
    return regions


def cmd_detect(args) -> int:
    cfg = _config_from(args)
    if bool(args.model) == bool(args.train_out):
        raise SystemExit("detect: pass exactly one of --model or --train-out")
    if len(args.truth) not in (0, len(args.pool)):
        raise SystemExit("detect: --truth count must match --pool count")
    pools = [_load_regions(p) for p in args.pool]
    truths = [read_contours(t)[0].curve for t in args.truth] if args.truth else [None] * len(pools)

    if args.train_out:
        X, y = [], []
        for regions, truth in zip(pools, truths):
            if truth is None:
                raise SystemExit("detect --train-out requires --truth for every pool")
            strokes = generate_stroke_pool(regions, cfg.detect_keypoints, cfg.detection_params)
            for stroke in strokes:
                quality = contour_f_measure(stroke.points, truth, cfg.match_tolerance)
                for pts in (stroke.points, stroke.points.reverse()):
                    X.append(stroke_features(pts))
                    y.append(quality)
        model = rf.train(np.asarray(X), np.asarray(y), cfg.forest_config("regression"))
        save_forest(args.train_out, model)
        print(args.train_out)
        return 0

    model = load_forest(args.model)
    images = []
    for img_id, (regions, truth) in enumerate(zip(pools, truths)):
        strokes = generate_stroke_pool(regions, cfg.detect_keypoints, cfg.detection_params)
        qualities = (
            [contour_f_measure(s.points, truth, cfg.match_tolerance) for s in strokes]
            if truth is not None else None
        )
        kept = score_and_nms(strokes, model, cfg.nms_overlap, true_qualities=qualities,
                             tol=cfg.match_tolerance)
        images.append({
            "image_id": os.path.basename(args.pool[img_id]),
            "detections": [
                {
                    "parent": s.parent,
                    "start_kp": s.start_kp,
                    "end_kp": s.end_kp,
                    "predicted_quality": sc.predicted_quality,
                    "true_quality": sc.true_quality,
                    "points": [[float(x), float(y)] for x, y in s.points.points],
                }
                for s, sc in kept
            ],
        })
    save_detections(args.out, images)
    print(args.out)
    return 0


def cmd_encode(args) -> int:
    cfg = _config_from(args)
    records = read_contours(args.contours)
    doc = {"format": "finprint-descriptors/1", "fins": []}
    for rec in records:
        enc = encode_fin_full(rec.fin(), args.role, cfg.encoding_settings)
        descriptors = []
        for (kind, scale), block in sorted(enc.blocks.items()):
            for row in range(block.vectors.shape[0]):
                sub = enc.subsections[block.sub_index[row]]
                descriptors.append({
                    "kind": kind,
                    "scale": scale,
                    "start_kp": sub.start_kp,
                    "end_kp": sub.end_kp,
                    "direction": "reverse" if block.reversed_dir[row] else "forward",
                    "degenerate": bool(block.degenerate[row]),
                    "vector": block.vectors[row].tolist(),
                })
        doc["fins"].append({"name": rec.name, "class_label": rec.class_label,
                            "tip_index": enc.tip_index, "descriptors": descriptors})
    atomic_write_bytes(args.out, (json.dumps(doc, indent=1) + "\n").encode())
    print(args.out)
    return 0


def cmd_index(args) -> int:
    cfg = _config_from(args)
    dataset = load_identification_dataset(args.manifest)
    index = build_index(
        dataset.references,
        settings=cfg.encoding_settings,
        exact_mode=cfg.exact_index,
        bin_assigner=make_bin_assigner(cfg.finspace_config, cfg.encoding_settings),
        config_hash=cfg.encoding_hash(),
    )
    save_index(args.out, index)
    print(args.out)
    return 0


def cmd_identify(args) -> int:
    cfg = _config_from(args)
    index = load_index(args.index, expect_hash=cfg.encoding_hash())
    records = read_contours(args.query)
    model = None
    if args.model:
        model = load_reliability_model(args.model, cfg.finspace_config, cfg.encoding_settings)
    rows = []
    for rec in records:
        enc = encode_fin_full(rec.fin(), "query", index.settings)
        if model is not None:
            ranked = rank_identities(enc, index, model)
        else:
            ranked = classify_query(enc, index, kinds=tuple(args.kinds.split(",")))
        for rank, (cls, score) in enumerate(ranked.entries, start=1):
            rows.append((rec.name, rank, cls, score))
    lines = ["query,rank,class,score"] if len(records) > 1 else ["rank,class,score"]
    for name, rank, cls, score in rows:
        prefix = f"{name}," if len(records) > 1 else ""
        lines.append(f"{prefix}{rank},{cls},{score!r}")
    atomic_write_bytes(args.out, ("\n".join(lines) + "\n").encode())
    print(args.out)
    return 0


def cmd_finspace_train(args) -> int:
    cfg = _config_from(args)
    dataset = load_identification_dataset(args.manifest)
    training = train_reliability_model(
        dataset,
        cfg.forest_config("classification"),
        cfg.finspace_config,
        cfg.encoding_settings,
        negatives_per_query=cfg.negatives_per_query,
    )
    save_reliability_model(args.out, training.model)
    if args.cv_report:
        save_evaluation(args.cv_report, {
            "task": "finspace-cross-validation",
            "ap": training.cv.ap,
            "positive_rate": float(training.cv.labels.mean()),
            "n_pairs": int(len(training.cv.labels)),
            "folds": training.cv.folds,
        })
    print(args.out)
    return 0


def _evaluate_identification(args, cfg: RunConfig) -> dict:
    index = load_index(args.index, expect_hash=cfg.encoding_hash())
    dataset = load_identification_dataset(args.manifest)
    model = None
    if args.model:
        model = load_reliability_model(args.model, cfg.finspace_config, cfg.encoding_settings)
    results = []
    vectors_by_pair = [] if model is not None else None
    for fin, label in dataset.queries:
        enc = encode_fin_full(fin, "query", index.settings)
        if model is not None:
            ranked = rank_identities(enc, index, model)
            vecs, _ = score_all_classes(enc, index, model.finspace)
            for c, cls in enumerate(index.classes):
                vectors_by_pair.append((vecs[c], cls == label))
        else:
            ranked = classify_query(enc, index, kinds=tuple(args.kinds.split(",")))
        results.append((ranked, label))
    report = evaluate_identification(results)
    doc = {
        "task": "identification",
        "mode": "finspace" if model is not None else "lnbnn",
        "ap": report.ap,
        "map": report.mean_ap,
        "per_individual_ap": report.per_individual_ap,
        "pr_curve": {
            "precision": report.precision.tolist(),
            "recall": report.recall.tolist(),
            "thresholds": report.thresholds.tolist(),
        },
    }
    if vectors_by_pair:
        fs = model.finspace
        mat = np.asarray([v for v, _ in vectors_by_pair])
        labels = np.asarray([l for _, l in vectors_by_pair], dtype=bool)
        bins = []
        for b in range(fs.dimension):
            col = mat[:, b]
            active = col > 0
            bins.append({
                "bin": b,
                "n_scores": int(active.sum()),
                "ap": average_precision(col, labels) if active.any() else 0.0,
            })
        doc["finspace_bins"] = bins
    return doc


def _evaluate_detection(args, cfg: RunConfig) -> dict:
    images = []
    for entry in read_detections(args.detections):
        dets = entry["detections"]
        if any(d["true_quality"] is None for d in dets):
            raise SystemExit("evaluate: detections lack true_quality (rerun detect with --truth)")
        images.append(ImageDetections(
            entry["image_id"],
            np.asarray([d["predicted_quality"] for d in dets]),
            np.asarray([[d["true_quality"]] for d in dets]) if dets else np.zeros((0, 1)),
        ))
    thresholds = np.linspace(0.0, 1.0, cfg.detection_threshold_count)
    report = evaluate_detection(images, thresholds)
    return {
        "task": "detection",
        "ap_by_threshold": {f"{t:g}": ap for t, ap in report.ap_by_threshold.items()},
        "ap_volume": report.ap_volume,
    }


def cmd_evaluate(args) -> int:
    cfg = _config_from(args)
    if args.task == "identification":
        doc = _evaluate_identification(args, cfg)
    else:
        doc = _evaluate_detection(args, cfg)
    save_evaluation(args.out, doc)
    print(args.out)
    return 0


def cmd_report(args) -> int:
    doc = read_evaluation(args.evaluation)
    os.makedirs(args.out_dir, exist_ok=True)
    wrote = []

    def emit_csv(name, header, rows):
        path = os.path.join(args.out_dir, name)
        out = [",".join(header)]
        out += [",".join(str(v) for v in row) for row in rows]
        atomic_write_bytes(path, ("\n".join(out) + "\n").encode())
        wrote.append(path)

    if doc["task"] == "identification":
        emit_csv("ap_table.csv", ["metric", "value"],
                 [("ap", repr(doc["ap"])), ("map", repr(doc["map"]))] +
                 [(f"ap[{k}]", repr(v)) for k, v in sorted(doc["per_individual_ap"].items())])
        pr = doc["pr_curve"]
        emit_csv("pr_curve.csv", ["threshold", "precision", "recall"],
                 list(zip(map(repr, pr["thresholds"]), map(repr, pr["precision"]),
                          map(repr, pr["recall"]))))
        if "finspace_bins" in doc:
            emit_csv("finspace_bins.csv", ["bin", "n_scores", "ap"],
                     [(b["bin"], b["n_scores"], repr(b["ap"])) for b in doc["finspace_bins"]])
    else:
        emit_csv("ap_table.csv", ["threshold", "ap"],
                 sorted(((k, repr(v)) for k, v in doc["ap_by_threshold"].items()),
                        key=lambda kv: float(kv[0])) + [("volume", repr(doc["ap_volume"]))])
    for path in wrote:
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="finprint",
                                     description="Contour-biometric fin identification pipeline")
    parser.add_argument("--config", default=None, help="Run-config JSON (defaults are the paper's)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="Generate a synthetic labelled population")
    p.add_argument("--individuals", type=int, required=True)
    p.add_argument("--per", type=int, required=True, help="Observations per individual (1 reference + rest queries)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-noise", type=float, default=0.001)
    p.add_argument("--max-noise", type=float, default=0.003)
    p.add_argument("--min-occlusion", type=float, default=0.0)
    p.add_argument("--max-occlusion", type=float, default=0.2)
    p.add_argument("--detection-images", type=int, default=0,
                   help="Also emit this many region-pool/truth file pairs")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("detect", help="Score stroke candidates in region pools")
    p.add_argument("--pool", nargs="+", required=True)
    p.add_argument("--truth", nargs="*", default=[])
    p.add_argument("--model", default=None, help="Quality forest to apply")
    p.add_argument("--train-out", default=None, help="Train the quality forest instead")
    p.add_argument("--out", default="detections.json")
    p.set_defaults(fn=cmd_detect)

    p = sub.add_parser("encode", help="Dump descriptors for a contour file")
    p.add_argument("--contours", required=True)
    p.add_argument("--role", choices=["query", "reference"], default="query")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_encode)

    p = sub.add_parser("index", help="Build the identity index from manifest references")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_index)

    p = sub.add_parser("identify", help="Rank identities for query contours")
    p.add_argument("--index", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--model", default=None, help="Reliability model (fin-space ranking)")
    p.add_argument("--kinds", default="dog", help="Descriptor families for the baseline, comma-separated")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_identify)

    p = sub.add_parser("finspace-train", help="Train the fin-space reliability model")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--cv-report", default=None)
    p.set_defaults(fn=cmd_finspace_train)

    p = sub.add_parser("evaluate", help="Evaluate identification or detection artifacts")
    p.add_argument("--task", choices=["identification", "detection"], default="identification")
    p.add_argument("--manifest")
    p.add_argument("--index")
    p.add_argument("--model", default=None)
    p.add_argument("--kinds", default="dog")
    p.add_argument("--detections")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("report", help="Render an evaluation JSON into CSV tables")
    p.add_argument("--evaluation", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(fn=cmd_report)
    return parser


def run_command(argv) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (FileFormatError, ValueError, KeyError, OSError) as e:
        print(json.dumps({"error": type(e).__name__, "message": str(e)}), file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
