"""Runnable pipelines behind the CLI subcommands.

Each function is a deterministic composition of library calls: read declared
JSON/NPY inputs, do the work (optionally across a thread pool capped by
GEOMATCH_THREADS), and return JSON-ready documents with the config hash and
seed stamped in. File layout contract: features live at
<features-dir>/<image-id>__<variant>.npy and instance masks at
<features-dir>/<image-id>__<variant>.mask.npy.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from . import benchgen
from .config import RunConfig, config_hash
from .errors import InputError
from .geoware import AnnotatedPair, KeypointSet, SubgroupSchema, is_geometry_aware
from .matcher import match_keypoints
from .metrics import (BREAKDOWN_CLASSES, Breakdown, EvalReport, PckConfig,
                      PckResult, aggregate, azimuth_sensitivity, breakdown, pck)
from .npyio import read_feature_map, read_mask
from .pose import PoseVariant, TemplateSet, adaptive_align, predict_pose
from .tensor import (GridPoint, ImagePoint, InstanceMask, VARIANT_LABELS,
                     grid_to_image, image_to_grid, l2_normalize)
from .validation import validate


def thread_count() -> int:
    raw = os.environ.get("GEOMATCH_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise InputError(f"GEOMATCH_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def parallel_map(fn: Callable, items: Sequence) -> list:
    """Apply fn to every item, preserving input order in the result list."""
    n = thread_count()
    if n == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def feature_path(features_dir: str | Path, image_id: str, variant: str = "identity") -> Path:
    return Path(features_dir) / f"{image_id}__{variant}.npy"


def mask_path(features_dir: str | Path, image_id: str, variant: str = "identity") -> Path:
    return Path(features_dir) / f"{image_id}__{variant}.mask.npy"


def load_features(features_dir: str | Path, image_id: str, variant: str = "identity",
                  normalize: bool = True):
    path = feature_path(features_dir, image_id, variant)
    if not path.exists():
        raise InputError(f"missing feature file: {path}")
    f = read_feature_map(path)
    return l2_normalize(f) if normalize else f


def load_mask_or_full(features_dir: str | Path, image_id: str, variant: str,
                      height: int, width: int) -> InstanceMask:
    path = mask_path(features_dir, image_id, variant)
    if path.exists():
        return read_mask(path)
    return InstanceMask(bits=np.ones((height, width), dtype=np.bool_))


def load_subgroup_schema(path: str | Path) -> SubgroupSchema:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    validate(doc, "subgroups")
    return SubgroupSchema.from_dict(doc)


def load_schema_dir(schema_dir: str | Path) -> dict[str, SubgroupSchema]:
    out: dict[str, SubgroupSchema] = {}
    for path in sorted(Path(schema_dir).glob("*.json")):
        schema = load_subgroup_schema(path)
        out[schema.category] = schema
    return out


# match ---------------------------------------------------------------------

def run_match(manifest: Mapping, features_dir: str | Path, cfg: RunConfig) -> dict:
    validate(manifest, "pair_manifest")

    def one(rec: Mapping) -> dict:
        fs = load_features(features_dir, rec["src_id"])
        ft = load_features(features_dir, rec["tgt_id"])
        sw, sh = rec["src_size"]
        tw, th = rec["tgt_size"]
        indices = list(rec["mutual_visible"])
        kps = [image_to_grid(ImagePoint(*rec["src_keypoints"][k]), sw, sh,
                             fs.width, fs.height) for k in indices]
        matched = match_keypoints(fs, ft, kps, cfg.inference, sampling=cfg.sampling)
        out = {}
        for k, g in zip(indices, matched):
            p = grid_to_image(g, tw, th, ft.width, ft.height)
            out[str(k)] = [p.x, p.y]
        return out

    results = parallel_map(one, list(manifest["pairs"]))
    predictions = {rec["pair_id"]: res for rec, res in zip(manifest["pairs"], results)}
    doc = {
        "seed": cfg.seed,
        "config_hash": config_hash(cfg),
        "mode": cfg.inference.mode,
        "window_size": cfg.inference.window_size,
        "temperature": cfg.inference.temperature,
        "predictions": predictions,
    }
    validate(doc, "predictions")
    return doc


# evaluate ------------------------------------------------------------------

def _pair_keypoint_set(rec: Mapping, side: str) -> KeypointSet:
    bbox = rec.get(f"{side}_bbox")
    return KeypointSet(
        xy=np.asarray(rec[f"{side}_keypoints"], dtype=np.float64),
        visibility=np.asarray(rec[f"{side}_visibility"], dtype=np.bool_),
        image_size=(float(rec[f"{side}_size"][0]), float(rec[f"{side}_size"][1])),
        bbox=None if bbox is None else tuple(float(v) for v in bbox),
    )


def _pair_predictions(rec: Mapping, predictions: Mapping) -> np.ndarray:
    pair_id = rec["pair_id"]
    if pair_id not in predictions:
        raise InputError(f"no predictions for pair {pair_id!r}")
    per_kp = predictions[pair_id]
    pts = []
    for k in rec["mutual_visible"]:
        key = str(k)
        if key not in per_kp:
            raise InputError(f"pair {pair_id!r}: no prediction for keypoint {k}")
        pts.append(per_kp[key])
    return np.asarray(pts, dtype=np.float64)


def run_evaluate(manifest: Mapping, predictions_doc: Mapping, cfg: RunConfig,
                 alphas: Sequence[float] = (0.01, 0.05, 0.1),
                 reference: str = "bbox",
                 schemas: Mapping[str, SubgroupSchema] | None = None,
                 breakdown_alpha: float | None = None) -> dict:
    """PCK at every alpha (both aggregations), geo/standard split when a
    schema covers the pair's category, error breakdown, and per-category
    azimuth sensitivity at the largest alpha."""
    validate(manifest, "pair_manifest")
    validate(predictions_doc, "predictions")
    predictions = predictions_doc["predictions"]
    schemas = schemas or {}
    pairs = list(manifest["pairs"])
    if not pairs:
        raise InputError("empty pair manifest")

    gts = [_pair_keypoint_set(rec, "tgt") for rec in pairs]
    preds = [_pair_predictions(rec, predictions) for rec in pairs]
    geo_flags: list[np.ndarray | None] = []
    for rec, gt in zip(pairs, gts):
        schema = schemas.get(rec["category"])
        if schema is None:
            geo_flags.append(None)
            continue
        pair = AnnotatedPair(
            source=_pair_keypoint_set(rec, "src"), target=gt,
            category=rec["category"],
            mutual_visible=tuple(int(k) for k in rec["mutual_visible"]),
            pair_id=rec["pair_id"])
        geo_flags.append(np.asarray(
            [is_geometry_aware(pair, schema, int(k)) for k in rec["mutual_visible"]],
            dtype=np.bool_))

    def subset_results(pcfg: PckConfig, selector) -> list[PckResult]:
        out = []
        for rec, gt, pts, flags in zip(pairs, gts, preds, geo_flags):
            keep = selector(flags, len(rec["mutual_visible"]))
            if keep is None or not np.any(keep):
                continue
            idx = [int(k) for k, f in zip(rec["mutual_visible"], keep) if f]
            out.append(pck(pts[keep], gt, pcfg, indices=idx))
        return out

    def both_aggregations(results: list[PckResult]) -> dict[str, float]:
        return {"per_point": aggregate(results, "per_point"),
                "per_image": aggregate(results, "per_image")}

    pck_table: dict[str, dict[str, float]] = {}
    geo_table: dict[str, dict[str, float]] = {}
    std_table: dict[str, dict[str, float]] = {}
    for alpha in alphas:
        pcfg = PckConfig(alpha=alpha, reference=reference)
        key = f"{alpha:g}"
        all_results = [pck(pts, gt, pcfg, indices=[int(k) for k in rec["mutual_visible"]])
                       for rec, gt, pts in zip(pairs, gts, preds)]
        pck_table[key] = both_aggregations(all_results)
        geo = subset_results(pcfg, lambda f, n: f if f is not None else None)
        std = subset_results(pcfg, lambda f, n: ~f if f is not None else None)
        if geo:
            geo_table[key] = both_aggregations(geo)
        if std:
            std_table[key] = both_aggregations(std)

    bd_alpha = breakdown_alpha if breakdown_alpha is not None else max(alphas)
    bd_cfg = PckConfig(alpha=bd_alpha, reference=reference)
    labels: list[str] = []
    lr_flags: list[bool] = []
    for rec, gt, pts in zip(pairs, gts, preds):
        schema = schemas.get(rec["category"])
        if schema is None or gt.bbox is None:
            continue
        bd = breakdown(pts, gt, schema, bd_cfg,
                       indices=[int(k) for k in rec["mutual_visible"]])
        labels.extend(bd.labels)
        lr_flags.extend(bd.swap_lr_flags)
    fractions = (Breakdown(tuple(labels), tuple(lr_flags)).fractions()
                 if labels else {})

    azimuth: dict[str, float] = {}
    top_alpha = f"{max(alphas):g}"
    top_cfg = PckConfig(alpha=max(alphas), reference=reference)
    by_category: dict[str, dict[int, list[PckResult]]] = {}
    for rec, gt, pts in zip(pairs, gts, preds):
        az = rec.get("azimuth_difference")
        if az is None:
            continue
        bins = by_category.setdefault(rec["category"], {})
        bins.setdefault(int(az), []).append(
            pck(pts, gt, top_cfg, indices=[int(k) for k in rec["mutual_visible"]]))
    for category, bins in sorted(by_category.items()):
        scores = {b: aggregate(rs, "per_point") for b, rs in sorted(bins.items())}
        try:
            azimuth[category] = azimuth_sensitivity(scores)
        except InputError:
            continue  # all-zero bins: sensitivity undefined for this category

    report = EvalReport(
        pck=pck_table, geo_pck=geo_table, standard_pck=std_table,
        breakdown_fractions=fractions, azimuth_sensitivity=azimuth,
        n_pairs=len(pairs),
        n_keypoints=sum(len(rec["mutual_visible"]) for rec in pairs))
    doc = {"seed": cfg.seed, "config_hash": config_hash(cfg), "report": report.to_dict()}
    validate(doc, "eval_report")
    return doc


def report_charts(report_doc: Mapping) -> dict[str, str]:
    """SVG bar charts: overall PCK per alpha plus geo vs. standard."""
    from .plots import svg_bar_chart
    report = report_doc["report"]
    charts = {}
    alphas = sorted(report["pck"], key=float)
    charts["pck"] = svg_bar_chart(
        [f"a={a}" for a in alphas],
        [report["pck"][a]["per_point"] for a in alphas],
        title="PCK (per point)", y_max=1.0)
    if report.get("geo_pck"):
        rows: list[tuple[str, float]] = []
        for a in sorted(report["geo_pck"], key=float):
            rows.append((f"geo a={a}", report["geo_pck"][a]["per_point"]))
            std = report.get("standard_pck", {}).get(a)
            if std is not None:
                rows.append((f"std a={a}", std["per_point"]))
        charts["geo_split"] = svg_bar_chart(
            [r[0] for r in rows], [r[1] for r in rows],
            title="geometry-aware vs standard PCK", y_max=1.0)
    return charts


# align ---------------------------------------------------------------------

def run_align(manifest: Mapping, features_dir: str | Path, cfg: RunConfig) -> dict:
    validate(manifest, "align_manifest")
    variants = cfg.align.variants
    metric = cfg.align.metric

    def one(rec: Mapping) -> dict:
        loaded = []
        for label in variants:
            f = load_features(features_dir, rec["src_id"], label)
            mask = load_mask_or_full(features_dir, rec["src_id"], label,
                                     f.height, f.width)
            loaded.append(PoseVariant(label=label, features=f, mask=mask))
        tgt = load_features(features_dir, rec["tgt_id"])
        res = adaptive_align(loaded, tgt, metric=metric)
        scores = {k: ("inf" if math.isinf(v) else v) for k, v in res.scores.items()}
        return {"label": res.label, "scores": scores}

    results = parallel_map(one, list(manifest["pairs"]))
    doc = {
        "seed": cfg.seed,
        "config_hash": config_hash(cfg),
        "metric": metric,
        "variants": list(variants),
        "results": {rec["pair_id"]: res for rec, res in zip(manifest["pairs"], results)},
    }
    validate(doc, "align_report")
    return doc


# build-benchmark -----------------------------------------------------------

def pair_manifest_from_split(split: benchgen.BenchmarkSplit, setting: str,
                             split_name: str) -> dict:
    """Self-contained pair manifest for one (setting, split) bucket."""
    records = split.pairs.get(setting, {}).get(split_name, [])
    corpus = split.corpus
    pairs = []
    for i, rec in enumerate(records):
        src = corpus.record(rec.src_id)
        tgt = corpus.record(rec.tgt_id)
        for im in (src, tgt):
            if im.image_size[0] <= 0 or im.image_size[1] <= 0:
                raise InputError(f"image {im.image_id!r} has no usable dimensions")
        pairs.append({
            "pair_id": f"{setting}/{split_name}/{i:06d}",
            "src_id": src.image_id,
            "tgt_id": tgt.image_id,
            "category": src.species,
            "src_size": [src.image_size[0], src.image_size[1]],
            "tgt_size": [tgt.image_size[0], tgt.image_size[1]],
            "src_keypoints": [[float(x), float(y)] for x, y in src.keypoints],
            "tgt_keypoints": [[float(x), float(y)] for x, y in tgt.keypoints],
            "src_visibility": [bool(v) for v in src.visibility],
            "tgt_visibility": [bool(v) for v in tgt.visibility],
            "src_bbox": None if src.bbox is None else [float(v) for v in src.bbox],
            "tgt_bbox": None if tgt.bbox is None else [float(v) for v in tgt.bbox],
            "mutual_visible": [int(k) for k in rec.mutual_visible],
            "azimuth_difference": None,
        })
    return {"seed": split.seed, "setting": setting, "split": split_name, "pairs": pairs}


def dump_json(doc: Mapping, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n",
        encoding="utf-8")


def run_build_benchmark(corpus_doc: Mapping, cfg: RunConfig, out_dir: str | Path,
                        n_val: int = 20, n_test: int = 30,
                        holdout_below: int = 50) -> dict[str, Path]:
    validate(corpus_doc, "corpus")
    corpus = benchgen.corpus_from_coco(corpus_doc)
    split = benchgen.build_benchmark(corpus, n_val=n_val, n_test=n_test,
                                     holdout_below=holdout_below, seed=cfg.seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}
    chash = config_hash(cfg)

    manifest = benchgen.manifest_dict(split)
    manifest["config_hash"] = chash
    validate(manifest, "benchmark_manifest")
    path = out / "benchmark_manifest.json"
    dump_json(manifest, path)
    written["manifest"] = path

    stats = benchgen.stats_dict(split)
    stats["config_hash"] = chash
    stats["seed"] = cfg.seed
    validate(stats, "benchmark_stats")
    path = out / "benchmark_stats.json"
    dump_json(stats, path)
    written["stats"] = path

    for setting in benchgen.SETTINGS:
        for split_name in split.pairs.get(setting, {}):
            doc = pair_manifest_from_split(split, setting, split_name)
            validate(doc, "pair_manifest")
            path = out / f"pairs_{setting}_{split_name}.json"
            dump_json(doc, path)
            written[f"pairs_{setting}_{split_name}"] = path
    return written


# train ---------------------------------------------------------------------

def build_pair_batches(manifest: Mapping, features_dir: str | Path,
                       schema: SubgroupSchema, need_flipped: bool):
    """PairBatch list from a pair manifest plus raw feature files.

    Keypoints convert to grid coordinates of each image's own map. Flipped
    maps load when present; absence only errors later if an augmentation
    variant actually needs them.
    """
    from .trainer.augment import PairBatch

    validate(manifest, "pair_manifest")
    batches = []
    for rec in manifest["pairs"]:
        fs = load_features(features_dir, rec["src_id"], normalize=False)
        ft = load_features(features_dir, rec["tgt_id"], normalize=False)

        def to_grid(points, size, fmap):
            w, h = size
            out = []
            for x, y in points:
                g = image_to_grid(ImagePoint(float(x), float(y)), w, h,
                                  fmap.width, fmap.height)
                out.append([g.x, g.y])
            return np.asarray(out, dtype=np.float64)

        flipped_s = flipped_t = None
        if need_flipped:
            ps = feature_path(features_dir, rec["src_id"], "hflip")
            pt = feature_path(features_dir, rec["tgt_id"], "hflip")
            flipped_s = read_feature_map(ps) if ps.exists() else None
            flipped_t = read_feature_map(pt) if pt.exists() else None
        batches.append(PairBatch(
            source=fs, target=ft,
            kps_source=to_grid(rec["src_keypoints"], rec["src_size"], fs),
            kps_target=to_grid(rec["tgt_keypoints"], rec["tgt_size"], ft),
            vis_source=np.asarray(rec["src_visibility"], dtype=np.bool_),
            vis_target=np.asarray(rec["tgt_visibility"], dtype=np.bool_),
            flip_map=schema.flip_map,
            source_flipped=flipped_s, target_flipped=flipped_t,
            src_id=rec["src_id"], tgt_id=rec["tgt_id"]))
    return batches


def run_train(manifest: Mapping, features_dir: str | Path, cfg: RunConfig,
              schema: SubgroupSchema, out_dir: str | Path,
              steps: int | None = None) -> dict[str, Path]:
    from .trainer import PostProcessor, bottleneck_specs, save_checkpoint, train, write_trace

    tc = cfg.train_config(steps)
    batches = build_pair_batches(manifest, features_dir, schema, need_flipped=tc.augment)
    if not batches:
        raise InputError("pair manifest holds no training pairs")
    bottleneck = int(cfg.train.get("bottleneck_channels", 64))
    blocks = int(cfg.train.get("blocks", 2))
    channels = batches[0].source.channels
    proc = PostProcessor.build(bottleneck_specs(channels, bottleneck, blocks), seed=tc.seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    proc, trace = train(batches, tc, proc=proc, checkpoint_dir=out)
    ckpt = out / "postprocessor.ckpt"
    save_checkpoint(proc, ckpt)
    trace_path = out / "trace.csv"
    write_trace(trace_path, trace)
    return {"checkpoint": ckpt, "trace": trace_path}


# predict-pose --------------------------------------------------------------

def run_predict_pose(manifest: Mapping, features_dir: str | Path, cfg: RunConfig) -> dict:
    validate(manifest, "template_manifest")
    labels = tuple(manifest.get("labels", VARIANT_LABELS))
    sets = []
    for rec in manifest["sets"]:
        templates = {label: load_features(features_dir, rec["image_id"], label)
                     for label in labels}
        sets.append(TemplateSet(templates=templates))

    def one(rec: Mapping) -> dict:
        q = load_features(features_dir, rec["image_id"])
        mask = load_mask_or_full(features_dir, rec["image_id"], "identity",
                                 q.height, q.width)
        pred = predict_pose(q, mask, sets)
        return {"label": pred.label, "votes": dict(sorted(pred.votes.items())),
                "true_label": rec.get("true_label")}

    results = parallel_map(one, list(manifest["queries"]))
    by_query = {rec["query_id"]: res for rec, res in zip(manifest["queries"], results)}
    truths = [(r["label"], r["true_label"]) for r in by_query.values()
              if r.get("true_label")]
    accuracy = (sum(1 for p, t in truths if p == t) / len(truths)) if truths else None
    doc = {
        "seed": cfg.seed,
        "config_hash": config_hash(cfg),
        "labels": list(labels),
        "results": by_query,
        "accuracy": accuracy,
    }
    validate(doc, "pose_report")
    return doc
