"""Command-line interface.

Subcommands: match, align, evaluate, build-benchmark, train, predict-pose.
Exit codes: 0 success, 2 input error, 3 numerical failure. Outputs are
canonical JSON (sorted keys) stamped with the config hash and seed, so a
rerun with identical inputs is byte-identical. GEOMATCH_THREADS caps
per-pair parallelism.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import pipelines
from .config import load_run_config
from .errors import InputError, NumericalError


def _read_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InputError(f"file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise InputError(f"{path} is not valid JSON: {e}") from None


def _overrides(args: argparse.Namespace) -> dict:
    pairs = {
        "seed": getattr(args, "seed", None),
        "features_dir": getattr(args, "features_dir", None),
        "output_dir": getattr(args, "out_dir", None),
        "sampling": getattr(args, "sampling", None),
        "inference.mode": getattr(args, "mode", None),
        "inference.window_size": getattr(args, "window", None),
        "inference.temperature": getattr(args, "temperature", None),
        "inference.kernel_sigma": getattr(args, "sigma", None),
        "align.metric": getattr(args, "metric", None),
        "train.steps": getattr(args, "steps", None),
    }
    variants = getattr(args, "variants", None)
    if variants is not None:
        pairs["align.variants"] = [v.strip() for v in variants.split(",") if v.strip()]
    return pairs


def _config(args: argparse.Namespace):
    return load_run_config(getattr(args, "config", None), _overrides(args))


def _require_features_dir(cfg) -> str:
    if cfg.features_dir is None:
        raise InputError("a features directory is required (--features-dir or config)")
    return cfg.features_dir


def _load_schemas(args: argparse.Namespace, manifest: dict | None = None):
    schema_file = getattr(args, "schema", None)
    schema_dir = getattr(args, "schema_dir", None)
    if schema_file and schema_dir:
        raise InputError("pass either --schema or --schema-dir, not both")
    if schema_file:
        schema = pipelines.load_subgroup_schema(schema_file)
        if manifest is None:
            return {schema.category: schema}
        cats = {rec["category"] for rec in manifest.get("pairs", [])}
        return {cat: schema for cat in cats} or {schema.category: schema}
    if schema_dir:
        return pipelines.load_schema_dir(schema_dir)
    return {}


def cmd_match(args: argparse.Namespace) -> int:
    cfg = _config(args)
    manifest = _read_json(args.manifest)
    doc = pipelines.run_match(manifest, _require_features_dir(cfg), cfg)
    pipelines.dump_json(doc, args.out)
    print(f"matched {len(doc['predictions'])} pairs -> {args.out}")
    return 0


def cmd_align(args: argparse.Namespace) -> int:
    cfg = _config(args)
    manifest = _read_json(args.manifest)
    doc = pipelines.run_align(manifest, _require_features_dir(cfg), cfg)
    pipelines.dump_json(doc, args.out)
    chosen = [r["label"] for r in doc["results"].values()]
    summary = {label: chosen.count(label) for label in sorted(set(chosen))}
    print(f"aligned {len(chosen)} pairs {summary} -> {args.out}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = _config(args)
    manifest = _read_json(args.manifest)
    predictions = _read_json(args.predictions)
    try:
        alphas = [float(a) for a in args.alpha.split(",") if a.strip()]
    except ValueError:
        raise InputError(f"bad alpha list {args.alpha!r}")
    if not alphas or any(a <= 0 for a in alphas):
        raise InputError(f"bad alpha list {args.alpha!r}")
    schemas = _load_schemas(args, manifest) if args.geo_split else {}
    doc = pipelines.run_evaluate(manifest, predictions, cfg, alphas=alphas,
                                 reference=args.reference, schemas=schemas)
    pipelines.dump_json(doc, args.out)
    if args.plots:
        plot_dir = Path(args.plots)
        plot_dir.mkdir(parents=True, exist_ok=True)
        for name, svg in pipelines.report_charts(doc).items():
            (plot_dir / f"{name}.svg").write_text(svg, encoding="utf-8")
    shown = {a: round(v["per_point"], 4) for a, v in doc["report"]["pck"].items()}
    print(f"evaluated {doc['report']['n_pairs']} pairs, PCK {shown} -> {args.out}")
    return 0


def cmd_build_benchmark(args: argparse.Namespace) -> int:
    cfg = _config(args)
    corpus_doc = _read_json(args.corpus)
    written = pipelines.run_build_benchmark(
        corpus_doc, cfg, args.out_dir,
        n_val=args.n_val, n_test=args.n_test, holdout_below=args.holdout_below)
    print(f"wrote {len(written)} benchmark files to {args.out_dir}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _config(args)
    manifest = _read_json(args.manifest)
    if not args.schema:
        raise InputError("--schema is required for training (flip permutation)")
    schema = pipelines.load_subgroup_schema(args.schema)
    written = pipelines.run_train(manifest, _require_features_dir(cfg), cfg,
                                  schema, args.out_dir, steps=args.steps)
    print(f"trained -> {written['checkpoint']} (trace {written['trace']})")
    return 0


def cmd_predict_pose(args: argparse.Namespace) -> int:
    cfg = _config(args)
    manifest = _read_json(args.templates)
    doc = pipelines.run_predict_pose(manifest, _require_features_dir(cfg), cfg)
    pipelines.dump_json(doc, args.out)
    acc = doc.get("accuracy")
    suffix = f", accuracy {acc:.3f}" if acc is not None else ""
    print(f"predicted {len(doc['results'])} queries{suffix} -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geomatch",
        description="Geometry-aware semantic correspondence over precomputed dense features")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, features: bool = True) -> None:
        p.add_argument("--config", help="run config JSON file")
        p.add_argument("--seed", type=int, default=None)
        if features:
            p.add_argument("--features-dir", default=None,
                           help="directory of <image-id>__<variant>.npy files")

    p = sub.add_parser("match", help="match keypoints across pairs")
    p.add_argument("manifest", help="pair manifest JSON")
    common(p)
    p.add_argument("--mode", choices=["argmax", "soft", "window", "kernel"], default=None)
    p.add_argument("--window", type=int, default=None, help="window size (cells)")
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--sigma", type=float, default=None, help="kernel soft-argmax sigma")
    p.add_argument("--sampling", choices=["bilinear", "nearest"], default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("align", help="choose the pose variant minimizing matching distance")
    p.add_argument("manifest", help="alignment manifest JSON")
    common(p)
    p.add_argument("--variants", default=None, help="comma list, must start with identity")
    p.add_argument("--metric", choices=["imd", "mutual_nn"], default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("evaluate", help="score predictions against annotations")
    p.add_argument("manifest", help="pair manifest JSON")
    p.add_argument("predictions", help="predictions JSON from match")
    common(p, features=False)
    p.add_argument("--alpha", default="0.01,0.05,0.1", help="comma list of PCK thresholds")
    p.add_argument("--reference", choices=["bbox", "image"], default="bbox")
    p.add_argument("--geo-split", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--schema", default=None, help="subgroup schema JSON applied to all pairs")
    p.add_argument("--schema-dir", default=None, help="directory of per-category schema JSON")
    p.add_argument("--plots", default=None, help="directory for SVG charts")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("build-benchmark", help="deterministic pair benchmark from a corpus")
    p.add_argument("corpus", help="COCO-style keypoint JSON")
    common(p, features=False)
    p.add_argument("--n-val", type=int, default=20)
    p.add_argument("--n-test", type=int, default=30)
    p.add_argument("--holdout-below", type=int, default=50)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_build_benchmark)

    p = sub.add_parser("train", help="train the feature post-processor")
    p.add_argument("manifest", help="pair manifest JSON (train pairs)")
    common(p)
    p.add_argument("--schema", required=False, help="subgroup schema JSON (flip permutation)")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict-pose", help="vote pose label against template sets")
    p.add_argument("templates", help="template manifest JSON")
    common(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict_pose)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
