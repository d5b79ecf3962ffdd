"""Command-line entry point: extract, train, recognize, evaluate and the
experiment subcommands (grid, compare-modes, learning-curve)."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import dataset as ds
from . import features as ft
from . import harness
from . import hmm
from . import recognizer as rec


def _add_feature_args(parser):
    parser.add_argument("--w", type=int, default=8, help="window width in pixels")
    parser.add_argument("--h", type=int, default=8, help="cells per window")
    parser.add_argument("--bins", type=int, default=5, help="orientation bins")
    parser.add_argument("--stride", type=int, default=1, help="columns per window step")
    parser.add_argument(
        "--weight-mode", choices=("unit", "magnitude"), default="unit"
    )
    parser.add_argument("--standard-height", type=int, default=64)


def _feature_config(args) -> ft.FeatureConfig:
    return ft.FeatureConfig(
        w=args.w,
        h=args.h,
        bins=args.bins,
        weight_mode=args.weight_mode,
        stride=args.stride,
        standard_height=args.standard_height,
    )


def _add_common(parser, mode=True):
    parser.add_argument("--root", required=True, help="dataset root directory")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--schema", default=None, help="decomposition TSV path")
    parser.add_argument(
        "--no-strict-schema",
        action="store_true",
        help="skip the full class-count arithmetic (synthetic corpora)",
    )
    parser.add_argument(
        "--split",
        default="15,5,5",
        help="train,validation,test sample counts per character",
    )
    parser.add_argument("--folds", type=int, default=4)
    if mode:
        parser.add_argument(
            "--mode", choices=("monolithic", "decomposed"), required=True
        )


def _split_sizes(args):
    sizes = tuple(int(x) for x in args.split.split(","))
    if len(sizes) != 3:
        raise SystemExit("--split needs three comma-separated counts")
    return sizes


def _int_list(text):
    return tuple(int(x) for x in text.split(","))


def _experiment_config(args, feature_grid=None, s_grid=None, g_grid=None):
    return harness.ExperimentConfig(
        dataset_root=args.root,
        out_dir=args.out,
        mode=getattr(args, "mode", "decomposed"),
        schema_path=args.schema,
        strict_schema=not args.no_strict_schema,
        feature_grid=tuple(feature_grid or (_feature_config(args),)),
        s_grid=tuple(s_grid or (args.states,)),
        g_grid=tuple(g_grid or (args.gaussians,)),
        split_sizes=_split_sizes(args),
        n_folds=args.folds,
        seed=args.seed,
    )


def cmd_extract(args):
    data = ds.load_dataset(args.root)
    fcfg = _feature_config(args)
    harness.extract_all(data, fcfg, args.out)
    print(f"cached features for {sum(len(v) for v in data.values())} samples")


def cmd_train(args):
    cfg = _experiment_config(args)
    data, schema = harness._load_inputs(cfg)
    n_samples = len(next(iter(data.values())))
    plan = ds.make_splits(n_samples, cfg.split_sizes, cfg.n_folds, cfg.seed)[0]
    fcfg = cfg.feature_grid[0]
    features = harness.extract_all(data, fcfg, Path(args.out) / "cache")
    train_ords = {c: plan.train for c in data}
    lexicon, result = harness.train_fold(
        features, train_ords, cfg, schema, fcfg, args.states, args.gaussians
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    hmm.save_models(out / "models.txt", lexicon.models)
    with open(out / "lexicon.json", "w", encoding="utf-8") as fh:
        json.dump(
            {
                "entries": {k: list(v) for k, v in sorted(lexicon.entries.items())},
                "feature_config": {
                    "w": fcfg.w, "h": fcfg.h, "bins": fcfg.bins,
                    "weight_mode": fcfg.weight_mode, "stride": fcfg.stride,
                    "standard_height": fcfg.standard_height,
                },
            },
            fh,
            indent=2,
            sort_keys=True,
        )
    print(f"trained {len(lexicon.models)} class models "
          f"({result.skipped} sequences skipped); wrote {out / 'models.txt'}")


def _load_lexicon(model_dir):
    model_dir = Path(model_dir)
    models = hmm.load_models(model_dir / "models.txt")
    with open(model_dir / "lexicon.json", "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    entries = {k: tuple(v) for k, v in payload["entries"].items()}
    fcfg = ft.FeatureConfig(**payload["feature_config"])
    return rec.Lexicon(entries=entries, models=models), fcfg


def cmd_recognize(args):
    lexicon, fcfg = _load_lexicon(args.models)
    image = ds.load_image(args.image)
    obs = ft.extract_features(image, fcfg)
    try:
        result = rec.recognize(obs, lexicon, args.n_best)
    except rec.AllImpossible:
        print("result: <unalignable>")
        return 1
    if args.json:
        print(
            json.dumps(
                {
                    "character_id": result.character_id,
                    "log_likelihood": result.log_likelihood,
                    "boundaries": list(result.boundaries),
                    "n_best": [[c, s] for c, s in result.n_best],
                }
            )
        )
    else:
        print(f"character: {result.character_id}")
        print(f"log-likelihood: {result.log_likelihood:.6f}")
        print(f"boundaries: {' '.join(map(str, result.boundaries)) or '-'}")
        for rank, (cid, score) in enumerate(result.n_best, 1):
            print(f"  {rank}. {cid}  {score:.6f}")
    return 0


def cmd_evaluate(args):
    lexicon, fcfg = _load_lexicon(args.models)
    data = ds.load_dataset(args.root)
    n_samples = len(next(iter(data.values())))
    plan = ds.make_splits(n_samples, _split_sizes(args), args.folds, args.seed)[0]
    ordinals = {"train": plan.train, "validation": plan.validation, "test": plan.test}[
        args.eval_split
    ]
    features = harness.extract_all(data, fcfg, Path(args.out) / "cache")
    metrics = harness.evaluate_split(
        features, {c: ordinals for c in data}, lexicon, args.eval_split
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    harness.write_metrics_csv(
        out / "metrics.csv",
        [
            dict(
                fold=0, mode="evaluate", w=fcfg.w, h=fcfg.h, S="", G="",
                split=args.eval_split, accuracy=metrics.accuracy,
            )
        ],
    )
    harness.write_confusion_csv(out / "confusion.csv", metrics)
    print(f"{args.eval_split} accuracy: {metrics.accuracy:.4f} "
          f"({metrics.n_correct}/{metrics.n_total})")


def cmd_grid(args):
    feature_grid = [
        ft.FeatureConfig(
            w=w, h=h, bins=args.bins, weight_mode=args.weight_mode,
            stride=args.stride, standard_height=args.standard_height,
        )
        for w in _int_list(args.w_grid)
        for h in _int_list(args.h_grid)
    ]
    cfg = _experiment_config(
        args,
        feature_grid=feature_grid,
        s_grid=_int_list(args.s_grid),
        g_grid=_int_list(args.g_grid),
    )
    summary = harness.run_experiment(cfg)
    print(json.dumps(summary, indent=2, sort_keys=True))


def cmd_compare_modes(args):
    cfg = _experiment_config(args)
    result = harness.compare_modes(cfg)
    print((Path(args.out) / "comparison.txt").read_text(encoding="utf-8"), end="")
    return 0 if result["gap_points"] >= 0 else 1


def cmd_learning_curve(args):
    cfg = _experiment_config(args)
    points = harness.learning_curve(cfg, _int_list(args.n_train))
    for p in points:
        print(
            f"n_train={p.n_train}  train={p.train_accuracy:.4f}  "
            f"validation={p.validation_accuracy:.4f}"
        )


def build_parser():
    parser = argparse.ArgumentParser(
        prog="glyphhmm",
        description="HMM-based isolated character recognition with implicit "
        "shape segmentation",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="extract features into a cache directory")
    p.add_argument("--root", required=True)
    p.add_argument("--out", required=True)
    _add_feature_args(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train class models on the training split")
    _add_common(p)
    _add_feature_args(p)
    p.add_argument("--states", type=int, default=10, help="states per class model")
    p.add_argument("--gaussians", type=int, default=4, help="final mixture size")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("recognize", help="recognize a single character image")
    p.add_argument("--models", required=True, help="directory written by train")
    p.add_argument("--image", required=True)
    p.add_argument("--n-best", type=int, default=5)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_recognize)

    p = sub.add_parser("evaluate", help="score a dataset split with trained models")
    p.add_argument("--models", required=True)
    p.add_argument("--root", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split", default="15,5,5")
    p.add_argument("--folds", type=int, default=4)
    p.add_argument(
        "--eval-split", choices=("train", "validation", "test"), default="test"
    )
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("grid", help="grid search with cross-validation")
    _add_common(p)
    p.add_argument("--w-grid", default="8")
    p.add_argument("--h-grid", default="8")
    p.add_argument("--s-grid", default="10")
    p.add_argument("--g-grid", default="4")
    p.add_argument("--bins", type=int, default=5)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--weight-mode", choices=("unit", "magnitude"), default="unit")
    p.add_argument("--standard-height", type=int, default=64)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser(
        "compare-modes", help="monolithic vs decomposed on one shared split"
    )
    _add_common(p, mode=False)
    p.set_defaults(split="12,0,13", folds=1)
    _add_feature_args(p)
    p.add_argument("--states", type=int, default=10)
    p.add_argument("--gaussians", type=int, default=4)
    p.set_defaults(func=cmd_compare_modes)

    p = sub.add_parser("learning-curve", help="retrain at growing training sizes")
    _add_common(p)
    _add_feature_args(p)
    p.add_argument("--states", type=int, default=10)
    p.add_argument("--gaussians", type=int, default=4)
    p.add_argument("--n-train", default="5,10,15")
    p.set_defaults(func=cmd_learning_curve)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    return args.func(args) or 0


if __name__ == "__main__":
    sys.exit(main())
