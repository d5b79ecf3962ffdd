"""Experiment harness: grid search, cross-validation, mode comparison, curves.

All randomness flows from the single seed in ExperimentConfig. Metric CSVs are
written deterministically (wall-clock timing goes to the human-readable
summary only) so identical configurations reproduce byte-identical files.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import features as ft
from . import hmm
from . import recognizer as rec

log = logging.getLogger(__name__)

# published reference accuracies for the 12-train / 13-test comparison table;
# the DCT nearest-neighbour figure is a cited external system
REFERENCE_COMPARISON = {
    "dct_nn": 33.3,
    "monolithic_hmm": 39.79,
    "decomposed_hmm": 49.22,
}

METRICS_HEADER = ["fold", "mode", "w", "h", "S", "G", "split", "accuracy", "seconds"]


class EmptyPredictionSet(Exception):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    dataset_root: str
    out_dir: str
    mode: str = "decomposed"  # or "monolithic"
    schema_path: str | None = None
    strict_schema: bool = True
    feature_grid: tuple = (ft.FeatureConfig(),)
    s_grid: tuple = (10,)
    g_grid: tuple = (4,)
    split_sizes: tuple = (15, 5, 5)
    n_folds: int = 4
    seed: int = 0
    iterations_per_level: int = 2
    n_best: int = 5

    def __post_init__(self):
        if self.mode not in ("monolithic", "decomposed"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not self.feature_grid or not self.s_grid or not self.g_grid:
            raise ValueError("parameter grids must be non-empty")


@dataclass(eq=False)
class Metrics:
    accuracy: float
    n_correct: int
    n_total: int
    per_character: dict
    confusion: dict  # (truth, predicted) -> count
    split: str = ""
    seconds: float = 0.0


@dataclass(frozen=True)
class LearningCurvePoint:
    n_train: int
    train_accuracy: float
    validation_accuracy: float


def evaluate(predictions, split: str = "") -> Metrics:
    """Accuracy and confusion counts; an unalignable sample counts as wrong."""
    if not predictions:
        raise EmptyPredictionSet("no predictions to evaluate")
    per_character, confusion = {}, {}
    n_correct = 0
    for truth, result in predictions:
        predicted = result.character_id if result is not None else None
        correct = predicted == truth
        n_correct += correct
        got, total = per_character.get(truth, (0, 0))
        per_character[truth] = (got + correct, total + 1)
        if not correct:
            key = (truth, predicted if predicted is not None else "<unalignable>")
            confusion[key] = confusion.get(key, 0) + 1
    return Metrics(
        accuracy=n_correct / len(predictions),
        n_correct=n_correct,
        n_total=len(predictions),
        per_character=per_character,
        confusion=confusion,
        split=split,
    )


def _feature_key(cfg: ft.FeatureConfig) -> str:
    return (
        f"w{cfg.w}_h{cfg.h}_b{cfg.bins}_{cfg.weight_mode}"
        f"_s{cfg.stride}_H{cfg.standard_height}"
    )


def extract_all(data: dict, fcfg: ft.FeatureConfig, cache_dir=None) -> dict:
    """Feature sequences per character, using (and filling) the binary cache."""
    out = {}
    base = Path(cache_dir) / _feature_key(fcfg) if cache_dir is not None else None
    for character_id, samples in data.items():
        seqs = []
        for sample in samples:
            if base is not None:
                path = base / character_id / f"{sample.writer_index:03d}.fc"
                if path.is_file():
                    seq, _ = ft.load_feature_cache(path)
                    seqs.append(seq)
                    continue
            seq = ft.extract_features(sample.image, fcfg)
            if base is not None:
                path.parent.mkdir(parents=True, exist_ok=True)
                ft.save_feature_cache(path, seq, fcfg)
            seqs.append(seq)
        out[character_id] = seqs
    return out


def _labels_for(character_id: str, mode: str, schema) -> tuple:
    if mode == "decomposed" and schema is not None:
        # characters outside the schema (e.g. obsolete ones) fall back to a
        # dedicated whole-character class
        return tuple(schema.entries.get(character_id, (character_id,)))
    return (character_id,)


def train_fold(features: dict, ordinals_by_char: dict, cfg: ExperimentConfig,
               schema, fcfg, n_states: int, target_g: int):
    """Train class models on the given ordinals; returns a Lexicon."""
    labeled = []
    entries = {}
    for character_id, seqs in features.items():
        label = _labels_for(character_id, cfg.mode, schema)
        entries[character_id] = label
        for ordinal in ordinals_by_char[character_id]:
            labeled.append((seqs[ordinal], label))
    schedule = hmm.TrainingSchedule(
        target_G=target_g, iterations_per_level=cfg.iterations_per_level
    )
    result = hmm.embedded_train(labeled, n_states, schedule)
    return rec.Lexicon(entries=entries, models=result.models), result


def evaluate_split(features: dict, ordinals_by_char: dict, lexicon, split: str,
                   n_best: int = 1) -> Metrics:
    predictions = []
    for character_id in sorted(features):
        for ordinal in ordinals_by_char[character_id]:
            try:
                result = rec.recognize(features[character_id][ordinal], lexicon, n_best)
            except rec.AllImpossible:
                result = None
            predictions.append((character_id, result))
    return evaluate(predictions, split=split)


def _load_inputs(cfg: ExperimentConfig):
    data = ds.load_dataset(cfg.dataset_root)
    schema = None
    if cfg.mode == "decomposed":
        path = cfg.schema_path or ds.default_schema_path()
        schema = ds.load_schema(path, strict=cfg.strict_schema)
    return data, schema


def _split_ordinals(data: dict, plan: ds.SplitPlan):
    # every character shares the same ordinal split
    return (
        {c: plan.train for c in data},
        {c: plan.validation for c in data},
        {c: plan.test for c in data},
    )


def write_metrics_csv(path, rows) -> None:
    """Rows are dicts over METRICS_HEADER; the seconds column is left blank so
    reruns with the same seed are byte-identical."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRICS_HEADER)
        for row in rows:
            writer.writerow(
                [
                    row["fold"], row["mode"], row["w"], row["h"], row["S"],
                    row["G"], row["split"], f"{row['accuracy']:.6f}", "",
                ]
            )


def write_confusion_csv(path, metrics: Metrics) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["truth", "predicted", "count"])
        for (truth, predicted), count in sorted(metrics.confusion.items()):
            writer.writerow([truth, predicted, count])


def run_experiment(cfg: ExperimentConfig):
    """Grid search with cross-validation, then a single test evaluation.

    For every grid point and fold: train on the fold's training ordinals and
    score the validation ordinals. The grid point with the best mean
    validation accuracy (ties toward smaller S, then G) is retrained on fold 0
    and scored once on the shared test set.
    """
    started = time.perf_counter()
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cache_dir = out_dir / "cache"

    data, schema = _load_inputs(cfg)
    n_samples = len(next(iter(data.values())))
    plans = ds.make_splits(n_samples, cfg.split_sizes, cfg.n_folds, cfg.seed)

    rows, grid_scores = [], {}
    for fcfg in cfg.feature_grid:
        features = extract_all(data, fcfg, cache_dir)
        for n_states in cfg.s_grid:
            for target_g in cfg.g_grid:
                point = (fcfg, n_states, target_g)
                accs = []
                for plan in plans:
                    train_ords, val_ords, _ = _split_ordinals(data, plan)
                    assert not set(plan.train) & set(plan.test), "split hygiene"
                    lexicon, _ = train_fold(
                        features, train_ords, cfg, schema, fcfg, n_states, target_g
                    )
                    metrics = evaluate_split(features, val_ords, lexicon, "validation")
                    accs.append(metrics.accuracy)
                    rows.append(
                        dict(
                            fold=plan.fold_index, mode=cfg.mode, w=fcfg.w, h=fcfg.h,
                            S=n_states, G=target_g, split="validation",
                            accuracy=metrics.accuracy,
                        )
                    )
                grid_scores[point] = float(np.mean(accs))

    best = min(
        grid_scores,
        key=lambda p: (-grid_scores[p], p[1], p[2], p[0].w, p[0].h),
    )
    best_fcfg, best_s, best_g = best

    features = extract_all(data, best_fcfg, cache_dir)
    plan = plans[0]
    train_ords, _, test_ords = _split_ordinals(data, plan)
    lexicon, _ = train_fold(features, train_ords, cfg, schema, best_fcfg, best_s, best_g)
    train_metrics = evaluate_split(features, train_ords, lexicon, "train")
    test_metrics = None
    if plan.test:
        test_metrics = evaluate_split(features, test_ords, lexicon, "test")
    for metrics in filter(None, (train_metrics, test_metrics)):
        rows.append(
            dict(
                fold=plan.fold_index, mode=cfg.mode, w=best_fcfg.w, h=best_fcfg.h,
                S=best_s, G=best_g, split=metrics.split, accuracy=metrics.accuracy,
            )
        )

    write_metrics_csv(out_dir / "metrics.csv", rows)
    if test_metrics is not None:
        write_confusion_csv(out_dir / "confusion.csv", test_metrics)

    elapsed = time.perf_counter() - started
    summary = [
        f"mode: {cfg.mode}",
        f"seed: {cfg.seed}",
        f"grid points: {len(grid_scores)}",
        f"best point: w={best_fcfg.w} h={best_fcfg.h} S={best_s} G={best_g}",
        f"best mean validation accuracy: {grid_scores[best]:.4f}",
        f"train accuracy (fold 0): {train_metrics.accuracy:.4f}",
    ]
    if test_metrics is not None:
        summary.append(f"test accuracy: {test_metrics.accuracy:.4f}")
    summary.append(f"wall clock seconds: {elapsed:.1f}")
    (out_dir / "summary.txt").write_text("\n".join(summary) + "\n", encoding="utf-8")

    return {
        "best": {"w": best_fcfg.w, "h": best_fcfg.h, "S": best_s, "G": best_g},
        "validation_accuracy": grid_scores[best],
        "train_accuracy": train_metrics.accuracy,
        "test_accuracy": test_metrics.accuracy if test_metrics else None,
        "grid_scores": {
            f"w{p[0].w}_h{p[0].h}_S{p[1]}_G{p[2]}": v for p, v in grid_scores.items()
        },
    }


def compare_modes(cfg: ExperimentConfig):
    """Both modes on the identical 12-train / 13-test split, one table out.

    The published reference row (including the cited DCT nearest-neighbour
    system) is printed alongside for comparison.
    """
    started = time.perf_counter()
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cache_dir = out_dir / "cache"

    data = ds.load_dataset(cfg.dataset_root)
    schema = None
    schema_path = cfg.schema_path or ds.default_schema_path()
    if Path(schema_path).is_file():
        schema = ds.load_schema(schema_path, strict=cfg.strict_schema)

    n_samples = len(next(iter(data.values())))
    plan = ds.make_splits(n_samples, cfg.split_sizes, 1, cfg.seed)[0]
    fcfg = cfg.feature_grid[0]
    n_states, target_g = cfg.s_grid[0], cfg.g_grid[0]
    features = extract_all(data, fcfg, cache_dir)
    train_ords, _, test_ords = _split_ordinals(data, plan)

    measured = {}
    rows = []
    for mode in ("monolithic", "decomposed"):
        mode_cfg = replace(cfg, mode=mode)
        mode_schema = schema if mode == "decomposed" else None
        lexicon, _ = train_fold(
            features, train_ords, mode_cfg, mode_schema, fcfg, n_states, target_g
        )
        metrics = evaluate_split(features, test_ords, lexicon, "test")
        measured[mode] = metrics.accuracy
        rows.append(
            dict(
                fold=0, mode=mode, w=fcfg.w, h=fcfg.h, S=n_states, G=target_g,
                split="test", accuracy=metrics.accuracy,
            )
        )
    write_metrics_csv(out_dir / "metrics.csv", rows)

    gap = 100.0 * (measured["decomposed"] - measured["monolithic"])
    lines = [
        "system                              accuracy",
        f"DCT-NN (cited reference)            {REFERENCE_COMPARISON['dct_nn']:.2f}%",
        f"monolithic HMM (reference)          {REFERENCE_COMPARISON['monolithic_hmm']:.2f}%",
        f"decomposed HMM (reference)          {REFERENCE_COMPARISON['decomposed_hmm']:.2f}%",
        f"monolithic HMM (this run)           {100 * measured['monolithic']:.2f}%",
        f"decomposed HMM (this run)           {100 * measured['decomposed']:.2f}%",
        f"measured decomposed-vs-monolithic gap: {gap:.2f} points",
        f"wall clock seconds: {time.perf_counter() - started:.1f}",
    ]
    (out_dir / "comparison.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    if gap < 0:
        log.warning("decomposed mode did not beat monolithic mode (gap %.2f)", gap)
    return {"measured": measured, "reference": dict(REFERENCE_COMPARISON), "gap_points": gap}


def learning_curve(cfg: ExperimentConfig, n_train_values):
    """Retrain at increasing training-set sizes; smaller sets are prefixes.

    Emits ``learning_curve.csv`` and an SVG line plot.
    """
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cache_dir = out_dir / "cache"

    data, schema = _load_inputs(cfg)
    n_samples = len(next(iter(data.values())))
    plan = ds.make_splits(n_samples, cfg.split_sizes, cfg.n_folds, cfg.seed)[0]
    n_train_values = sorted(set(int(n) for n in n_train_values))
    if n_train_values[-1] > len(plan.train):
        raise ds.InfeasiblePlan(
            f"{n_train_values[-1]} training samples requested, "
            f"{len(plan.train)} available"
        )
    if n_train_values[0] < 1:
        raise ds.InfeasiblePlan("need at least one training sample")

    fcfg = cfg.feature_grid[0]
    n_states, target_g = cfg.s_grid[0], cfg.g_grid[0]
    features = extract_all(data, fcfg, cache_dir)
    _, val_ords, _ = _split_ordinals(data, plan)

    points = []
    for n_train in n_train_values:
        train_ords = {c: plan.train[:n_train] for c in data}
        lexicon, _ = train_fold(features, train_ords, cfg, schema, fcfg, n_states, target_g)
        train_metrics = evaluate_split(features, train_ords, lexicon, "train")
        val_metrics = evaluate_split(features, val_ords, lexicon, "validation")
        points.append(
            LearningCurvePoint(
                n_train=n_train,
                train_accuracy=train_metrics.accuracy,
                validation_accuracy=val_metrics.accuracy,
            )
        )

    with open(out_dir / "learning_curve.csv", "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["n_train", "train_accuracy", "validation_accuracy"])
        for p in points:
            writer.writerow(
                [p.n_train, f"{p.train_accuracy:.6f}", f"{p.validation_accuracy:.6f}"]
            )
    _plot_learning_curve(points, out_dir / "learning_curve.svg")
    return points


def _plot_learning_curve(points, path) -> None:
    import matplotlib

    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    xs = [p.n_train for p in points]
    ax.plot(xs, [p.train_accuracy for p in points], marker="o", label="train")
    ax.plot(xs, [p.validation_accuracy for p in points], marker="s", label="validation")
    ax.set_xlabel("training samples per character")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0, 1.05)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
