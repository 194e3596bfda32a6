"""Command-line front end for the full experiment pipeline.

Verbs:

    scan      discover the corpus, write manifest.csv
    split     write the deterministic train/val assignment
    extract   fill the feature cache for every record
    train     full single-model run: train, evaluate, plots, artifacts
    evaluate  re-score a saved head on a split side
    compare   run several backbones over one shared split, emit the
              comparison table and multi-series plots
    report    re-render plots/tables from an existing artifact directory

Global flags (`--config`, `--out`, `--seed`, `--stub-backbone`,
`--cache-root`, `--set key=value`) work with every verb. Exit codes: 2
config error, 3 data/corpus error, 4 training/backbone error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__, metrics, trainer
from .backbones import (
    BackboneFailure,
    BackboneId,
    CheckpointUnavailable,
    STUB_CHECKPOINT,
    make_store,
)
from .config import ConfigError, ExperimentConfig, load_config, replace_backbone
from .dataset import (
    DataError,
    Dataset,
    scan_dataset,
    stratified_split,
    total_duration_s,
    write_manifest_csv,
    write_split_csv,
)
from .plots import plot_confusion, plot_history, write_curves_csv
from .trainer import NonFiniteLoss, TrainingHistory, load_model

logger = logging.getLogger(__name__)

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_TRAINING = 4

COMPARISON_HEADER = ["model", "length_min", "records", "accuracy"]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value config file")
    common.add_argument("--out", default="runs/latest", help="artifact directory (owned by this run)")
    common.add_argument("--seed", type=int, help="override train.seed")
    common.add_argument(
        "--stub-backbone",
        action="store_true",
        help="swap every backbone for its deterministic stub (CI mode, no downloads)",
    )
    common.add_argument("--cache-root", help="override cache.root")
    common.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override any config key (repeatable)",
    )
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    parser = argparse.ArgumentParser(prog="baved-ser", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"baved-ser {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True)

    sub.add_parser("scan", parents=[common], help="discover the corpus, write manifest.csv")
    sub.add_parser("split", parents=[common], help="write split.csv for the configured split")
    extract = sub.add_parser("extract", parents=[common], help="fill the feature cache")
    extract.add_argument("--workers", type=int, default=4, help="parallel extraction workers (stub only)")
    sub.add_parser("train", parents=[common], help="train one head over one backbone")
    evaluate = sub.add_parser("evaluate", parents=[common], help="re-score a saved head")
    evaluate.add_argument("--model", required=True, help="path to a saved head artifact (.npz)")
    evaluate.add_argument("--eval-split", choices=("train", "val"), default="val")
    sub.add_parser("compare", parents=[common], help="run the configured backbones on one shared split")
    sub.add_parser("report", parents=[common], help="re-render plots and tables from --out")
    return parser


def _resolved_config(args) -> ExperimentConfig:
    overrides: dict[str, str] = {}
    for item in args.overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, _, value = item.partition("=")
        overrides[key.strip()] = value.strip()
    if args.seed is not None:
        overrides["train.seed"] = str(args.seed)
    if args.cache_root:
        overrides["cache.root"] = args.cache_root
    if args.stub_backbone:
        overrides["backbone.checkpoint_ref"] = STUB_CHECKPOINT
    return load_config(args.config, overrides)


def _require_root(config: ExperimentConfig) -> Path:
    if not config.dataset_root:
        raise ConfigError("dataset.root is not set (config file or --set dataset.root=...)")
    root = Path(config.dataset_root)
    if not root.is_dir():
        raise DataError(f"dataset root does not exist: {root}")
    return root


def _cache_root(config: ExperimentConfig, out: Path) -> Path:
    return Path(config.cache_root) if config.cache_root else out / "feature_cache"


def _backbone_for(config: ExperimentConfig, name: str, stub: bool) -> BackboneId:
    return BackboneId(name, STUB_CHECKPOINT if stub else "")


def _fingerprint(dataset: Dataset, manifest_path: Path) -> dict:
    return {
        "record_count": len(dataset),
        "per_class_counts": {str(k): v for k, v in dataset.class_counts().items()},
        "speaker_count": len(dataset.speakers()),
        "manifest_sha256": hashlib.sha256(manifest_path.read_bytes()).hexdigest(),
    }


def _write_run_manifest(out: Path, config: ExperimentConfig, fingerprint: dict, timings: dict) -> Path:
    manifest = {
        "tool_version": __version__,
        "config": config.to_flat_dict(),
        "corpus": fingerprint,
        "timings_s": {k: round(v, 3) for k, v in timings.items()},
    }
    path = out / "run_manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _train_one(
    config: ExperimentConfig,
    dataset: Dataset,
    split,
    out: Path,
    cache_root: Path,
    timings: dict,
    label: str | None = None,
):
    """Train + evaluate one backbone/head pair, writing its artifact set
    into `out`; returns (model, history, report)."""
    out.mkdir(parents=True, exist_ok=True)
    label = label or config.backbone.cache_namespace

    start = time.perf_counter()
    store = make_store(
        config.backbone, dataset, cache_root=cache_root, cache_enabled=config.cache_enabled, layer=config.layer
    )
    model, history = trainer.train(config, dataset, store, train_ids=split.train_ids, val_ids=split.val_ids)
    timings[f"train_{label}_s"] = time.perf_counter() - start

    start = time.perf_counter()
    report = trainer.evaluate(model, dataset, split.val_ids, store)
    timings[f"evaluate_{label}_s"] = time.perf_counter() - start

    history.to_csv(out / "history.csv")
    history.to_json(out / "history.json")
    report.to_json(out / "metrics.json")
    metrics.write_confusion_csv(report.confusion, out / "confusion.csv")
    model.save(out / "head.npz")
    return model, history, report


def cmd_scan(args) -> int:
    config = _resolved_config(args)
    root = _require_root(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset = scan_dataset(root)
    manifest = write_manifest_csv(dataset, out / "manifest.csv")
    duration_min = total_duration_s(dataset) / 60.0
    print(
        f"{len(dataset)} records, {len(dataset.speakers())} speakers, "
        f"{duration_min:.1f} min of audio, per-level counts {dataset.class_counts()}"
    )
    print(f"manifest: {manifest}")
    return 0


def cmd_split(args) -> int:
    config = _resolved_config(args)
    root = _require_root(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset = scan_dataset(root)
    split = stratified_split(dataset, config.split_ratios, config.split_seed, config.speaker_disjoint)
    path = write_split_csv(split, out / "split.csv")
    print(f"train={len(split.train_ids)} val={len(split.val_ids)} -> {path}")
    return 0


def cmd_extract(args) -> int:
    config = _resolved_config(args)
    root = _require_root(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset = scan_dataset(root)
    store = make_store(
        config.backbone,
        dataset,
        cache_root=_cache_root(config, out),
        cache_enabled=True,
        layer=config.layer,
    )
    start = time.perf_counter()
    store.prefetch(dataset.records, workers=args.workers)
    print(
        f"extracted features for {len(dataset)} records with {config.backbone.cache_namespace} "
        f"in {time.perf_counter() - start:.1f}s -> {_cache_root(config, out)}"
    )
    return 0


def cmd_train(args) -> int:
    config = _resolved_config(args)
    root = _require_root(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    timings: dict[str, float] = {}

    start = time.perf_counter()
    dataset = scan_dataset(root)
    manifest = write_manifest_csv(dataset, out / "manifest.csv")
    timings["scan_s"] = time.perf_counter() - start

    split = stratified_split(dataset, config.split_ratios, config.split_seed, config.speaker_disjoint)
    write_split_csv(split, out / "split.csv")

    label = config.backbone.cache_namespace
    _, history, report = _train_one(config, dataset, split, out, _cache_root(config, out), timings, label)

    start = time.perf_counter()
    plot_history({label: history}, out)
    write_curves_csv({label: history}, out / "curves.csv")
    plot_confusion(report.confusion, out / f"confusion_{label}.png", title=label)
    timings["plots_s"] = time.perf_counter() - start

    _write_run_manifest(out, config, _fingerprint(dataset, manifest), timings)
    final = history.entries[-1]
    print(
        f"{label}: val_accuracy={report.accuracy:.4f} val_macro_f1={report.macro_f1:.4f} "
        f"(epoch {final.epoch}) artifacts -> {out}"
    )
    return 0


def cmd_evaluate(args) -> int:
    config = _resolved_config(args)
    root = _require_root(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model = load_model(args.model)
    if args.stub_backbone:
        model.backbone = BackboneId(model.backbone.name, STUB_CHECKPOINT)
    dataset = scan_dataset(root)
    split = stratified_split(dataset, config.split_ratios, config.split_seed, config.speaker_disjoint)
    ids = split.val_ids if args.eval_split == "val" else split.train_ids
    store = make_store(
        model.backbone, dataset, cache_root=_cache_root(config, out), cache_enabled=config.cache_enabled,
        layer=config.layer,
    )
    report = trainer.evaluate(model, dataset, ids, store)
    report.to_json(out / "metrics.json")
    metrics.write_confusion_csv(report.confusion, out / "confusion.csv")
    print(f"{args.eval_split}: accuracy={report.accuracy:.4f} macro_f1={report.macro_f1:.4f} -> {out}")
    return 0


def cmd_compare(args) -> int:
    config = _resolved_config(args)
    root = _require_root(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    timings: dict[str, float] = {}

    start = time.perf_counter()
    dataset = scan_dataset(root)
    manifest = write_manifest_csv(dataset, out / "manifest.csv")
    duration_min = total_duration_s(dataset) / 60.0
    timings["scan_s"] = time.perf_counter() - start

    # one shared split: the only way the rows are comparable
    split = stratified_split(dataset, config.split_ratios, config.split_seed, config.speaker_disjoint)
    write_split_csv(split, out / "split.csv")

    cache_root = _cache_root(config, out)
    histories: dict[str, TrainingHistory] = {}
    rows = []
    for name in config.compare_backbones:
        run_config = replace_backbone(config, _backbone_for(config, name, args.stub_backbone))
        label = run_config.backbone.cache_namespace
        _, history, report = _train_one(
            run_config, dataset, split, out / label, cache_root, timings, label
        )
        plot_confusion(report.confusion, out / f"confusion_{label}.png", title=label)
        histories[label] = history
        rows.append([label, repr(round(duration_min, 3)), len(dataset), repr(report.accuracy)])

    comparison = out / "comparison.csv"
    with comparison.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(COMPARISON_HEADER)
        writer.writerows(rows)

    plot_history(histories, out)
    write_curves_csv(histories, out / "curves.csv")
    _write_run_manifest(out, config, _fingerprint(dataset, manifest), timings)

    print(f"comparison over {len(rows)} models (shared split) -> {comparison}")
    for row in rows:
        print(f"  {row[0]}: accuracy={float(row[3]):.4f}")
    return 0


def cmd_report(args) -> int:
    out = Path(args.out)
    if not out.is_dir():
        raise DataError(f"artifact directory not found: {out}")

    histories: dict[str, TrainingHistory] = {}
    if (out / "history.csv").is_file():
        label = "model"
        manifest = out / "run_manifest.json"
        if manifest.is_file():
            run = json.loads(manifest.read_text())
            label = run["config"]["backbone.name"]
            if run["config"]["backbone.checkpoint_ref"] == STUB_CHECKPOINT:
                label += "__stub"
        histories[label] = TrainingHistory.from_csv(out / "history.csv")
    for sub in sorted(out.iterdir()):
        if sub.is_dir() and (sub / "history.csv").is_file():
            histories[sub.name] = TrainingHistory.from_csv(sub / "history.csv")
    if not histories:
        raise DataError(f"no history.csv found under {out}")

    plot_history(histories, out)
    write_curves_csv(histories, out / "curves.csv")
    for label in histories:
        source = out / label / "confusion.csv"
        if not source.is_file():
            source = out / "confusion.csv"
        if source.is_file():
            plot_confusion(metrics.read_confusion_csv(source), out / f"confusion_{label}.png", title=label)
    print(f"re-rendered plots for {sorted(histories)} -> {out}")
    return 0


HANDLERS = {
    "scan": cmd_scan,
    "split": cmd_split,
    "extract": cmd_extract,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "report": cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return HANDLERS[args.verb](args)
    except ConfigError as exc:
        logger.error("config error: %s", exc)
        return EXIT_CONFIG
    except DataError as exc:
        logger.error("data error: %s", exc)
        return EXIT_DATA
    except (NonFiniteLoss, CheckpointUnavailable, BackboneFailure, trainer.EmptyEvalSet) as exc:
        logger.error("training error: %s", exc)
        return EXIT_TRAINING


if __name__ == "__main__":
    sys.exit(main())
