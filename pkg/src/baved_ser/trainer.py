"""Head training loop: seeded mini-batches over frozen features.

Per epoch: shuffle the train ids, fetch features through the cache,
forward + cross-entropy + one Adam step per mini-batch, then a full
validation pass (loss, macro-F1, accuracy). History carries one row per
epoch. Everything is a deterministic function of (config, corpus): the
shuffle, parameter init and dropout draw from independent streams of the
experiment seed.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import metrics
from .backbones import BackboneId, FeatureStore
from .config import ExperimentConfig
from .dataset import Dataset, RecordMeta, labels_for_records, records_for_ids, stratified_split
from .heads import HeadConfig, build_head, cross_entropy, load_head, save_head, POOLERS

logger = logging.getLogger(__name__)

HISTORY_HEADER = ["epoch", "train_loss", "val_loss", "val_macro_f1", "val_accuracy"]
EVAL_BATCH = 64


class NonFiniteLoss(Exception):
    """Training loss went NaN/Inf; message carries epoch and batch index."""


class EmptyEvalSet(ValueError):
    """evaluate() called with no record ids."""


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    val_macro_f1: float
    val_accuracy: float


@dataclass
class TrainingHistory:
    entries: list[EpochStats]

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(HISTORY_HEADER)
            for e in self.entries:
                writer.writerow(
                    [e.epoch, repr(e.train_loss), repr(e.val_loss), repr(e.val_macro_f1), repr(e.val_accuracy)]
                )
        return path

    @classmethod
    def from_csv(cls, path: str | Path) -> "TrainingHistory":
        entries = []
        with Path(path).open(newline="") as handle:
            for row in csv.DictReader(handle):
                entries.append(
                    EpochStats(
                        epoch=int(row["epoch"]),
                        train_loss=float(row["train_loss"]),
                        val_loss=float(row["val_loss"]),
                        val_macro_f1=float(row["val_macro_f1"]),
                        val_accuracy=float(row["val_accuracy"]),
                    )
                )
        return cls(entries=entries)

    def to_json(self, path: str | Path) -> Path:
        path = Path(path)
        rows = [vars(e) for e in self.entries]
        path.write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")
        return path


@dataclass
class TrainedModel:
    head: object
    backbone: BackboneId
    head_config: HeadConfig
    seed: int
    final_epoch: int

    def save(self, path: str | Path) -> Path:
        return save_head(
            path,
            self.head,
            meta={
                "backbone_name": self.backbone.name,
                "checkpoint_ref": self.backbone.checkpoint_ref,
                "train_seed": self.seed,
                "final_epoch": self.final_epoch,
            },
        )


def load_model(path: str | Path) -> TrainedModel:
    head, meta = load_head(path)
    return TrainedModel(
        head=head,
        backbone=BackboneId(meta["backbone_name"], meta["checkpoint_ref"]),
        head_config=head.config,
        seed=int(meta["train_seed"]),
        final_epoch=int(meta["final_epoch"]),
    )


class Adam:
    """Adaptive per-parameter optimizer (standard first/second moment
    estimates with bias correction)."""

    def __init__(self, params: dict[str, np.ndarray], lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m = {k: np.zeros_like(v) for k, v in params.items()}
        self._v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.step_count += 1
        correction1 = 1.0 - self.beta1**self.step_count
        correction2 = 1.0 - self.beta2**self.step_count
        for key, grad in grads.items():
            m = self._m[key] = self.beta1 * self._m[key] + (1.0 - self.beta1) * grad
            v = self._v[key] = self.beta2 * self._v[key] + (1.0 - self.beta2) * grad * grad
            self.params[key] -= self.lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)


class _FeatureBatcher:
    """Assembles head inputs from the store, memoizing per record so each
    record's features are pulled from disk at most once per run."""

    def __init__(self, store: FeatureStore, head_config: HeadConfig):
        self.store = store
        self.config = head_config
        self._pooled: dict[str, np.ndarray] = {}
        self._frames: dict[str, np.ndarray] = {}

    def _pooled_for(self, record: RecordMeta) -> np.ndarray:
        if record.record_id not in self._pooled:
            self._pooled[record.record_id] = POOLERS[self.config.pooling](self.store.get(record))
        return self._pooled[record.record_id]

    def _frames_for(self, record: RecordMeta) -> np.ndarray:
        if record.record_id not in self._frames:
            # memoized as float32; upcast happens on padded assignment
            self._frames[record.record_id] = self.store.get(record).frames
        return self._frames[record.record_id]

    def batch(self, records: list[RecordMeta]):
        """Returns (args...) to splat into head.forward / loss_and_grads."""
        if self.config.kind == "mlp":
            return (np.stack([self._pooled_for(r) for r in records]),)
        frame_list = [self._frames_for(r) for r in records]
        lengths = np.array([f.shape[0] for f in frame_list], dtype=np.int64)
        width = frame_list[0].shape[1]
        padded = np.zeros((len(frame_list), int(lengths.max()), width))
        for row, frames in enumerate(frame_list):
            padded[row, : frames.shape[0]] = frames
        return padded, lengths


def _batched_logits(head, batcher: _FeatureBatcher, records: list[RecordMeta]) -> np.ndarray:
    chunks = []
    for start in range(0, len(records), EVAL_BATCH):
        args = batcher.batch(records[start : start + EVAL_BATCH])
        chunks.append(head.forward(*args, train=False))
    return np.concatenate(chunks, axis=0)


def train(
    config: ExperimentConfig,
    dataset: Dataset,
    store: FeatureStore,
    train_ids: set[str] | None = None,
    val_ids: set[str] | None = None,
    gradient_hook=None,
) -> tuple[TrainedModel, TrainingHistory]:
    """Run the full training loop.

    `train_ids`/`val_ids` override the config's stratified split (used by
    compare mode to share one split, and by probes). `gradient_hook`, if
    given, is called as hook(epoch, record_ids) for every mini-batch that
    contributes a gradient.

    Raises:
        NonFiniteLoss: training loss became NaN/Inf (learning-rate or
            data pathology); message carries epoch/batch coordinates.
    """
    if train_ids is None or val_ids is None:
        split = stratified_split(dataset, config.split_ratios, config.split_seed, config.speaker_disjoint)
        train_ids = split.train_ids if train_ids is None else train_ids
        val_ids = split.val_ids if val_ids is None else val_ids

    train_records = records_for_ids(dataset, train_ids)
    val_records = records_for_ids(dataset, val_ids)
    val_labels = labels_for_records(val_records)

    head = build_head(store.extractor.backbone.width, config.head, seed=np.random.SeedSequence([config.seed, 0]))
    shuffle_rng = np.random.default_rng([config.seed, 1])
    dropout_rng = np.random.default_rng([config.seed, 2])
    optimizer = Adam(head.params, lr=config.learning_rate)
    batcher = _FeatureBatcher(store, config.head)

    best_val = np.inf
    best_params = None
    best_epoch = config.epochs
    entries = []
    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(len(train_records))
        seen = 0
        loss_sum = 0.0
        for batch_index, start in enumerate(range(0, len(order), config.batch_size)):
            batch_records = [train_records[i] for i in order[start : start + config.batch_size]]
            args = batcher.batch(batch_records)
            loss, grads, _ = head.loss_and_grads(*args, labels_for_records(batch_records), rng=dropout_rng)
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"loss={loss} at epoch {epoch}, batch {batch_index}")
            logger.debug("epoch %d batch %d: loss=%.6f (%d records)", epoch, batch_index, loss, len(batch_records))
            optimizer.step(grads)
            if gradient_hook is not None:
                gradient_hook(epoch, [r.record_id for r in batch_records])
            loss_sum += loss * len(batch_records)
            seen += len(batch_records)
        train_loss = loss_sum / seen

        val_logits = _batched_logits(head, batcher, val_records)
        val_loss, _ = cross_entropy(val_logits, val_labels)
        val_report = metrics.report(metrics.confusion_matrix(val_labels, val_logits.argmax(axis=1)))
        entries.append(
            EpochStats(
                epoch=epoch,
                train_loss=float(train_loss),
                val_loss=float(val_loss),
                val_macro_f1=val_report.macro_f1,
                val_accuracy=val_report.accuracy,
            )
        )
        logger.info(
            "epoch %d/%d: train_loss=%.4f val_loss=%.4f val_macro_f1=%.4f val_acc=%.4f",
            epoch, config.epochs, train_loss, val_loss, val_report.macro_f1, val_report.accuracy,
        )
        if config.select_best and val_loss < best_val:
            best_val = val_loss
            best_params = {k: v.copy() for k, v in head.params.items()}
            best_epoch = epoch

    final_epoch = config.epochs
    if config.select_best and best_params is not None:
        head.params.update(best_params)
        final_epoch = best_epoch

    model = TrainedModel(
        head=head,
        backbone=store.extractor.backbone,
        head_config=config.head,
        seed=config.seed,
        final_epoch=final_epoch,
    )
    return model, TrainingHistory(entries=entries)


def evaluate(model: TrainedModel, dataset: Dataset, ids, store: FeatureStore) -> metrics.MetricsReport:
    """Argmax predictions over `ids`, tallied into a MetricsReport.

    Raises:
        EmptyEvalSet: `ids` is empty.
    """
    ids = set(ids)
    if not ids:
        raise EmptyEvalSet("no record ids to evaluate")
    records = records_for_ids(dataset, ids)
    labels = labels_for_records(records)
    logits = np.stack([model.head.logits_for(store.get(r)) for r in records])
    predictions = logits.argmax(axis=1)
    return metrics.report(metrics.confusion_matrix(labels, predictions))
