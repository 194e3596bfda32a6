"""Frozen pretrained speech backbones as uniform feature extractors.

A backbone maps a 16 kHz waveform to a [T x D] matrix of frame
embeddings (final transformer layer by default, ~20 ms stride). Three
published checkpoints are wired in:

    wav2vec2_arabic  D=1024  elgeish/wav2vec2-large-xlsr-53-arabic
    hubert_base      D=768   facebook/hubert-base-ls960
    hubert_large     D=1024  facebook/hubert-large-ll60k

All backbones are frozen: only classifier heads are ever trained. The
loader boundary is pluggable; `checkpoint_ref="stub"` swaps in a
deterministic waveform-statistics projection of the same declared width,
so the whole pipeline runs (and is tested) without any downloads.
"""

from __future__ import annotations

import concurrent.futures
import logging
import os
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import feature_cache
from .dataset import Dataset, RecordMeta, Waveform, load_audio, TARGET_SAMPLE_RATE

logger = logging.getLogger(__name__)

BACKBONE_WIDTHS = {"wav2vec2_arabic": 1024, "hubert_base": 768, "hubert_large": 1024}
DEFAULT_CHECKPOINTS = {
    "wav2vec2_arabic": "elgeish/wav2vec2-large-xlsr-53-arabic",
    "hubert_base": "facebook/hubert-base-ls960",
    "hubert_large": "facebook/hubert-large-ll60k",
}
STUB_CHECKPOINT = "stub"

# 25 ms window / 20 ms hop at 16 kHz: the frame grid shared by all three
# checkpoints' convolutional front ends.
FRAME_LEN = 400
FRAME_HOP = 320

CHECKPOINT_DIR_ENV = "BAVED_SER_CHECKPOINT_DIR"


class CheckpointUnavailable(Exception):
    """Checkpoint cannot be resolved (missing deps, no local copy, no network)."""


class BackboneFailure(Exception):
    """Backbone produced malformed output (wrong width, non-finite values)."""


@dataclass(frozen=True)
class BackboneId:
    name: str
    checkpoint_ref: str = ""

    def __post_init__(self):
        if self.name not in BACKBONE_WIDTHS:
            raise ValueError(f"unknown backbone {self.name!r}, expected one of {sorted(BACKBONE_WIDTHS)}")
        if not self.checkpoint_ref:
            object.__setattr__(self, "checkpoint_ref", DEFAULT_CHECKPOINTS[self.name])

    @property
    def width(self) -> int:
        return BACKBONE_WIDTHS[self.name]

    @property
    def is_stub(self) -> bool:
        return self.checkpoint_ref == STUB_CHECKPOINT

    @property
    def cache_namespace(self) -> str:
        return f"{self.name}__stub" if self.is_stub else self.name


@dataclass
class FeatureSequence:
    """Frame embeddings [T x D] (float32) for one record."""

    frames: np.ndarray
    backbone: BackboneId
    record_id: str

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]


class FeatureExtractor:
    """Base extractor: subclasses implement `_embed`, this class checks
    the output contract (declared width, finiteness, T >= 1)."""

    #: safe to call concurrently from multiple threads
    reentrant = False

    def __init__(self, backbone: BackboneId):
        self.backbone = backbone

    def _embed(self, samples: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def extract(self, waveform: Waveform, record_id: str = "") -> FeatureSequence:
        """Embed one waveform; deterministic for a frozen backbone.

        Raises:
            BackboneFailure: wrong width, empty output or non-finite values.
        """
        if waveform.sample_rate != TARGET_SAMPLE_RATE:
            raise ValueError(f"waveform must be {TARGET_SAMPLE_RATE} Hz, got {waveform.sample_rate}")
        frames = np.asarray(self._embed(np.asarray(waveform.samples, dtype=np.float32)), dtype=np.float32)
        if frames.ndim != 2 or frames.shape[0] < 1:
            raise BackboneFailure(f"{self.backbone.name}: empty or malformed output {frames.shape}")
        if frames.shape[1] != self.backbone.width:
            raise BackboneFailure(
                f"{self.backbone.name}: width {frames.shape[1]} != declared {self.backbone.width}"
            )
        if not np.isfinite(frames).all():
            raise BackboneFailure(f"{self.backbone.name}: non-finite values in output")
        return FeatureSequence(frames=frames, backbone=self.backbone, record_id=record_id)


def frame_count(num_samples: int) -> int:
    """Frames produced for a waveform of `num_samples` samples at 16 kHz.

    Matches the conv front end of the wired checkpoints (stride 320,
    receptive field 400).
    """
    if num_samples < FRAME_LEN:
        return 0
    return 1 + (num_samples - FRAME_LEN) // FRAME_HOP


class StubBackbone(FeatureExtractor):
    """Deterministic stand-in: per-frame waveform statistics pushed
    through a fixed seeded projection to the declared width.

    Same frame grid as the real checkpoints, so T matches; embeddings are
    a pure function of (waveform, backbone name), so runs are
    bit-reproducible with zero downloads.
    """

    reentrant = True
    _NUM_STATS = 16

    def __init__(self, backbone: BackboneId):
        super().__init__(backbone)
        seed = zlib.crc32(f"{backbone.name}:{backbone.width}".encode("utf-8"))
        rng = np.random.default_rng(seed)
        self._projection = rng.standard_normal((self._NUM_STATS, backbone.width)) / np.sqrt(self._NUM_STATS)

    def _embed(self, samples: np.ndarray) -> np.ndarray:
        n = frame_count(len(samples))
        if n < 1:
            raise BackboneFailure("waveform shorter than one analysis window")
        x = np.asarray(samples, dtype=np.float64)
        idx = np.arange(FRAME_LEN)[None, :] + FRAME_HOP * np.arange(n)[:, None]
        windows = x[idx]  # [T x 400]

        spectra = np.abs(np.fft.rfft(windows, axis=1))  # [T x 201]
        bands = spectra[:, 1:201].reshape(n, 10, 20).sum(axis=2)
        zero_crossings = (np.diff(np.signbit(windows), axis=1) != 0).mean(axis=1)
        stats = np.column_stack(
            [
                windows.mean(axis=1),
                windows.std(axis=1),
                np.sqrt((windows**2).mean(axis=1)),
                zero_crossings,
                windows.min(axis=1),
                windows.max(axis=1),
                np.log1p(bands),
            ]
        )
        return np.tanh(stats @ self._projection).astype(np.float32)


class TransformersBackbone(FeatureExtractor):
    """Published checkpoint behind the HuggingFace transformers loader.

    The model is frozen (`eval()`, no grad); `layer` selects which hidden
    state to export (None = final transformer layer).
    """

    reentrant = False

    def __init__(self, backbone: BackboneId, layer: int | None = None, checkpoint_dir: str | None = None):
        super().__init__(backbone)
        self.layer = layer
        try:
            import torch
            from transformers import AutoModel
        except ImportError as exc:
            raise CheckpointUnavailable(
                f"torch/transformers not installed; install the [real] extra to use {backbone.checkpoint_ref}"
            ) from exc
        self._torch = torch
        checkpoint_dir = checkpoint_dir or os.environ.get(CHECKPOINT_DIR_ENV)
        try:
            self._model = AutoModel.from_pretrained(backbone.checkpoint_ref, cache_dir=checkpoint_dir)
        except Exception as exc:
            raise CheckpointUnavailable(f"cannot load {backbone.checkpoint_ref!r}: {exc}") from exc
        hidden = getattr(self._model.config, "hidden_size", None)
        if hidden != backbone.width:
            raise CheckpointUnavailable(
                f"{backbone.checkpoint_ref}: hidden size {hidden} != declared width {backbone.width}"
            )
        self._model.eval()
        for p in self._model.parameters():
            p.requires_grad_(False)

    def _embed(self, samples: np.ndarray) -> np.ndarray:
        torch = self._torch
        batch = torch.from_numpy(samples).float().unsqueeze(0)
        with torch.no_grad():
            out = self._model(batch, output_hidden_states=self.layer is not None)
        hidden = out.hidden_states[self.layer] if self.layer is not None else out.last_hidden_state
        return hidden.squeeze(0).cpu().numpy()


def load_backbone(
    backbone: BackboneId, layer: int | None = None, checkpoint_dir: str | None = None
) -> FeatureExtractor:
    """Resolve a BackboneId to an extractor (the pluggable loader boundary)."""
    if backbone.is_stub:
        return StubBackbone(backbone)
    return TransformersBackbone(backbone, layer=layer, checkpoint_dir=checkpoint_dir)


@dataclass
class FeatureStore:
    """Cache-backed access to features: get-or-extract per record.

    With caching enabled, results are read back from disk once written,
    so pipeline output is identical with the cache on or off (the format
    round-trips bit-exactly). Corrupt entries are deleted and recomputed.
    """

    extractor: FeatureExtractor
    dataset_root: Path
    cache_root: Path | None = None
    enabled: bool = True
    _hits: int = field(default=0, repr=False)
    _misses: int = field(default=0, repr=False)

    def _cache_on(self) -> bool:
        return self.enabled and self.cache_root is not None

    def get(self, record: RecordMeta) -> FeatureSequence:
        backbone = self.extractor.backbone
        if self._cache_on():
            try:
                frames = feature_cache.cache_get(self.cache_root, backbone.cache_namespace, record.record_id)
            except feature_cache.CorruptCacheEntry as exc:
                logger.warning("recomputing corrupt cache entry: %s", exc)
                feature_cache.cache_delete(self.cache_root, backbone.cache_namespace, record.record_id)
                frames = None
            if frames is not None:
                self._hits += 1
                return FeatureSequence(frames=frames, backbone=backbone, record_id=record.record_id)

        self._misses += 1
        waveform = load_audio(record, self.dataset_root)
        features = self.extractor.extract(waveform, record_id=record.record_id)
        if self._cache_on():
            feature_cache.cache_put(features.frames, self.cache_root, backbone.cache_namespace, record.record_id)
        return features

    def prefetch(self, records: list[RecordMeta], workers: int = 1) -> None:
        """Fill the cache for `records`; parallel only when the extractor
        declares itself reentrant."""
        if workers > 1 and self.extractor.reentrant:
            with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
                list(pool.map(self.get, records))
        else:
            for record in records:
                self.get(record)
        logger.info(
            "feature store: %d cache hits, %d extractions (%s)",
            self._hits,
            self._misses,
            self.extractor.backbone.cache_namespace,
        )


def make_store(
    backbone: BackboneId,
    dataset: Dataset,
    cache_root: str | Path | None,
    cache_enabled: bool = True,
    layer: int | None = None,
    checkpoint_dir: str | None = None,
) -> FeatureStore:
    extractor = load_backbone(backbone, layer=layer, checkpoint_dir=checkpoint_dir)
    return FeatureStore(
        extractor=extractor,
        dataset_root=dataset.root,
        cache_root=Path(cache_root) if cache_root else None,
        enabled=cache_enabled,
    )
