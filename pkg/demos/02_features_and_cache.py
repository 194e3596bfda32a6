"""Feature extraction behind the pluggable backbone boundary, plus the cache.

A backbone turns 16 kHz audio into a [T x D] matrix of ~20 ms frame
embeddings. The `stub` checkpoint ref swaps the real model for a
deterministic projection of waveform statistics with the same declared
width, so this demo needs no downloads. Extracted features land in a
binary cache with bit-exact round trips and atomic writes.
"""

import numpy as np
from toy_corpus import build_toy_corpus, demo_workspace

from baved_ser.backbones import BACKBONE_WIDTHS, BackboneId, frame_count, load_backbone, make_store
from baved_ser.dataset import load_audio, scan_dataset
from baved_ser.feature_cache import CorruptCacheEntry, cache_get

workspace = demo_workspace("02_features_and_cache")
dataset = scan_dataset(build_toy_corpus(workspace / "corpus"))
record = dataset.records[0]

# --- one waveform through each (stubbed) backbone ---------------------------
waveform = load_audio(record, dataset.root)
print(f"{record.record_id}: {waveform.duration_s:.2f}s at {waveform.sample_rate} Hz")
print(f"expected frames for {len(waveform.samples)} samples: {frame_count(len(waveform.samples))}")

for name in BACKBONE_WIDTHS:
    extractor = load_backbone(BackboneId(name, "stub"))
    features = extractor.extract(waveform, record_id=record.record_id)
    print(f"  {name:16s} -> frames {features.frames.shape}  (declared width {BACKBONE_WIDTHS[name]})")

# --- determinism: a frozen backbone is a pure function ----------------------
extractor = load_backbone(BackboneId("hubert_base", "stub"))
first = extractor.extract(waveform).frames
second = extractor.extract(waveform).frames
print("\nbit-identical re-extraction:", first.tobytes() == second.tobytes())

# --- the cache -------------------------------------------------------------
cache_root = workspace / "feature_cache"
store = make_store(BackboneId("hubert_base", "stub"), dataset, cache_root=cache_root)
store.prefetch(dataset.records, workers=4)

cached = cache_get(cache_root, "hubert_base__stub", record.record_id)
print("cache round trip bit-exact:", cached.tobytes() == store.get(record).frames.tobytes())

# corrupt an entry on purpose: reads fail loudly, the store recomputes
entry = cache_root / "hubert_base__stub" / f"{record.record_id}.feat"
entry.write_bytes(entry.read_bytes()[:40])
try:
    cache_get(cache_root, "hubert_base__stub", record.record_id)
except CorruptCacheEntry as exc:
    print("truncated entry detected:", str(exc)[:80], "...")

recovered = store.get(record)  # deletes + recomputes
print("store recovered the entry:", np.array_equal(recovered.frames, first))
print("\ncache directory:", cache_root)
