"""Corpus discovery: filename parsing, scanning, manifests and splits.

BAVED encodes everything about a recording in its filename:

    6-21-0-49-0-29.wav
    ^ ^  ^ ^  ^ ^-- take counter
    | |  | |  +---- emotion level (0 low, 1 neutral, 2 high)
    | |  | +------- speaker age
    | |  +--------- gender (0 male, 1 female)
    | +------------ speaker id
    +-------------- word (0=like ... 6=bad)
"""

from toy_corpus import build_toy_corpus, demo_workspace

from baved_ser.dataset import (
    MalformedName,
    parse_record_name,
    scan_dataset,
    stratified_split,
    total_duration_s,
    write_manifest_csv,
    write_split_csv,
)

workspace = demo_workspace("01_corpus_tour")
corpus = build_toy_corpus(workspace / "corpus")

# --- a single filename -----------------------------------------------------
meta = parse_record_name("6-21-0-49-0-29.wav")
print("parsed:", meta)

try:
    parse_record_name("readme.txt")
except MalformedName as exc:
    print("foreign files are rejected:", exc)

# --- the whole tree --------------------------------------------------------
dataset = scan_dataset(corpus)
print(f"\nscanned {len(dataset)} records from {len(dataset.speakers())} speakers")
print("per-level counts:", dataset.class_counts())
print(f"total audio: {total_duration_s(dataset) / 60:.2f} minutes")

manifest = write_manifest_csv(dataset, workspace / "manifest.csv")
print("\nmanifest head:")
for line in manifest.read_text().splitlines()[:4]:
    print("   ", line)

# --- deterministic stratified split ----------------------------------------
split = stratified_split(dataset, ratios=(0.8, 0.2), seed=42)
again = stratified_split(dataset, ratios=(0.8, 0.2), seed=42)
assert split.val_ids == again.val_ids, "same seed, same split"
print(f"\nsplit: {len(split.train_ids)} train / {len(split.val_ids)} val (seed 42, reproducible)")

by_id = dataset.by_id()
for level in (0, 1, 2):
    n_val = sum(1 for i in split.val_ids if by_id[i].emotion_level == level)
    print(f"  level {level}: {n_val} validation records")

write_split_csv(split, workspace / "split.csv")
print("\nartifacts in", workspace)
