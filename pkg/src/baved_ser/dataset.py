"""BAVED corpus discovery, parsing, loading and splitting.

BAVED (Basic Arabic Vocal Emotions Dataset) is a collection of wav
recordings of 7 Arabic words, each spoken at one of three emotion levels:

    0 - low (tired / exhausted)
    1 - neutral
    2 - high (strong positive or negative emotion)

Expected directory layout (the public distribution):

    <root>/
        0/  <word>-<speaker>-<gender>-<age>-<emotion>-<counter>.wav
        1/  ...
        2/  ...

Filename convention (6 dash-separated numeric tokens):

    Position 1 - word:     0=like 1=unlike 2=this 3=file 4=good 5=neutral 6=bad
    Position 2 - speaker:  integer speaker id
    Position 3 - gender:   0=male, 1=female
    Position 4 - age:      speaker age in years
    Position 5 - emotion:  level 0-2 (must agree with the enclosing directory)
    Position 6 - counter:  per-speaker take number (kept only inside record_id)

Audio may be any PCM rate/channel count on disk; `load_audio` normalizes
everything to 16 kHz mono in [-1, 1], which is what the pretrained
backbones expect.
"""

from __future__ import annotations

import csv
import logging
import wave
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

logger = logging.getLogger(__name__)

WORD_LABELS = {0: "like", 1: "unlike", 2: "this", 3: "file", 4: "good", 5: "neutral", 6: "bad"}
EMOTION_LEVELS = (0, 1, 2)
LEVEL_NAMES = {0: "low", 1: "neutral", 2: "high"}

TARGET_SAMPLE_RATE = 16000
# One 25 ms analysis window at 16 kHz; clips shorter than this carry no frame.
MIN_SAMPLES = 400

MANIFEST_HEADER = ["record_id", "word", "speaker_id", "gender", "age", "emotion_level", "duration_s"]
SPLIT_HEADER = ["record_id", "split"]


class DataError(Exception):
    """Base class for corpus-level failures."""


class MalformedName(DataError):
    """Filename does not follow the corpus naming convention."""


class EmptyCorpus(DataError):
    """No usable records found (or an emotion level has none)."""


class InconsistentLabel(DataError):
    """Filename emotion token disagrees with the enclosing level directory."""


class DegenerateClass(DataError):
    """An emotion level is too small to appear on both sides of a split."""


class DecodeFailure(DataError):
    """Audio file exists but cannot be decoded as PCM wav."""


class TooShort(DataError):
    """Clip shorter than one analysis window after resampling."""


@dataclass(frozen=True)
class NamingScheme:
    """Token layout of a corpus filename, kept as data so a corpus variant
    needs a new table, not new code."""

    # field name for each dash-separated token; "counter" is not persisted
    fields: tuple[str, ...] = ("word", "speaker_id", "gender", "age", "emotion_level", "counter")
    gender_codes: dict[str, str] = field(default_factory=lambda: {"0": "male", "1": "female"})
    word_range: tuple[int, int] = (0, 6)
    emotion_range: tuple[int, int] = (0, 2)


DEFAULT_SCHEME = NamingScheme()


@dataclass(frozen=True)
class RecordMeta:
    """Parsed identity of one recording. `record_id` is the path relative
    to the corpus root and is the stable key everywhere else."""

    record_id: str
    word: int
    speaker_id: int
    gender: str
    age: int
    emotion_level: int


@dataclass
class Dataset:
    root: Path
    records: list[RecordMeta]

    def __len__(self) -> int:
        return len(self.records)

    def class_counts(self) -> dict[int, int]:
        counts = Counter(r.emotion_level for r in self.records)
        return {level: counts.get(level, 0) for level in EMOTION_LEVELS}

    def speakers(self) -> set[int]:
        return {r.speaker_id for r in self.records}

    def by_id(self) -> dict[str, RecordMeta]:
        return {r.record_id: r for r in self.records}


@dataclass
class Waveform:
    """Mono 16 kHz audio with amplitude in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int = TARGET_SAMPLE_RATE

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class SplitAssignment:
    train_ids: set[str]
    val_ids: set[str]
    seed: int
    ratios: tuple[float, float]


def parse_record_name(filename: str, scheme: NamingScheme = DEFAULT_SCHEME) -> RecordMeta:
    """Parse a corpus filename (or relative path) into a RecordMeta.

    The basename must be `.wav` with the scheme's dash-separated numeric
    tokens; the full `filename` string is kept as `record_id`, so records
    emitted by `scan_dataset` re-parse to themselves.

    Raises:
        MalformedName: wrong extension, wrong token count, non-numeric
            token, or out-of-range word/emotion/gender code.
    """
    name = Path(filename).name
    if not name.endswith(".wav"):
        raise MalformedName(f"not a .wav file: {filename!r}")
    tokens = name[: -len(".wav")].split("-")
    if len(tokens) != len(scheme.fields):
        raise MalformedName(
            f"expected {len(scheme.fields)} dash-separated tokens, got {len(tokens)}: {filename!r}"
        )

    values: dict[str, int | str] = {}
    for fieldname, token in zip(scheme.fields, tokens):
        if fieldname == "gender":
            if token not in scheme.gender_codes:
                raise MalformedName(f"unknown gender code {token!r} in {filename!r}")
            values[fieldname] = scheme.gender_codes[token]
            continue
        if not token.isdigit():
            raise MalformedName(f"non-numeric token {token!r} in {filename!r}")
        values[fieldname] = int(token)

    word = int(values["word"])
    emotion = int(values["emotion_level"])
    if not scheme.word_range[0] <= word <= scheme.word_range[1]:
        raise MalformedName(f"word {word} outside {scheme.word_range} in {filename!r}")
    if not scheme.emotion_range[0] <= emotion <= scheme.emotion_range[1]:
        raise MalformedName(f"emotion level {emotion} outside {scheme.emotion_range} in {filename!r}")

    return RecordMeta(
        record_id=str(filename),
        word=word,
        speaker_id=int(values["speaker_id"]),
        gender=str(values["gender"]),
        age=int(values["age"]),
        emotion_level=emotion,
    )


def scan_dataset(root: str | Path, scheme: NamingScheme = DEFAULT_SCHEME) -> Dataset:
    """Discover every parseable `.wav` under `root`.

    Unparseable filenames are skipped with a warning (foreign/corrupt
    files); a parseable file sitting in the wrong level directory aborts
    the scan, since it means the corpus labels cannot be trusted.

    Raises:
        EmptyCorpus: no parseable records, or an emotion level with none.
        InconsistentLabel: filename emotion token != enclosing `0/1/2` dir.
    """
    root = Path(root)
    records = []
    for path in sorted(root.rglob("*.wav")):
        rel = path.relative_to(root).as_posix()
        try:
            meta = parse_record_name(rel, scheme)
        except MalformedName as exc:
            logger.warning("skipping unparseable file: %s", exc)
            continue
        parent = path.parent.name
        if parent.isdigit() and int(parent) in EMOTION_LEVELS and int(parent) != meta.emotion_level:
            raise InconsistentLabel(
                f"{rel}: emotion token {meta.emotion_level} but sits under level directory {parent}/"
            )
        records.append(meta)

    if not records:
        raise EmptyCorpus(f"no parseable .wav records under {root}")
    records.sort(key=lambda r: r.record_id)

    dataset = Dataset(root=root, records=records)
    counts = dataset.class_counts()
    for level, n in counts.items():
        if n == 0:
            raise EmptyCorpus(f"emotion level {level} has no records under {root}")

    by_gender = Counter(r.gender for r in dataset.records)
    speakers_by_gender = {
        g: len({r.speaker_id for r in dataset.records if r.gender == g}) for g in sorted(by_gender)
    }
    logger.info(
        "scanned %s: %d records, %d speakers (%s), per-level counts %s, per-gender records %s",
        root,
        len(records),
        len(dataset.speakers()),
        ", ".join(f"{n} {g}" for g, n in speakers_by_gender.items()),
        dict(counts),
        dict(by_gender),
    )
    return dataset


def _split_counts(n: int, val_fraction: float, both_sides: bool) -> int:
    """Number of validation records for a class of size n."""
    n_val = round(val_fraction * n)
    if both_sides:
        # keep the class present on both sides; stays within +-1 of the ratio
        n_val = min(max(n_val, 1), n - 1)
    return n_val


def stratified_split(
    dataset: Dataset,
    ratios: tuple[float, float] = (0.8, 0.2),
    seed: int = 42,
    speaker_disjoint: bool = False,
) -> SplitAssignment:
    """Deterministic train/validation partition, stratified by emotion level.

    Records are shuffled within each class by a generator seeded from
    `seed` over the sorted record list, then prefix-assigned, so the
    result depends only on (record-id set, ratios, seed) and never on
    filesystem enumeration order.

    `speaker_disjoint=True` assigns whole speakers to the validation side
    until its record share reaches the requested fraction. This is
    stricter than plain stratification and may miss the per-class +-1
    guarantee; per-class counts are logged for inspection.

    Raises:
        ValueError: ratios malformed.
        DegenerateClass: some emotion level has < 2 records while both
            fractions are nonzero.
    """
    train_frac, val_frac = ratios
    if train_frac < 0 or val_frac < 0 or abs(train_frac + val_frac - 1.0) > 1e-9:
        raise ValueError(f"ratios must be nonnegative and sum to 1.0, got {ratios}")
    if train_frac == 0:
        raise ValueError("train fraction must be positive")

    rng = np.random.default_rng(seed)
    all_ids = sorted(r.record_id for r in dataset.records)

    if speaker_disjoint:
        return _speaker_disjoint_split(dataset, ratios, seed, rng)

    both_sides = val_frac > 0
    val_ids: set[str] = set()
    for level in EMOTION_LEVELS:
        class_ids = sorted(r.record_id for r in dataset.records if r.emotion_level == level)
        if both_sides and len(class_ids) < 2:
            raise DegenerateClass(f"emotion level {level} has {len(class_ids)} record(s), needs >= 2")
        order = rng.permutation(len(class_ids))
        n_val = _split_counts(len(class_ids), val_frac, both_sides)
        val_ids.update(class_ids[i] for i in order[:n_val])

    train_ids = set(all_ids) - val_ids
    return SplitAssignment(train_ids=train_ids, val_ids=val_ids, seed=seed, ratios=ratios)


def _speaker_disjoint_split(
    dataset: Dataset, ratios: tuple[float, float], seed: int, rng: np.random.Generator
) -> SplitAssignment:
    val_frac = ratios[1]
    speakers = sorted(dataset.speakers())
    order = rng.permutation(len(speakers))
    target = val_frac * len(dataset.records)
    records_by_speaker: dict[int, list[str]] = {}
    for r in dataset.records:
        records_by_speaker.setdefault(r.speaker_id, []).append(r.record_id)

    val_ids: set[str] = set()
    for i in order:
        if len(val_ids) >= target:
            break
        val_ids.update(records_by_speaker[speakers[i]])
    train_ids = {r.record_id for r in dataset.records} - val_ids
    if val_frac > 0 and not train_ids:
        raise DegenerateClass("speaker-disjoint split consumed every speaker for validation")

    by_id = dataset.by_id()
    val_counts = Counter(by_id[i].emotion_level for i in val_ids)
    logger.info("speaker-disjoint split: %d val records, per-level %s", len(val_ids), dict(val_counts))
    return SplitAssignment(train_ids=train_ids, val_ids=val_ids, seed=seed, ratios=ratios)


def load_audio(record: RecordMeta, root: str | Path) -> Waveform:
    """Load one record as mono 16 kHz float32 in [-1, 1].

    Stereo channels are averaged; integer PCM is scaled by its dtype
    range; other rates are rationally resampled to 16 kHz.

    Raises:
        DecodeFailure: missing or undecodable file.
        TooShort: fewer than 400 samples (25 ms) after resampling.
    """
    path = Path(root) / record.record_id
    try:
        rate, data = wavfile.read(path)
    except (OSError, ValueError) as exc:
        raise DecodeFailure(f"cannot decode {path}: {exc}") from exc

    samples = np.asarray(data, dtype=np.float64)
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    if np.issubdtype(data.dtype, np.integer):
        info = np.iinfo(data.dtype)
        if data.dtype == np.uint8:
            samples = (samples - 128.0) / 128.0
        else:
            samples = samples / (float(info.max) + 1.0)

    if rate != TARGET_SAMPLE_RATE:
        g = np.gcd(int(rate), TARGET_SAMPLE_RATE)
        samples = resample_poly(samples, TARGET_SAMPLE_RATE // g, int(rate) // g)
    samples = np.clip(samples, -1.0, 1.0).astype(np.float32)

    if len(samples) < MIN_SAMPLES:
        raise TooShort(
            f"{record.record_id}: {len(samples)} samples after resampling, need >= {MIN_SAMPLES}"
        )
    return Waveform(samples=samples, sample_rate=TARGET_SAMPLE_RATE)


def wav_duration_s(path: Path) -> float:
    """Clip duration from the wav header alone (no PCM decode)."""
    try:
        with wave.open(str(path), "rb") as handle:
            frames = handle.getnframes()
            rate = handle.getframerate()
    except (OSError, wave.Error) as exc:
        raise DecodeFailure(f"cannot read wav header of {path}: {exc}") from exc
    if rate <= 0:
        raise DecodeFailure(f"invalid sample rate in {path}")
    return frames / rate


def write_manifest_csv(dataset: Dataset, out_path: str | Path) -> Path:
    """Write the corpus manifest, stable-sorted by record_id."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with out_path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(MANIFEST_HEADER)
        for r in sorted(dataset.records, key=lambda r: r.record_id):
            duration = wav_duration_s(dataset.root / r.record_id)
            writer.writerow(
                [r.record_id, r.word, r.speaker_id, r.gender, r.age, r.emotion_level, repr(duration)]
            )
    return out_path


def write_split_csv(split: SplitAssignment, out_path: str | Path) -> Path:
    """Write `record_id,split` rows, stable-sorted by record_id."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    rows = [(rid, "train") for rid in split.train_ids] + [(rid, "val") for rid in split.val_ids]
    rows.sort(key=lambda row: row[0])
    with out_path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(SPLIT_HEADER)
        writer.writerows(rows)
    return out_path


def read_split_csv(path: str | Path) -> SplitAssignment:
    train_ids: set[str] = set()
    val_ids: set[str] = set()
    with Path(path).open(newline="") as handle:
        reader = csv.DictReader(handle)
        for row in reader:
            (train_ids if row["split"] == "train" else val_ids).add(row["record_id"])
    return SplitAssignment(train_ids=train_ids, val_ids=val_ids, seed=-1, ratios=(0.0, 0.0))


def total_duration_s(dataset: Dataset) -> float:
    return float(sum(wav_duration_s(dataset.root / r.record_id) for r in dataset.records))


def records_for_ids(dataset: Dataset, ids: Iterable[str]) -> list[RecordMeta]:
    by_id = dataset.by_id()
    return [by_id[i] for i in sorted(ids)]


def labels_for_records(records: Sequence[RecordMeta]) -> np.ndarray:
    return np.array([r.emotion_level for r in records], dtype=np.int64)
