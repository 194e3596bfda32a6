"""Corpus parsing, scanning, splitting and audio loading."""

import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.io import wavfile

from baved_ser.dataset import (
    DegenerateClass,
    EmptyCorpus,
    InconsistentLabel,
    MalformedName,
    DecodeFailure,
    TooShort,
    RecordMeta,
    Dataset,
    parse_record_name,
    scan_dataset,
    stratified_split,
    load_audio,
    write_manifest_csv,
    write_split_csv,
    read_split_csv,
    wav_duration_s,
    MANIFEST_HEADER,
)
from conftest import build_corpus, synth_wave, write_wav


class TestParseRecordName:
    def test_documented_example_male(self):
        meta = parse_record_name("6-21-0-49-0-29.wav")
        assert meta.word == 6
        assert meta.speaker_id == 21
        assert meta.gender == "male"
        assert meta.age == 49
        assert meta.emotion_level == 0
        assert meta.record_id == "6-21-0-49-0-29.wav"

    def test_documented_example_female(self):
        meta = parse_record_name("0-1-1-25-2-0.wav")
        assert meta == RecordMeta("0-1-1-25-2-0.wav", 0, 1, "female", 25, 2)

    def test_relative_path_kept_as_record_id(self):
        meta = parse_record_name("2/3-5-1-33-2-7.wav")
        assert meta.record_id == "2/3-5-1-33-2-7.wav"
        assert meta.word == 3

    @pytest.mark.parametrize(
        "bad",
        [
            "readme.txt",
            "6-21-0-49-0.wav",  # five tokens
            "6-21-0-49-0-29-4.wav",  # seven tokens
            "a-21-0-49-0-29.wav",  # non-numeric
            "7-21-0-49-0-29.wav",  # word out of range
            "6-21-0-49-3-29.wav",  # emotion out of range
            "6-21-2-49-0-29.wav",  # unknown gender code
        ],
    )
    def test_malformed(self, bad):
        with pytest.raises(MalformedName):
            parse_record_name(bad)

    @given(
        word=st.integers(0, 6),
        speaker=st.integers(0, 200),
        gender=st.integers(0, 1),
        age=st.integers(5, 99),
        level=st.integers(0, 2),
        counter=st.integers(0, 999),
    )
    def test_round_trip_from_generated_names(self, word, speaker, gender, age, level, counter):
        name = f"{word}-{speaker}-{gender}-{age}-{level}-{counter}.wav"
        meta = parse_record_name(name)
        assert (meta.word, meta.speaker_id, meta.age, meta.emotion_level) == (word, speaker, age, level)
        assert meta.gender == ("male" if gender == 0 else "female")


class TestScan:
    def test_counts_and_order(self, toy_dataset):
        assert len(toy_dataset) == 36
        assert toy_dataset.class_counts() == {0: 12, 1: 12, 2: 12}
        assert len(toy_dataset.speakers()) == 6
        ids = [r.record_id for r in toy_dataset.records]
        assert ids == sorted(ids)

    def test_scan_reparse_round_trip(self, toy_dataset):
        for record in toy_dataset.records:
            assert parse_record_name(record.record_id) == record

    def test_foreign_files_skipped_with_warning(self, tmp_path, caplog):
        build_corpus(tmp_path, per_class=2)
        (tmp_path / "0" / "notes.wav").write_bytes(b"not audio, also bad name")
        with caplog.at_level("WARNING"):
            dataset = scan_dataset(tmp_path)
        assert len(dataset) == 6
        assert any("skipping unparseable" in message for message in caplog.messages)

    def test_inconsistent_level_directory(self, tmp_path):
        build_corpus(tmp_path, per_class=2)
        rng = np.random.default_rng(1)
        # emotion token 2 but filed under 0/
        write_wav(tmp_path / "0" / "1-1-0-30-2-9.wav", synth_wave(rng, 2), 16000)
        with pytest.raises(InconsistentLabel):
            scan_dataset(tmp_path)

    def test_empty_directory(self, tmp_path):
        with pytest.raises(EmptyCorpus):
            scan_dataset(tmp_path)

    def test_missing_class(self, tmp_path):
        rng = np.random.default_rng(2)
        for level in (0, 1):
            (tmp_path / str(level)).mkdir()
            write_wav(tmp_path / str(level) / f"1-1-0-30-{level}-0.wav", synth_wave(rng, level), 16000)
        with pytest.raises(EmptyCorpus):
            scan_dataset(tmp_path)


class TestStratifiedSplit:
    def test_deterministic(self, toy_dataset):
        a = stratified_split(toy_dataset, (0.8, 0.2), seed=42)
        b = stratified_split(toy_dataset, (0.8, 0.2), seed=42)
        assert a.train_ids == b.train_ids and a.val_ids == b.val_ids

    def test_partition(self, toy_dataset):
        split = stratified_split(toy_dataset, (0.8, 0.2), seed=7)
        assert split.train_ids.isdisjoint(split.val_ids)
        assert split.train_ids | split.val_ids == {r.record_id for r in toy_dataset.records}

    def test_stratification_within_one(self, toy_dataset):
        split = stratified_split(toy_dataset, (0.8, 0.2), seed=42)
        by_id = toy_dataset.by_id()
        for level, total in toy_dataset.class_counts().items():
            val_count = sum(1 for i in split.val_ids if by_id[i].emotion_level == level)
            assert abs(val_count - round(0.2 * total)) <= 1

    def test_all_train_ratio(self, toy_dataset):
        split = stratified_split(toy_dataset, (1.0, 0.0), seed=3)
        assert split.val_ids == set()
        assert len(split.train_ids) == len(toy_dataset)

    def test_degenerate_class(self, tmp_path):
        rng = np.random.default_rng(3)
        build_corpus(tmp_path, per_class=2)
        # add a third class with a single record only
        only = tmp_path / "2" / "0-9-0-44-2-99.wav"
        for existing in (tmp_path / "2").glob("*.wav"):
            existing.unlink()
        write_wav(only, synth_wave(rng, 2), 16000)
        dataset = scan_dataset(tmp_path)
        with pytest.raises(DegenerateClass):
            stratified_split(dataset, (0.8, 0.2), seed=1)

    def test_bad_ratios(self, toy_dataset):
        with pytest.raises(ValueError):
            stratified_split(toy_dataset, (0.5, 0.2), seed=1)

    def test_speaker_disjoint(self, toy_dataset):
        split = stratified_split(toy_dataset, (0.8, 0.2), seed=42, speaker_disjoint=True)
        by_id = toy_dataset.by_id()
        train_speakers = {by_id[i].speaker_id for i in split.train_ids}
        val_speakers = {by_id[i].speaker_id for i in split.val_ids}
        assert train_speakers.isdisjoint(val_speakers)
        assert split.train_ids | split.val_ids == set(by_id)

    @settings(max_examples=25, deadline=None)
    @given(
        sizes=st.tuples(st.integers(2, 40), st.integers(2, 40), st.integers(2, 40)),
        val_fraction=st.floats(0.05, 0.5),
        seed=st.integers(0, 2**31),
    )
    def test_partition_and_stratification_property(self, sizes, val_fraction, seed):
        records = []
        for level, size in enumerate(sizes):
            for k in range(size):
                rid = f"{level}/1-{k}-0-30-{level}-{k}.wav"
                records.append(RecordMeta(rid, 1, k, "male", 30, level))
        dataset = Dataset(root=None, records=sorted(records, key=lambda r: r.record_id))
        ratios = (1.0 - val_fraction, val_fraction)
        split = stratified_split(dataset, ratios, seed=seed)
        assert split.train_ids.isdisjoint(split.val_ids)
        assert split.train_ids | split.val_ids == {r.record_id for r in records}
        by_id = dataset.by_id()
        for level, size in enumerate(sizes):
            val_count = sum(1 for i in split.val_ids if by_id[i].emotion_level == level)
            assert abs(val_count - val_fraction * size) <= 1.0


class TestLoadAudio:
    def test_16k_mono_identity_length(self, tmp_path):
        rng = np.random.default_rng(0)
        samples = synth_wave(rng, 0, duration=0.5)
        path = tmp_path / "1-1-0-30-0-0.wav"
        write_wav(path, samples, 16000)
        wave = load_audio(parse_record_name(path.name), tmp_path)
        assert len(wave.samples) == len(samples)
        assert wave.sample_rate == 16000

    def test_48k_resampled_length(self, tmp_path):
        # independent oracle: N * 16000 / 48000
        samples = np.sin(2 * np.pi * 440 * np.arange(48000) / 48000)
        path = tmp_path / "1-1-0-30-0-1.wav"
        write_wav(path, samples, 48000)
        wave = load_audio(parse_record_name(path.name), tmp_path)
        assert abs(len(wave.samples) - 16000) <= 1

    def test_8k_upsampled_length(self, tmp_path):
        samples = np.sin(2 * np.pi * 200 * np.arange(4000) / 8000)
        path = tmp_path / "1-1-0-30-0-2.wav"
        write_wav(path, samples, 8000)
        wave = load_audio(parse_record_name(path.name), tmp_path)
        assert abs(len(wave.samples) - 8000) <= 1

    def test_stereo_averaged(self, tmp_path):
        left = np.full(8000, 0.5)
        right = np.full(8000, -0.5)
        stereo = np.stack([left, right], axis=1)
        path = tmp_path / "1-1-0-30-0-3.wav"
        wavfile.write(path, 16000, (stereo * 32767).astype(np.int16))
        wave = load_audio(parse_record_name(path.name), tmp_path)
        assert wave.samples.ndim == 1
        assert np.abs(wave.samples).max() < 1e-3

    def test_amplitude_normalized(self, tmp_path):
        rng = np.random.default_rng(5)
        samples = synth_wave(rng, 1, duration=0.5) * 2.0  # clipped on write
        path = tmp_path / "1-1-0-30-0-4.wav"
        write_wav(path, samples, 16000)
        wave = load_audio(parse_record_name(path.name), tmp_path)
        assert wave.samples.min() >= -1.0 and wave.samples.max() <= 1.0

    def test_too_short(self, tmp_path):
        path = tmp_path / "1-1-0-30-0-5.wav"
        write_wav(path, np.zeros(200), 16000)
        with pytest.raises(TooShort):
            load_audio(parse_record_name(path.name), tmp_path)

    def test_decode_failure(self, tmp_path):
        path = tmp_path / "1-1-0-30-0-6.wav"
        path.write_bytes(b"RIFFgarbage")
        with pytest.raises(DecodeFailure):
            load_audio(parse_record_name(path.name), tmp_path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DecodeFailure):
            load_audio(parse_record_name("1-1-0-30-0-7.wav"), tmp_path)


class TestCsvArtifacts:
    def test_manifest_header_and_sorting(self, toy_dataset, tmp_path):
        path = write_manifest_csv(toy_dataset, tmp_path / "manifest.csv")
        with path.open() as handle:
            rows = list(csv.reader(handle))
        assert rows[0] == MANIFEST_HEADER
        ids = [row[0] for row in rows[1:]]
        assert ids == sorted(ids)
        assert len(ids) == len(toy_dataset)
        durations = [float(row[6]) for row in rows[1:]]
        assert all(0.4 <= d <= 0.8 for d in durations)

    def test_split_csv_round_trip(self, toy_dataset, tmp_path):
        split = stratified_split(toy_dataset, (0.8, 0.2), seed=42)
        path = write_split_csv(split, tmp_path / "split.csv")
        loaded = read_split_csv(path)
        assert loaded.train_ids == split.train_ids
        assert loaded.val_ids == split.val_ids
        ids = [row.split(",")[0] for row in path.read_text().splitlines()[1:]]
        assert ids == sorted(ids)

    def test_wav_duration_matches_load(self, toy_dataset):
        record = toy_dataset.records[0]
        header_duration = wav_duration_s(toy_dataset.root / record.record_id)
        wave = load_audio(record, toy_dataset.root)
        assert header_duration == pytest.approx(wave.duration_s, abs=1e-4)
