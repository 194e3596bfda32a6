"""Shared fixtures: a tiny synthetic corpus in the BAVED layout.

Each emotion level gets its own tone band plus light noise, so stub
features are class-separable and small probes actually learn.
"""

from pathlib import Path

import numpy as np
import pytest
from scipy.io import wavfile

from baved_ser.dataset import scan_dataset

CLASS_TONES = {0: 350.0, 1: 1100.0, 2: 2600.0}
# (speaker_id, gender_code, age)
SPEAKERS = [(1, 0, 30), (2, 1, 25), (3, 0, 41), (4, 1, 35), (5, 0, 55), (6, 0, 22)]


def synth_wave(rng: np.random.Generator, level: int, sample_rate: int = 16000, duration: float = 0.5):
    t = np.arange(int(sample_rate * duration)) / sample_rate
    base = CLASS_TONES[level] * (1.0 + 0.03 * rng.standard_normal())
    x = 0.45 * np.sin(2 * np.pi * base * t + rng.uniform(0, 2 * np.pi))
    x += 0.15 * np.sin(2 * np.pi * 2 * base * t)
    x += 0.03 * rng.standard_normal(len(t))
    return x


def write_wav(path: Path, samples: np.ndarray, sample_rate: int):
    wavfile.write(path, sample_rate, (np.clip(samples, -1, 1) * 32767).astype(np.int16))


def build_corpus(root: Path, per_class: int = 12, seed: int = 0) -> Path:
    rng = np.random.default_rng(seed)
    for level in (0, 1, 2):
        level_dir = root / str(level)
        level_dir.mkdir(parents=True, exist_ok=True)
        for k in range(per_class):
            word = k % 7
            speaker, gender, age = SPEAKERS[k % len(SPEAKERS)]
            duration = rng.uniform(0.45, 0.75)
            samples = synth_wave(rng, level, duration=duration)
            write_wav(level_dir / f"{word}-{speaker}-{gender}-{age}-{level}-{k}.wav", samples, 16000)
    return root


@pytest.fixture(scope="session")
def corpus_root(tmp_path_factory) -> Path:
    return build_corpus(tmp_path_factory.mktemp("baved_toy"), per_class=12, seed=0)


@pytest.fixture(scope="session")
def toy_dataset(corpus_root):
    return scan_dataset(corpus_root)


@pytest.fixture(scope="session")
def session_cache(tmp_path_factory) -> Path:
    """Feature cache shared across tests to keep stub extraction one-shot."""
    return tmp_path_factory.mktemp("feature_cache")
