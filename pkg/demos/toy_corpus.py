"""Tiny synthetic corpus in the BAVED directory layout, for the demos.

Real BAVED is ~1935 short recordings of 7 Arabic words at 3 emotion
levels. The demos stand up a miniature look-alike (tones per level plus
noise) so every script runs offline in seconds.
"""

from pathlib import Path

import numpy as np
from scipy.io import wavfile

LEVEL_TONES = {0: 350.0, 1: 1100.0, 2: 2600.0}
SPEAKERS = [(1, 0, 30), (2, 1, 25), (3, 0, 41), (4, 1, 35), (5, 0, 55), (6, 0, 22)]


def build_toy_corpus(root: Path, per_class: int = 12, seed: int = 0) -> Path:
    rng = np.random.default_rng(seed)
    for level, tone in LEVEL_TONES.items():
        level_dir = root / str(level)
        level_dir.mkdir(parents=True, exist_ok=True)
        for k in range(per_class):
            word = k % 7
            speaker, gender, age = SPEAKERS[k % len(SPEAKERS)]
            duration = rng.uniform(0.45, 0.75)
            t = np.arange(int(16000 * duration)) / 16000
            freq = tone * (1.0 + 0.03 * rng.standard_normal())
            x = 0.45 * np.sin(2 * np.pi * freq * t + rng.uniform(0, 2 * np.pi))
            x += 0.15 * np.sin(2 * np.pi * 2 * freq * t)
            x += 0.03 * rng.standard_normal(len(t))
            pcm = (np.clip(x, -1, 1) * 32767).astype(np.int16)
            wavfile.write(level_dir / f"{word}-{speaker}-{gender}-{age}-{level}-{k}.wav", 16000, pcm)
    return root


def demo_workspace(name: str) -> Path:
    """demo_runs/<name> next to the demos, wiped artifacts stay inspectable."""
    workspace = Path(__file__).resolve().parent.parent / "demo_runs" / name
    workspace.mkdir(parents=True, exist_ok=True)
    return workspace
