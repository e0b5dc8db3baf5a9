"""Synthetic tonal corpora for desk-scale end-to-end checks.

Each record is one WAV track holding a class-specific tone (with small
frequency jitter and amplitude modulation) in broadband background noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from uareg.ingest import Manifest, ManifestEntry, write_wav


@dataclass
class ToneTask:
    sample_rate: int = 4000
    segment_s: float = 2.0
    segments_per_record: int = 1
    class_freqs: list[float] = field(default_factory=lambda: [440.0, 880.0])
    tone_snr_db: tuple[float, float] = (0.0, 10.0)
    jitter_hz: float = 10.0
    harmonics: int = 1
    distractor_freqs: list[float] = field(default_factory=list)
    duty_cycle: float = 1.0  # fraction of time the tone is audible, in bursts


def _record(task: ToneTask, label: int, rng: np.random.Generator) -> np.ndarray:
    n = int(round(task.segment_s * task.sample_rate * task.segments_per_record))
    t = np.arange(n) / task.sample_rate
    f0 = task.class_freqs[label] + rng.uniform(-task.jitter_hz, task.jitter_hz)
    tone = np.zeros(n)
    for h in range(1, task.harmonics + 1):
        if f0 * h < task.sample_rate / 2:
            tone += np.sin(2 * np.pi * f0 * h * t + rng.uniform(0, 2 * np.pi)) / h
    rate = rng.uniform(0.2, 1.0)
    tone *= 1.0 + 0.5 * np.sin(2 * np.pi * rate * t + rng.uniform(0, 2 * np.pi))
    if task.duty_cycle < 1.0:
        # square on/off gate with random period and phase
        period = rng.uniform(0.3, 0.8) * task.segment_s
        phase = rng.uniform(0, period)
        tone *= ((t + phase) % period) < task.duty_cycle * period
    for f in task.distractor_freqs:
        tone += rng.uniform(0.0, 1.0) * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    snr = rng.uniform(*task.tone_snr_db)
    p_tone = np.mean(tone ** 2)
    noise = rng.standard_normal(n) * np.sqrt(p_tone / 10 ** (snr / 10))
    x = tone + noise
    return 0.5 * x / np.max(np.abs(x))


def make_corpus(root: str | Path, task: ToneTask = ToneTask(), n_train: int = 200,
                n_test: int = 50, n_val: int = 0, seed: int = 0) -> Manifest:
    """Write ``n_train + n_val + n_test`` records under ``root`` and index them.

    Labels alternate so every split is balanced; records never span splits.
    """
    root = Path(root)
    rng = np.random.default_rng(seed)
    names = [f"class{c}" for c in range(len(task.class_freqs))]
    for name in names:
        (root / name).mkdir(parents=True, exist_ok=True)
    entries = []
    plan = [("train", n_train), ("val", n_val), ("test", n_test)]
    k = 0
    for split, count in plan:
        for i in range(count):
            label = i % len(names)
            rid = f"r{k:05d}"
            path = root / names[label] / f"{rid}.wav"
            write_wav(path, _record(task, label, rng), task.sample_rate)
            for s in range(task.segments_per_record):
                entries.append(ManifestEntry(str(path), s * task.segment_s, names[label], rid,
                                             split, task.segment_s))
            k += 1
    return Manifest(entries, names)
