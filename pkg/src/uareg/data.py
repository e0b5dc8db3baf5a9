"""Manifest-backed feature pipeline shared by training and evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from uareg.augment import add_noise_feature, add_noise_snr
from uareg.dsp.features import FeatureConfig, extract
from uareg.ingest import AudioSegment, AudioSignal, ManifestEntry, load_wav
from uareg.model import prepare_input


@dataclass
class FeaturePipeline:
    """Turns manifest entries into prepared (T, F) network inputs.

    Clean features are cached per entry; noisy ones are recomputed on
    request so each call draws a fresh noise realization.
    """
    feature: FeatureConfig
    time_len: int | None = None
    segment_s: float = 30.0
    noise_domain: str = "waveform"
    mean: float = 0.0
    std: float = 1.0
    _signals: dict = field(default_factory=dict, repr=False)
    _raw: dict = field(default_factory=dict, repr=False)

    def signal(self, path: str) -> AudioSignal:
        sig = self._signals.get(path)
        if sig is None:
            sig = self._signals[path] = load_wav(path)
        return sig

    def segment(self, entry: ManifestEntry) -> AudioSegment:
        sig = self.signal(entry.path)
        sr = sig.sample_rate
        dur = entry.duration_s or self.segment_s
        start = int(math.floor(entry.offset_s * sr + 1e-9))
        n = int(round(dur * sr))
        if start + n > sig.samples.shape[0]:
            raise ValueError(f"{entry.path}: segment at {entry.offset_s}s overruns the file")
        return AudioSegment(sig.samples[start:start + n], sr, entry.record_id, entry.offset_s, dur)

    def _key(self, entry: ManifestEntry):
        return (entry.path, entry.offset_s)

    def raw_values(self, entry: ManifestEntry) -> np.ndarray:
        key = self._key(entry)
        vals = self._raw.get(key)
        if vals is None:
            vals = self._raw[key] = extract(self.segment(entry), self.feature).values
        return vals

    def noisy_values(self, entry: ManifestEntry, snr_db: float, rng: np.random.Generator) -> np.ndarray:
        if self.noise_domain == "feature":
            return add_noise_feature(self.raw_values(entry), snr_db, rng)
        return extract(add_noise_snr(self.segment(entry), snr_db, rng), self.feature).values

    def fit_normalizer(self, entries) -> None:
        vals = [self.raw_values(e) for e in entries]
        total = sum(v.size for v in vals)
        mean = sum(float(v.sum()) for v in vals) / total
        var = sum(float(((v - mean) ** 2).sum()) for v in vals) / total
        self.mean, self.std = mean, math.sqrt(var) or 1.0

    def prepare(self, values: np.ndarray) -> np.ndarray:
        return prepare_input(values, self.time_len, self.mean, self.std)

    def batch(self, entries, dtype=np.float32) -> np.ndarray:
        return np.stack([self.prepare(self.raw_values(e)) for e in entries]).astype(dtype)

    def noisy_batch(self, entries, snrs, rng: np.random.Generator, dtype=np.float32) -> np.ndarray:
        return np.stack([self.prepare(self.noisy_values(e, s, rng))
                         for e, s in zip(entries, snrs)]).astype(dtype)

    def freq_bins(self, entry: ManifestEntry) -> int:
        return self.raw_values(entry).shape[1]
