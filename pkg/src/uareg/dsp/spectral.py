"""Framing, windowing and band-limited STFT amplitude spectrograms."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from uareg.ingest import AudioSegment, n_windows

LOG_EPS = 1e-10
FEATURE_KINDS = ("stft", "mel", "bark", "cqt")


@dataclass(frozen=True)
class FrameConfig:
    frame_len_s: float = 0.05
    frame_shift_s: float = 0.025
    window: str = "hann"

    def __post_init__(self):
        if not 0 < self.frame_shift_s <= self.frame_len_s:
            raise ValueError("need 0 < frame_shift_s <= frame_len_s")
        if self.window not in ("hann", "rectangular"):
            raise ValueError(f"unknown window {self.window!r}")


@dataclass(frozen=True)
class BandConfig:
    f_lo: float
    f_hi: float

    def __post_init__(self):
        if not 0 <= self.f_lo < self.f_hi:
            raise ValueError(f"invalid band {self.f_lo}-{self.f_hi} Hz")

    def check(self, sample_rate: float) -> "BandConfig":
        if self.f_hi > sample_rate / 2:
            raise ValueError(
                f"band upper edge {self.f_hi} Hz violates Nyquist ({sample_rate / 2} Hz)")
        return self

    @classmethod
    def parse(cls, text: str) -> "BandConfig":
        lo, hi = text.split(":")
        return cls(float(lo), float(hi))

    def __str__(self):
        return f"{self.f_lo:g}:{self.f_hi:g}"


@dataclass
class Spectrogram:
    values: np.ndarray
    frame_times_s: np.ndarray
    bin_freqs_hz: np.ndarray
    feature_kind: str
    record_id: str = ""
    offset_s: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.feature_kind not in FEATURE_KINDS:
            raise ValueError(f"unknown feature kind {self.feature_kind!r}")
        if self.values.ndim != 2:
            raise ValueError("spectrogram values must be 2-D")

    @property
    def shape(self):
        return self.values.shape


def window(name: str, n: int) -> np.ndarray:
    if name == "rectangular":
        return np.ones(n)
    if n == 1:
        return np.ones(1)
    k = np.arange(n)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * k / (n - 1))


def frame_starts(n_samples: int, frame_n: int, hop: float, span: float | None = None) -> np.ndarray:
    """Start index of every full frame; ``hop`` may be fractional samples.

    ``span`` is the nominal frame length in (possibly fractional) samples;
    the count is floor((n - span) / hop) + 1 so it follows the configured
    durations rather than the truncated ``frame_n``.
    """
    count = n_windows(n_samples, frame_n if span is None else max(span, frame_n), hop)
    return np.floor(np.arange(count) * hop + 1e-9).astype(np.int64)


def frame_signal(samples: np.ndarray, frame_n: int, hop: float,
                 span: float | None = None) -> np.ndarray:
    starts = frame_starts(samples.shape[0], frame_n, hop, span)
    if starts.size == 0:
        raise ValueError("segment shorter than one frame")
    idx = starts[:, None] + np.arange(frame_n)[None, :]
    return samples[idx]


def frame_and_window(segment: AudioSegment, cfg: FrameConfig = FrameConfig()) -> np.ndarray:
    """T x N matrix of windowed frames, N = floor(frame_len * sr)."""
    sr = segment.sample_rate
    frame_n = int(math.floor(cfg.frame_len_s * sr + 1e-9))
    frames = frame_signal(np.asarray(segment.samples, dtype=np.float64), frame_n,
                          cfg.frame_shift_s * sr, cfg.frame_len_s * sr)
    return frames * window(cfg.window, frame_n)


def power_spectrum(frames: np.ndarray, n_bins: int | None = None,
                   real_part: bool = False) -> np.ndarray:
    """DFT amplitude of bins 1..n_bins per frame (DC dropped).

    ``real_part`` keeps |Re X| instead of |X|.
    """
    n = frames.shape[-1]
    if n_bins is None:
        n_bins = n // 2
    if not 1 <= n_bins <= n // 2:
        raise ValueError(f"n_bins={n_bins} outside 1..{n // 2}")
    spec = np.fft.rfft(frames, axis=-1)[..., 1:n_bins + 1]
    return np.abs(spec.real) if real_part else np.abs(spec)


def stft_geometry(sample_rate: int, cfg: FrameConfig, band: BandConfig) -> tuple[int, float, int]:
    """(frame samples N, bin spacing df, retained bins F = round(f_hi / df))."""
    band.check(sample_rate)
    frame_n = int(math.floor(cfg.frame_len_s * sample_rate + 1e-9))
    df = sample_rate / frame_n
    n_bins = int(round(band.f_hi / df))
    n_bins = min(n_bins, frame_n // 2)
    return frame_n, df, n_bins


def stft_magnitudes(segment: AudioSegment, cfg: FrameConfig, band: BandConfig,
                    real_part: bool = False) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Band-limited magnitudes with bins below f_lo zeroed, plus axes."""
    sr = segment.sample_rate
    frame_n, df, n_bins = stft_geometry(sr, cfg, band)
    mags = power_spectrum(frame_and_window(segment, cfg), n_bins, real_part)
    freqs = df * np.arange(1, n_bins + 1)
    mags[:, freqs < band.f_lo] = 0.0
    times = frame_starts(segment.samples.shape[0], frame_n, cfg.frame_shift_s * sr,
                         cfg.frame_len_s * sr) / sr
    return mags, times, freqs


def stft_spectrogram(segment: AudioSegment, cfg: FrameConfig = FrameConfig(),
                     band: BandConfig | None = None, real_part: bool = False) -> Spectrogram:
    if band is None:
        band = BandConfig(0.0, segment.sample_rate / 2)
    mags, times, freqs = stft_magnitudes(segment, cfg, band, real_part)
    return Spectrogram(np.log(mags + LOG_EPS), times, freqs, "stft", segment.record_id,
                       segment.offset_s, {"sample_rate": segment.sample_rate,
                                          "band": [band.f_lo, band.f_hi]})
