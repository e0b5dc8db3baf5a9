"""Constant-Q spectrogram with geometrically spaced bandpass kernels."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from uareg.dsp.spectral import LOG_EPS, Spectrogram, frame_signal, frame_starts, window
from uareg.ingest import AudioSegment


@dataclass(frozen=True)
class CqtConfig:
    f_max: float
    octave_resolution: int = 30
    f_base: float = 10.0
    fps: float = 30.0

    def __post_init__(self):
        if self.octave_resolution < 1:
            raise ValueError("octave_resolution must be >= 1")
        if not 0 < self.f_base < self.f_max:
            raise ValueError(f"need 0 < f_base < f_max, got {self.f_base}, {self.f_max}")
        if self.fps <= 0:
            raise ValueError("fps must be positive")

    @property
    def hop_s(self) -> float:
        return 1.0 / self.fps

    @property
    def frame_len_s(self) -> float:
        return 2.0 / self.fps


def cqt_frequencies(cfg: CqtConfig) -> np.ndarray:
    """f_k = f_base * 2**(k/b), k < floor(b * log2(f_max / f_base))."""
    b = cfg.octave_resolution
    n = int(math.floor(b * math.log2(cfg.f_max / cfg.f_base) + 1e-9))
    return cfg.f_base * 2.0 ** (np.arange(n) / b)


@lru_cache(maxsize=16)
def _kernel(sample_rate: int, frame_n: int, cfg: CqtConfig) -> np.ndarray:
    freqs = cqt_frequencies(cfg)
    q = 1.0 / (2.0 ** (1.0 / cfg.octave_resolution) - 1.0)
    kernel = np.zeros((freqs.size, frame_n), dtype=np.complex128)
    for k, f in enumerate(freqs):
        n_k = min(frame_n, max(1, int(round(q * sample_rate / f))))
        start = (frame_n - n_k) // 2
        t = np.arange(n_k) - (n_k - 1) / 2.0
        w = window("hann", n_k)
        kernel[k, start:start + n_k] = w * np.exp(-2j * np.pi * f * t / sample_rate) / w.sum()
    kernel.setflags(write=False)
    return kernel


def cqt_kernel(sample_rate: int, cfg: CqtConfig) -> np.ndarray:
    """K x N complex kernel; row k spans min(Q cycles of f_k, frame length)."""
    frame_n = int(math.floor(cfg.frame_len_s * sample_rate + 1e-9))
    return _kernel(int(sample_rate), frame_n, cfg)


def cqt_spectrogram(segment: AudioSegment, cfg: CqtConfig) -> Spectrogram:
    sr = segment.sample_rate
    if cfg.f_max > sr / 2:
        raise ValueError(f"f_max {cfg.f_max} Hz violates Nyquist ({sr / 2} Hz)")
    kernel = cqt_kernel(sr, cfg)
    frame_n = kernel.shape[1]
    hop = cfg.hop_s * sr
    span = cfg.frame_len_s * sr
    frames = frame_signal(np.asarray(segment.samples, dtype=np.float64), frame_n, hop, span)
    mags = np.abs(frames @ kernel.T)
    times = frame_starts(segment.samples.shape[0], frame_n, hop, span) / sr
    return Spectrogram(np.log(mags + LOG_EPS), times, cqt_frequencies(cfg), "cqt",
                       segment.record_id, segment.offset_s,
                       {"sample_rate": sr, "band": [cfg.f_base, cfg.f_max]})
