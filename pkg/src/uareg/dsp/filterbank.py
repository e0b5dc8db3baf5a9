"""Triangular mel/Bark filterbanks over band-limited DFT bins."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from uareg.dsp.scales import SCALES
from uareg.dsp.spectral import (LOG_EPS, BandConfig, FrameConfig, Spectrogram,
                                stft_geometry, stft_magnitudes)
from uareg.ingest import AudioSegment


@dataclass(frozen=True)
class FilterBank:
    kind: str
    weights: np.ndarray  # n_filters x n_bins
    center_freqs: np.ndarray
    edges_hz: np.ndarray  # n_filters + 2 warped-uniform points
    df: float

    @property
    def n_filters(self) -> int:
        return self.weights.shape[0]


def build_filterbank(kind: str, n_filters: int, band: BandConfig, df: float,
                     n_bins: int) -> FilterBank:
    """Triangles on ``n_filters + 2`` points equally spaced on the warped axis.

    Bin k (1-based) sits at ``k * df`` Hz. A triangle narrower than the bin
    spacing can miss every bin; such a row falls back to linear
    interpolation of the two bins around its center, so every filter
    still reads the spectrum at its own frequency.
    """
    if kind not in SCALES:
        raise ValueError(f"unknown filterbank kind {kind!r}")
    if n_filters < 1:
        raise ValueError("n_filters must be >= 1")
    fwd, inv = SCALES[kind]
    freqs = df * np.arange(1, n_bins + 1)
    in_band = np.flatnonzero((freqs >= band.f_lo) & (freqs <= band.f_hi))
    if in_band.size < 2:
        raise ValueError(f"band {band} too narrow to host filters at {df:.3f} Hz spacing")
    edges = inv(np.linspace(fwd(band.f_lo), fwd(band.f_hi), n_filters + 2))
    edges[0], edges[-1] = band.f_lo, band.f_hi
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rise = (freqs[None, :] - lo) / (mid - lo)
    fall = (hi - freqs[None, :]) / (hi - mid)
    weights = np.maximum(0.0, np.minimum(rise, fall))

    empty = np.flatnonzero(weights.sum(axis=1) == 0)
    first, last = in_band[0], in_band[-1]
    for i in empty:
        pos = np.clip(edges[i + 1] / df - 1.0, first, last)
        k0 = min(int(np.floor(pos)), last - 1)
        frac = pos - k0
        weights[i, k0] = 1.0 - frac
        weights[i, k0 + 1] = frac
    if np.any(np.diff(edges[1:-1]) <= 0):
        raise ValueError("filter centers not strictly increasing")
    return FilterBank(kind, weights, edges[1:-1].copy(), edges, df)


def filterbank_for(kind: str, sample_rate: int, cfg: FrameConfig, band: BandConfig,
                   n_filters: int = 300) -> FilterBank:
    _, df, n_bins = stft_geometry(sample_rate, cfg, band)
    return build_filterbank(kind, n_filters, band, df, n_bins)


def filterbank_spectrogram(segment: AudioSegment, fb: FilterBank,
                           cfg: FrameConfig = FrameConfig(),
                           band: BandConfig | None = None) -> Spectrogram:
    """log(sum_k W[i, k] |X[t, k]| + eps) per frame and filter."""
    if band is None:
        band = BandConfig(float(fb.edges_hz[0]), float(fb.edges_hz[-1]))
    mags, times, _ = stft_magnitudes(segment, cfg, band)
    if mags.shape[1] != fb.weights.shape[1] or not np.isclose(
            segment.sample_rate / int(cfg.frame_len_s * segment.sample_rate + 1e-9), fb.df):
        raise ValueError(
            f"filterbank geometry mismatch: {fb.weights.shape[1]} bins vs {mags.shape[1]}")
    values = np.log(mags @ fb.weights.T + LOG_EPS)
    return Spectrogram(values, times, fb.center_freqs.copy(), fb.kind, segment.record_id,
                       segment.offset_s, {"sample_rate": segment.sample_rate,
                                          "band": [band.f_lo, band.f_hi]})
