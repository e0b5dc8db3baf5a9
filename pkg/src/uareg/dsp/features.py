"""One entry point over the four feature kinds."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from functools import lru_cache

from uareg.dsp.cqt import CqtConfig, cqt_spectrogram
from uareg.dsp.filterbank import filterbank_for, filterbank_spectrogram
from uareg.dsp.spectral import (FEATURE_KINDS, BandConfig, FrameConfig, Spectrogram,
                                stft_spectrogram)
from uareg.ingest import AudioSegment

# Effective bands and sample rates of the three benchmark corpora.
DATASETS = {
    "shipsear": (52734, BandConfig(100.0, 26367.0)),
    "dtil": (17067, BandConfig(100.0, 2000.0)),
    "deepship": (32000, BandConfig(100.0, 8000.0)),
}


@dataclass(frozen=True)
class FeatureConfig:
    kind: str = "mel"
    band: BandConfig = field(default_factory=lambda: BandConfig(100.0, 8000.0))
    frame: FrameConfig = field(default_factory=FrameConfig)
    n_filters: int = 300
    octave_resolution: int = 30
    cqt_f_base: float = 10.0
    cqt_fps: float = 30.0
    real_part: bool = False

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise ValueError(f"unknown feature {self.kind!r}; choose from {FEATURE_KINDS}")

    def cqt(self) -> CqtConfig:
        return CqtConfig(self.band.f_hi, self.octave_resolution, self.cqt_f_base, self.cqt_fps)

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha1(blob).hexdigest()[:12]


@lru_cache(maxsize=32)
def _fb(kind, sample_rate, frame, band, n_filters):
    return filterbank_for(kind, sample_rate, frame, band, n_filters)


def extract(segment: AudioSegment, cfg: FeatureConfig) -> Spectrogram:
    if cfg.kind == "stft":
        return stft_spectrogram(segment, cfg.frame, cfg.band, cfg.real_part)
    if cfg.kind in ("mel", "bark"):
        fb = _fb(cfg.kind, segment.sample_rate, cfg.frame, cfg.band, cfg.n_filters)
        return filterbank_spectrogram(segment, fb, cfg.frame, cfg.band)
    return cqt_spectrogram(segment, cfg.cqt())
