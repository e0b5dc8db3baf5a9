from uareg.dsp.cqt import CqtConfig, cqt_frequencies, cqt_kernel, cqt_spectrogram
from uareg.dsp.features import DATASETS, FeatureConfig, extract
from uareg.dsp.filterbank import FilterBank, build_filterbank, filterbank_for, filterbank_spectrogram
from uareg.dsp.scales import bark_scale, bark_to_hz, mel_scale, mel_to_hz
from uareg.dsp.spectral import (LOG_EPS, BandConfig, FrameConfig, Spectrogram, frame_and_window,
                                power_spectrum, stft_spectrogram)

__all__ = [
    "BandConfig", "CqtConfig", "DATASETS", "FeatureConfig", "FilterBank", "FrameConfig",
    "LOG_EPS", "Spectrogram", "bark_scale", "bark_to_hz", "build_filterbank", "cqt_frequencies",
    "cqt_kernel", "cqt_spectrogram", "extract", "filterbank_for", "filterbank_spectrogram",
    "frame_and_window", "mel_scale", "mel_to_hz", "power_spectrum", "stft_spectrogram",
]
