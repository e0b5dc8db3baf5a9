import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.signal import get_window

from uareg.dsp import (DATASETS, LOG_EPS, BandConfig, CqtConfig, FeatureConfig, FrameConfig,
                       Spectrogram, bark_scale, bark_to_hz, build_filterbank, cqt_frequencies,
                       cqt_spectrogram, extract, filterbank_for, filterbank_spectrogram,
                       frame_and_window, mel_scale, mel_to_hz, power_spectrum, stft_spectrogram)
from uareg.dsp import io as feature_io
from uareg.dsp.io import FeatureFileError
from uareg.ingest import AudioSegment


def _seg(samples, sr):
    samples = np.asarray(samples, dtype=np.float64)
    return AudioSegment(samples, sr, "r", 0.0, samples.size / sr)


def _noise(seconds, sr, seed=0):
    return _seg(np.random.default_rng(seed).standard_normal(int(round(seconds * sr))) * 0.1, sr)


# -- scales ---------------------------------------------------------------------

def test_scale_values():
    assert mel_scale(0.0) == 0.0 and bark_scale(0.0) == 0.0
    assert abs(mel_scale(700.0) - 2595 * math.log10(2)) < 1e-9
    assert abs(mel_scale(700.0) - 781.17) < 0.01
    assert abs(bark_scale(600.0) - 6 * math.log(1 + math.sqrt(2))) < 1e-12
    assert abs(bark_scale(600.0) - 5.28824) < 1e-4


def test_scale_roundtrip_and_monotone():
    f = np.concatenate([[1e-3], np.geomspace(1, 30000, 500)])
    for fwd, inv in ((mel_scale, mel_to_hz), (bark_scale, bark_to_hz)):
        assert np.all(np.diff(fwd(f)) > 0)
        assert np.max(np.abs(inv(fwd(f)) - f) / f) < 1e-9


def test_negative_frequency_rejected():
    with pytest.raises(ValueError):
        mel_scale(-1.0)
    with pytest.raises(ValueError):
        bark_scale(np.array([1.0, -2.0]))


# -- framing and spectra ----------------------------------------------------------

def test_frame_geometry_and_hann():
    sr = 52734
    frames = frame_and_window(_noise(30, sr), FrameConfig())
    assert frames.shape == (1199, 2636)
    ones = frame_and_window(_seg(np.ones(sr // 10), sr), FrameConfig())
    assert np.allclose(ones[0], get_window("hann", 2636, fftbins=False))


def test_rectangular_window_on_constant():
    frames = frame_and_window(_seg(np.ones(8000), 8000), FrameConfig(window="rectangular"))
    assert np.all(frames == 1.0)


@settings(max_examples=100, deadline=None)
@given(dur=st.floats(0.06, 3.0), flen=st.floats(0.01, 0.05), frac=st.floats(0.2, 1.0),
       sr=st.sampled_from([4000, 8000, 17067]))
def test_frame_count_formula(dur, flen, frac, sr):
    shift = flen * frac
    n = int(round(dur * sr))
    seg = _seg(np.zeros(n), sr)
    if n < int(flen * sr + 1e-9):
        return
    frames = frame_and_window(seg, FrameConfig(flen, shift))
    expected = math.floor((n / sr - flen) / shift + 1e-9) + 1
    assert frames.shape[0] == expected


def test_frame_shorter_than_segment_errors():
    with pytest.raises(ValueError):
        frame_and_window(_seg(np.ones(10), 8000), FrameConfig())


def test_power_spectrum_bin_orthogonality():
    n, k = 400, 37
    frame = np.sin(2 * np.pi * k * np.arange(n) / n)[None, :]
    mag = power_spectrum(frame)[0]
    assert np.argmax(mag) == k - 1  # DC dropped, column 0 is bin 1
    others = np.delete(mag, k - 1)
    assert others.max() <= 1e-6 * mag.max()


def test_power_spectrum_matches_direct_dft():
    rng = np.random.default_rng(1)
    frames = rng.standard_normal((3, 50))
    n = np.arange(50)
    dft = frames @ np.exp(-2j * np.pi * np.outer(n, np.arange(1, 26)) / 50)
    assert np.allclose(power_spectrum(frames), np.abs(dft))
    assert np.allclose(power_spectrum(frames, real_part=True), np.abs(dft.real))


def test_zero_frame_spectrum():
    assert np.all(power_spectrum(np.zeros((2, 64))) == 0.0)
    impulse = np.zeros((1, 64))
    impulse[0, 0] = 1.0
    energy = float((power_spectrum(impulse) ** 2).sum())
    assert 0 < energy < np.inf


def test_shipsear_bin_spacing():
    assert abs(52734 / 2636 - 20.0) < 0.01


@pytest.mark.parametrize("name,bins", [("shipsear", 1318), ("dtil", 100), ("deepship", 400)])
def test_stft_table_dims(name, bins):
    sr, band = DATASETS[name]
    spec = stft_spectrogram(_noise(30, sr), FrameConfig(), band)
    assert spec.values.shape == (1199, bins)
    assert np.all(np.isfinite(spec.values))
    # bins below f_lo are zeroed before the log
    low = spec.bin_freqs_hz < band.f_lo
    assert np.all(spec.values[:, low] == np.log(LOG_EPS))


def test_stft_band_nyquist():
    with pytest.raises(ValueError):
        stft_spectrogram(_noise(1, 8000), FrameConfig(), BandConfig(100, 5000))


# -- filterbanks -------------------------------------------------------------------

def test_filterbank_construction():
    band = BandConfig(100, 8000)
    fb = filterbank_for("mel", 32000, FrameConfig(), band, 300)
    assert fb.weights.shape == (300, 400)
    assert np.all(np.diff(fb.center_freqs) > 0)
    assert np.all(fb.weights >= 0)
    assert fb.edges_hz[0] >= band.f_lo and fb.edges_hz[-1] <= band.f_hi
    freqs = fb.df * np.arange(1, 401)
    support = freqs[np.flatnonzero(fb.weights.any(axis=0))]
    assert support.min() >= band.f_lo and support.max() <= band.f_hi


def test_single_filter_peaks_at_warped_midpoint():
    band = BandConfig(100, 4000)
    fb = build_filterbank("bark", 1, band, 1.0, 4000)
    mid = bark_to_hz((bark_scale(100) + bark_scale(4000)) / 2)
    assert abs(fb.center_freqs[0] - mid) < 1e-9
    peak = np.argmax(fb.weights[0]) + 1
    assert abs(peak - mid) <= 1.0
    assert abs(fb.weights[0].max() - 1.0) < 1e-3


def test_filterbank_too_narrow():
    with pytest.raises(ValueError):
        build_filterbank("mel", 10, BandConfig(100, 105), 20.0, 100)


@pytest.mark.parametrize("kind", ["mel", "bark"])
@pytest.mark.parametrize("name", ["shipsear", "dtil", "deepship"])
def test_filterbank_table_dims(kind, name):
    sr, band = DATASETS[name]
    spec = extract(_noise(30, sr), FeatureConfig(kind=kind, band=band))
    assert spec.values.shape == (1199, 300)
    assert np.all(np.isfinite(spec.values))


def test_filterbank_zero_and_homogeneity():
    sr, band = 8000, BandConfig(100, 3000)
    fb = filterbank_for("mel", sr, FrameConfig(), band, 40)
    zero = filterbank_spectrogram(_seg(np.zeros(sr), sr), fb, FrameConfig(), band)
    assert np.all(zero.values == np.log(LOG_EPS))
    x = _noise(1, sr)
    a = filterbank_spectrogram(x, fb, FrameConfig(), band).values
    b = filterbank_spectrogram(_seg(2 * x.samples, sr), fb, FrameConfig(), band).values
    assert np.allclose(b - a, math.log(2), atol=1e-6)


def test_filterbank_geometry_mismatch():
    fb = filterbank_for("mel", 8000, FrameConfig(), BandConfig(100, 3000), 20)
    with pytest.raises(ValueError, match="geometry"):
        filterbank_spectrogram(_noise(1, 8000), fb, FrameConfig(0.1, 0.05), BandConfig(100, 3000))


# -- CQT ---------------------------------------------------------------------------

def test_cqt_octave_doubles():
    f = cqt_frequencies(CqtConfig(f_max=1000, octave_resolution=30, f_base=100))
    assert abs(f[30] - 200.0) < 1e-9
    assert np.all(f <= 1000)


@pytest.mark.parametrize("f_max,k", [(26367, 340), (2000, 229), (8000, 289)])
def test_cqt_bin_counts(f_max, k):
    assert cqt_frequencies(CqtConfig(f_max=f_max)).size == k


def test_cqt_bad_config():
    with pytest.raises(ValueError):
        CqtConfig(f_max=10, f_base=10)


@pytest.mark.parametrize("name,bins", [("shipsear", 340), ("dtil", 229), ("deepship", 289)])
def test_cqt_table_dims(name, bins):
    sr, band = DATASETS[name]
    spec = extract(_noise(30, sr), FeatureConfig(kind="cqt", band=band))
    assert spec.values.shape == (899, bins)


def test_cqt_tone_peaks_at_its_bin():
    sr = 8000
    cfg = CqtConfig(f_max=2000)
    freqs = cqt_frequencies(cfg)
    t = np.arange(sr) / sr
    for k in (60, 120, 150, 200):
        spec = cqt_spectrogram(_seg(np.sin(2 * np.pi * freqs[k] * t), sr), cfg)
        assert np.argmax(spec.values.mean(axis=0)) == k


def test_cqt_zero_and_nyquist():
    cfg = CqtConfig(f_max=2000)
    zero = cqt_spectrogram(_seg(np.zeros(8000), 8000), cfg)
    assert np.all(zero.values == np.log(LOG_EPS))
    with pytest.raises(ValueError, match="Nyquist"):
        cqt_spectrogram(_seg(np.zeros(3000), 3000), cfg)


# -- feature files ------------------------------------------------------------------

def _rand_spec(rows=1199, cols=300):
    v = np.random.default_rng(0).standard_normal((rows, cols)).astype(np.float32)
    return Spectrogram(v, np.arange(rows) * 0.025, np.arange(cols) * 10.0, "mel", "rec", 15.0,
                       {"sample_rate": 32000, "band": [100, 8000]})


def test_feature_io_roundtrip(tmp_path):
    spec = _rand_spec()
    feature_io.save(spec, tmp_path / "a.uaspec", "abc")
    back = feature_io.load(tmp_path / "a.uaspec")
    assert np.array_equal(back.values, spec.values)
    assert back.feature_kind == "mel" and back.record_id == "rec" and back.offset_s == 15.0
    assert back.meta["config_hash"] == "abc" and back.meta["sample_rate"] == 32000
    assert (tmp_path / "a.uaspec").read_bytes()[:8] == b"UASPEC1\0"


def test_feature_io_truncated(tmp_path):
    feature_io.save(_rand_spec(10, 10), tmp_path / "a.uaspec")
    raw = (tmp_path / "a.uaspec").read_bytes()
    (tmp_path / "b.uaspec").write_bytes(raw[:100])
    with pytest.raises(FeatureFileError, match="payload mismatch"):
        feature_io.load(tmp_path / "b.uaspec")


def test_feature_io_header_disagrees(tmp_path):
    import struct
    raw = b"UASPEC1\0" + struct.pack("<II", 2, 2) + np.zeros(3, "<f4").tobytes()
    (tmp_path / "c.uaspec").write_bytes(raw)
    with pytest.raises(FeatureFileError):
        feature_io.load(tmp_path / "c.uaspec")
    (tmp_path / "d.uaspec").write_bytes(b"NOTMAGIC" + raw[8:])
    with pytest.raises(FeatureFileError, match="corrupt header"):
        feature_io.load(tmp_path / "d.uaspec")
