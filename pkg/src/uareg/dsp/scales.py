"""Perceptual frequency warpings.

The mel formula uses a base-10 logarithm (the 2595 constant belongs to
log10); the Bark warping is ``6 * asinh(f / 600)``.
"""

from __future__ import annotations

import numpy as np


def _check(f):
    f = np.asarray(f, dtype=np.float64)
    if np.any(f < 0):
        raise ValueError("negative frequency")
    return f


def mel_scale(f_hz):
    return 2595.0 * np.log10(1.0 + _check(f_hz) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def bark_scale(f_hz):
    return 6.0 * np.arcsinh(_check(f_hz) / 600.0)


def bark_to_hz(bark):
    return 600.0 * np.sinh(np.asarray(bark, dtype=np.float64) / 6.0)


SCALES = {
    "mel": (mel_scale, mel_to_hz),
    "bark": (bark_scale, bark_to_hz),
}
