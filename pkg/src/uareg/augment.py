"""Noise injection, local masking and replicating (LMR), and mixup."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from uareg.ingest import AudioSegment

log = logging.getLogger(__name__)

CLEAN = math.inf


@dataclass(frozen=True)
class LmrPatch:
    a: int  # width in time bins
    b: int  # height in frequency bins
    t0: int
    f0: int


@dataclass
class MixedSample:
    values: np.ndarray
    lam: float
    label_i: int | None = None
    label_j: int | None = None
    patch: LmrPatch | None = None


def noise_std(signal_power: float, snr_db: float) -> float:
    return math.sqrt(signal_power / 10.0 ** (snr_db / 10.0))


def add_noise_snr(segment: AudioSegment, snr_db: float, rng: np.random.Generator) -> AudioSegment:
    """Add white Gaussian noise at ``snr_db`` relative to the segment's mean power.

    ``snr_db = inf`` returns the segment unchanged.
    """
    if math.isinf(snr_db) and snr_db > 0:
        return segment
    if not math.isfinite(snr_db):
        raise ValueError(f"snr_db must be finite or +inf, got {snr_db}")
    x = np.asarray(segment.samples, dtype=np.float64)
    power = float(np.mean(x * x))
    if power == 0.0:
        raise ValueError("all-zero segment: SNR undefined")
    noisy = x + rng.normal(0.0, noise_std(power, snr_db), x.shape)
    return AudioSegment(noisy, segment.sample_rate, segment.record_id, segment.offset_s,
                        segment.duration_s)


def add_noise_feature(values: np.ndarray, snr_db: float, rng: np.random.Generator) -> np.ndarray:
    """Spectrogram-domain variant: Gaussian noise at ``snr_db`` below the feature power."""
    if math.isinf(snr_db) and snr_db > 0:
        return values
    power = float(np.mean(np.square(values)))
    return values + rng.normal(0.0, noise_std(power, snr_db), values.shape)


def measured_snr_db(clean: np.ndarray, noisy: np.ndarray) -> float:
    noise = noisy - clean
    return 10.0 * math.log10(np.mean(clean * clean) / np.mean(noise * noise))


def sample_lmr_patch(W: int, H: int, rng: np.random.Generator) -> LmrPatch:
    """a ~ U{1..W-1}, b ~ U{1..H-1}, corner uniform over placements inside W x H."""
    if W < 2 or H < 2:
        raise ValueError(f"LMR needs W, H >= 2, got {W}x{H}")
    a = int(rng.integers(1, W))
    b = int(rng.integers(1, H))
    t0 = int(rng.integers(0, W - a + 1))
    f0 = int(rng.integers(0, H - b + 1))
    return LmrPatch(a, b, t0, f0)


def lmr_lambda(patch: LmrPatch, W: int, H: int) -> float:
    return 1.0 - (patch.a * patch.b) / (H * W)


def lmr_mix(x_i: np.ndarray, x_j: np.ndarray, patch: LmrPatch) -> MixedSample:
    """Copy the patch region of ``x_j`` into ``x_i``; arrays are W x H (time x freq)."""
    x_i = np.asarray(x_i)
    x_j = np.asarray(x_j)
    if x_i.shape != x_j.shape:
        raise ValueError(f"shape mismatch {x_i.shape} vs {x_j.shape}")
    W, H = x_i.shape[-2:]
    if not (1 <= patch.a <= W - 1 and 1 <= patch.b <= H - 1
            and 0 <= patch.t0 <= W - patch.a and 0 <= patch.f0 <= H - patch.b):
        raise ValueError(f"patch {patch} does not fit {W}x{H}")
    out = x_i.copy()
    sl = (..., slice(patch.t0, patch.t0 + patch.a), slice(patch.f0, patch.f0 + patch.b))
    out[sl] = x_j[sl]
    return MixedSample(out, lmr_lambda(patch, W, H), patch=patch)


def mixup_mix(x_i: np.ndarray, x_j: np.ndarray, rng: np.random.Generator | None = None,
              lam: float | None = None, beta: float | None = None) -> MixedSample:
    """lam * x_i + (1 - lam) * x_j, lam ~ U(0, 1) or Beta(beta, beta)."""
    x_i = np.asarray(x_i)
    x_j = np.asarray(x_j)
    if x_i.shape != x_j.shape:
        raise ValueError(f"shape mismatch {x_i.shape} vs {x_j.shape}")
    if lam is None:
        lam = float(rng.beta(beta, beta) if beta else rng.uniform())
    return MixedSample(lam * x_i + (1.0 - lam) * x_j, lam)


@dataclass
class MixedBatch:
    """A batch where each sample i was mixed with partner j."""
    values: np.ndarray
    labels_i: np.ndarray
    labels_j: np.ndarray
    lam: np.ndarray
    partners: np.ndarray
    patches: list


def _partners(n: int, rng: np.random.Generator) -> np.ndarray:
    # uniform over j != i, with replacement across i
    j = rng.integers(0, n - 1, size=n)
    return j + (j >= np.arange(n))


def lmr_batch(x: np.ndarray, labels: np.ndarray, rng: np.random.Generator) -> MixedBatch:
    n = x.shape[0]
    W, H = x.shape[-2:]
    partners = _partners(n, rng)
    out = np.empty_like(x)
    lam = np.empty(n)
    patches = []
    for i, j in enumerate(partners):
        patch = sample_lmr_patch(W, H, rng)
        mixed = lmr_mix(x[i], x[j], patch)
        out[i] = mixed.values
        lam[i] = mixed.lam
        patches.append(patch)
    return MixedBatch(out, labels.copy(), labels[partners], lam, partners, patches)


def mixup_batch(x: np.ndarray, labels: np.ndarray, rng: np.random.Generator,
                beta: float | None = None) -> MixedBatch:
    n = x.shape[0]
    partners = _partners(n, rng)
    lam = rng.beta(beta, beta, size=n) if beta else rng.uniform(size=n)
    shape = (n,) + (1,) * (x.ndim - 1)
    out = lam.reshape(shape) * x + (1.0 - lam.reshape(shape)) * x[partners]
    return MixedBatch(out, labels.copy(), labels[partners], lam, partners, [])


def batch_policy(x: np.ndarray, labels: np.ndarray, p_lmr: float, rng: np.random.Generator,
                 mode: str = "lmr") -> tuple[np.ndarray, MixedBatch | None]:
    """Per-batch coin: pass the batch through, or mix every sample with a partner.

    Returns ``(values, mix)`` where ``mix`` is None for a pass-through.
    """
    fire = rng.random() < p_lmr
    if not fire:
        return x, None
    if x.shape[0] < 2:
        log.warning("batch of size 1: mixing skipped")
        return x, None
    mix = lmr_batch(x, labels, rng) if mode == "lmr" else mixup_batch(x, labels, rng)
    return mix.values, mix
