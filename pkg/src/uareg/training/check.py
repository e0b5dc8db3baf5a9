"""End-to-end gradient check of the combined objective on a tiny model."""

from __future__ import annotations

import numpy as np

from uareg.augment import lmr_batch
from uareg.autodiff import default_dtype, grad_check
from uareg.model import Model, ModelConfig
from uareg.training.losses import MIXED, NOISY, RAW, total_loss

TINY = ModelConfig(n_classes=3, stem_channels=4, widths=[4], blocks_per_stage=1, heads=2,
                   attn_dim=4, time_len=8)


def objective_grad_check(precision: str = "f64", alpha: float = 0.5, lmr: bool = True,
                         seed: int = 0, eps: float = 1e-3, max_per_param: int | None = 12,
                         training: bool = True, richardson: bool = True,
                         report: dict | None = None) -> float:
    """Max relative error of the full objective's gradient on an 8x8 input batch.

    Covers LMR cross-entropy on mixed inputs plus both KL directions on the
    raw/noisy pair.
    """
    dtype = np.float64 if precision == "f64" else np.float32
    rng = np.random.default_rng(seed)
    with default_dtype(dtype):
        model = Model(TINY, rng, dtype=dtype)
        model.train(training)
        x = rng.standard_normal((4, 8, 8)).astype(dtype)
        x_noisy = x + 0.3 * rng.standard_normal(x.shape).astype(dtype)
        y = rng.integers(0, TINY.n_classes, size=4)
        mix = lmr_batch(x, y, rng) if lmr else None

        def objective():
            z_raw = model(x)
            z_raw.tag = RAW
            z_noisy = model(x_noisy)
            z_noisy.tag = NOISY
            mixed = None
            if mix is not None:
                z_mix = model(mix.values)
                z_mix.tag = MIXED
                mixed = (z_mix, mix.labels_i, mix.labels_j, mix.lam)
            return total_loss(z_raw, y, alpha, z_noisy, mixed)[0]

        return grad_check(objective, model.parameters(), eps=eps, max_per_param=max_per_param,
                          seed=seed, richardson=richardson, report=report)
