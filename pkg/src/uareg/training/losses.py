"""Cross-entropy, KL consistency and LMR losses on autodiff tensors.

All logarithms are natural; losses are in nats and averaged over the batch.
"""

from __future__ import annotations

import numpy as np

from uareg.autodiff import Tensor, log_softmax, softmax

RAW, NOISY, MIXED = "raw", "noisy", "mixed"


def _onehot(labels, n_classes: int, dtype) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(f"label out of range [0, {n_classes})")
    out = np.zeros((labels.size, n_classes), dtype=dtype)
    out[np.arange(labels.size), labels] = 1.0
    return out


def cross_entropy(logits: Tensor, labels, reduction: str = "mean") -> Tensor:
    """-log softmax(logits)[label] via log-sum-exp."""
    if logits.tag == NOISY:
        raise AssertionError("noisy logits must never meet ground-truth labels")
    onehot = _onehot(labels, logits.shape[-1], logits.data.dtype)
    if onehot.shape[0] != logits.shape[0]:
        raise ValueError("labels and logits disagree on batch size")
    nll = -(log_softmax(logits, axis=-1) * Tensor(onehot, dtype=onehot.dtype)).sum(axis=-1)
    return nll.mean() if reduction == "mean" else nll


def kl_term(z: Tensor, z_tilde: Tensor) -> Tensor:
    """(1/n) sum_i sum_c p log(p / p~) with p = softmax(z), p~ = softmax(z~)."""
    if z.shape != z_tilde.shape:
        raise ValueError(f"shape mismatch {z.shape} vs {z_tilde.shape}")
    logp = log_softmax(z, axis=-1)
    logq = log_softmax(z_tilde, axis=-1)
    return (softmax(z, axis=-1) * (logp - logq)).sum(axis=-1).mean()


def smooth_reg(z: Tensor, z_tilde: Tensor) -> Tensor:
    """Symmetric KL between predictions on raw and perturbed inputs."""
    return kl_term(z, z_tilde) + kl_term(z_tilde, z)


def lmr_loss(logits: Tensor, labels_i, labels_j, lam) -> Tensor:
    """lam * CE(Z, y_i) + (1 - lam) * CE(Z, y_j); ``lam`` scalar or per sample."""
    lam_arr = np.asarray(lam, dtype=logits.data.dtype)
    if np.any(lam_arr < 0) or np.any(lam_arr > 1):
        raise ValueError("lambda must lie in [0, 1]")
    ce_i = cross_entropy(logits, labels_i, reduction="none")
    ce_j = cross_entropy(logits, labels_j, reduction="none")
    lam_t = Tensor(np.broadcast_to(lam_arr, ce_i.shape).copy(), dtype=lam_arr.dtype)
    return (lam_t * ce_i + (1.0 - lam_t) * ce_j).mean()


def total_loss(z_raw: Tensor, labels, alpha: float = 0.0, z_noisy: Tensor | None = None,
               mixed: tuple | None = None, reg_pair: tuple | None = None):
    """Main loss plus ``alpha`` times the symmetric KL regularizer.

    ``mixed`` is ``(Z_ij, labels_i, labels_j, lam)`` when LMR fired; its loss
    replaces plain cross-entropy. The regularizer uses ``(z_raw, z_noisy)``
    unless ``reg_pair`` overrides it. Returns ``(loss, main, reg)`` where
    ``reg`` is None when disabled.
    """
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    if mixed is not None:
        z_mix, y_i, y_j, lam = mixed
        main = lmr_loss(z_mix, y_i, y_j, lam)
    else:
        main = cross_entropy(z_raw, labels)
    if alpha == 0:
        return main, main, None
    pair = reg_pair if reg_pair is not None else (z_raw, z_noisy)
    if pair[1] is None:
        raise ValueError("alpha > 0 needs a noisy counterpart batch")
    reg = smooth_reg(*pair)
    return main + reg * alpha, main, reg
