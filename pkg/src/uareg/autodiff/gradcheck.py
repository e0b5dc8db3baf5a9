"""Central finite-difference check of reverse-mode gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from uareg.autodiff.tensor import Tensor, no_grad, record_branches


def _eval(f):
    with no_grad(), record_branches() as branches:
        value = f().item()
    return value, branches


def _central(f, flat, i, eps, base_branches):
    orig = flat[i]
    try:
        flat[i] = orig + eps
        hi, b_hi = _eval(f)
        flat[i] = orig - eps
        lo, b_lo = _eval(f)
    finally:
        flat[i] = orig
    if base_branches is not None and (b_hi != base_branches or b_lo != base_branches):
        return None
    return (hi - lo) / (2.0 * eps)


def numeric_grad(f: Callable[[], Tensor], param: Tensor, index: tuple, eps: float,
                 base_branches=None, richardson: bool = False):
    """Central difference (f(x+eps) - f(x-eps)) / 2eps at one coordinate.

    ``richardson`` combines the quotients at eps and eps/2 as
    (4 D(eps/2) - D(eps)) / 3, cancelling the eps**2 error term. With
    ``base_branches`` given, returns None when any probe lands on a
    different ReLU/max-pool branch than the base point (a kink lies within
    ``eps``, so the quotient is not a derivative).
    """
    flat = param.data.reshape(-1)
    i = np.ravel_multi_index(index, param.shape)
    d1 = _central(f, flat, i, eps, base_branches)
    if d1 is None or not richardson:
        return d1
    d2 = _central(f, flat, i, eps / 2.0, base_branches)
    return None if d2 is None else (4.0 * d2 - d1) / 3.0


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-3,
               max_per_param: int | None = 20, seed: int = 0, skip_kinks: bool = True,
               richardson: bool = False, report: dict | None = None) -> float:
    """Max relative error between autodiff and central-difference gradients.

    Relative error is ``|g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|)`` over up
    to ``max_per_param`` sampled coordinates of each parameter. Coordinates
    whose probes cross a ReLU/max-pool kink are skipped when
    ``skip_kinks``; ``report`` receives checked/skipped counts.
    """
    for p in params:
        p.zero_grad()
    loss = f()
    again, base = _eval(f)
    if loss.item() != again:
        raise ValueError("non-deterministic f: two evaluations differ")
    loss.backward()
    rng = np.random.default_rng(seed)
    worst, checked, skipped = 0.0, 0, 0
    for p in params:
        g_ad = p.grad if p.grad is not None else np.zeros_like(p.data)
        n = p.data.size
        picks = np.arange(n) if max_per_param is None or n <= max_per_param else \
            rng.choice(n, size=max_per_param, replace=False)
        for flat_i in picks:
            idx = np.unravel_index(flat_i, p.shape)
            fd = numeric_grad(f, p, idx, eps, base if skip_kinks else None, richardson)
            if fd is None:
                skipped += 1
                continue
            ad = float(g_ad[idx])
            worst = max(worst, abs(ad - fd) / max(1e-8, abs(ad) + abs(fd)))
            checked += 1
    if report is not None:
        report.update(checked=checked, skipped=skipped)
    if checked == 0:
        raise ValueError("every sampled coordinate straddles a kink; reduce eps")
    return worst
