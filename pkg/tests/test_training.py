import math
from dataclasses import replace

import numpy as np
import pytest

from uareg.autodiff import Tensor
from uareg.training import (AdamW, OptimizerState, TrainConfig, adamw_step, cross_entropy, kl_term,
                            lmr_loss, pair_reg_value, smooth_reg, total_loss, train)
from uareg.training.check import objective_grad_check
from uareg.training.losses import NOISY

from conftest import SMALL_FEATURE, SMALL_MODEL

F64 = np.float64


def T(x):
    return Tensor(np.asarray(x, dtype=F64), dtype=F64)


def _logits_for(p):
    return np.log(np.asarray(p, dtype=F64))


# -- cross-entropy ------------------------------------------------------------------

def test_ce_uniform_two_class():
    assert abs(cross_entropy(T([[0.0, 0.0]]), [0]).item() - math.log(2)) < 1e-15


def test_ce_extreme_logits_stable():
    v = cross_entropy(T([[1000.0, -1000.0]]), [0]).item()
    assert math.isfinite(v) and v < 1e-12
    assert abs(cross_entropy(T([[1000.0, -1000.0]]), [1]).item() - 2000.0) < 1e-9


def test_ce_shift_invariance():
    rng = np.random.default_rng(0)
    z = rng.standard_normal((5, 4))
    y = rng.integers(0, 4, 5)
    for c in (-30.0, 0.5, 700.0):
        assert abs(cross_entropy(T(z + c), y).item() - cross_entropy(T(z), y).item()) < 1e-9


def test_ce_label_range():
    with pytest.raises(ValueError):
        cross_entropy(T([[0.0, 1.0]]), [2])
    with pytest.raises(ValueError):
        cross_entropy(T([[0.0, 1.0]]), [-1])


def test_ce_refuses_noisy_logits():
    z = T([[0.0, 1.0]])
    z.tag = NOISY
    with pytest.raises(AssertionError):
        cross_entropy(z, [0])


# -- KL -----------------------------------------------------------------------------------

def test_kl_examples():
    z = T(np.random.default_rng(0).standard_normal((3, 4)))
    assert kl_term(z, z).item() == 0.0
    p, q = T(_logits_for([[0.5, 0.5]])), T(_logits_for([[0.25, 0.75]]))
    assert abs(kl_term(p, q).item() - 0.5 * math.log(4 / 3)) < 1e-12
    assert abs(kl_term(p, q).item() - 0.143841) < 1e-6
    reverse = 0.25 * math.log(0.25 / 0.5) + 0.75 * math.log(0.75 / 0.5)
    assert abs(kl_term(q, p).item() - reverse) < 1e-12
    assert abs(reverse - 0.130812) < 1e-6
    assert abs(smooth_reg(p, q).item() - (0.5 * math.log(4 / 3) + reverse)) < 1e-12


def test_kl_nonnegative_and_reg_symmetric():
    rng = np.random.default_rng(1)
    z, zt = rng.standard_normal((2, 10000, 5)) * 3
    per = (np.exp(z - np.log(np.exp(z).sum(1, keepdims=True)))
           * ((z - np.log(np.exp(z).sum(1, keepdims=True)))
              - (zt - np.log(np.exp(zt).sum(1, keepdims=True))))).sum(1)
    assert per.min() >= -1e-12
    assert kl_term(T(z), T(zt)).item() >= 0
    for i in range(50):
        a, b = T(z[i:i + 4]), T(zt[i:i + 4])
        assert abs(smooth_reg(a, b).item() - smooth_reg(b, a).item()) < 1e-12


def test_reg_zero_iff_same_softmax():
    z = np.random.default_rng(2).standard_normal((3, 4))
    assert abs(smooth_reg(T(z), T(z + 5.0)).item()) < 1e-9
    assert smooth_reg(T(z), T(z[::-1].copy())).item() > 0


def test_kl_shape_mismatch():
    with pytest.raises(ValueError):
        kl_term(T(np.zeros((2, 3))), T(np.zeros((2, 4))))


# -- LMR loss --------------------------------------------------------------------------------

def test_lmr_loss_examples():
    rng = np.random.default_rng(0)
    z = T(rng.standard_normal((4, 3)))
    yi, yj = np.array([0, 1, 2, 0]), np.array([1, 1, 0, 2])
    assert lmr_loss(z, yi, yj, 1.0).item() == cross_entropy(z, yi).item()
    assert abs(lmr_loss(z, yi, yi, 0.37).item() - cross_entropy(z, yi).item()) < 1e-15
    # CE_i = 1, CE_j = 2 via a 1-sample batch whose log-probs are -1 and -2
    lp = np.array([[-1.0, -2.0]])
    lp = np.append(lp, [[np.log1p(-np.exp(-1) - np.exp(-2))]], axis=1)
    zz = T(lp)
    assert abs(lmr_loss(zz, [0], [1], 0.19).item() - 1.81) < 1e-12


def test_lmr_loss_affine_in_lambda():
    rng = np.random.default_rng(3)
    z = T(rng.standard_normal((6, 5)))
    yi, yj = rng.integers(0, 5, 6), rng.integers(0, 5, 6)
    f = lambda lam: lmr_loss(z, yi, yj, lam).item()
    for lam in rng.uniform(size=20):
        assert abs(f(lam) - (lam * f(1.0) + (1 - lam) * f(0.0))) < 1e-12


def test_lmr_loss_bad_lambda():
    with pytest.raises(ValueError):
        lmr_loss(T(np.zeros((1, 2))), [0], [1], 1.5)


# -- total loss -----------------------------------------------------------------------------

def test_total_loss_reductions():
    rng = np.random.default_rng(0)
    z = T(rng.standard_normal((4, 3)))
    y = np.array([0, 1, 2, 1])
    ce = cross_entropy(z, y).item()
    assert total_loss(z, y, 0.0)[0].item() == ce
    assert abs(total_loss(z, y, 0.5, T(z.data.copy()))[0].item() - ce) < 1e-15


def test_total_loss_linear_combination():
    p, q = T(_logits_for([[0.5, 0.5]])), T(_logits_for([[0.25, 0.75]]))
    loss, main, reg = total_loss(p, [0], 2.0, q)
    assert abs(main.item() - math.log(2)) < 1e-15
    assert abs(loss.item() - (main.item() + 2 * reg.item())) < 1e-15
    assert abs(reg.item() - 0.274653) < 1e-6


def test_total_loss_needs_noisy_when_alpha_positive():
    with pytest.raises(ValueError):
        total_loss(T(np.zeros((1, 2))), [0], 0.5)


def test_total_loss_uses_lmr_when_mixed():
    rng = np.random.default_rng(1)
    z_raw, z_mix, z_noisy = (T(rng.standard_normal((3, 4))) for _ in range(3))
    z_noisy.tag = NOISY
    y, yj, lam = np.array([0, 1, 2]), np.array([1, 2, 0]), np.array([0.3, 0.6, 0.9])
    loss, main, reg = total_loss(z_raw, y, 0.5, z_noisy, (z_mix, y, yj, lam))
    assert main.item() == lmr_loss(z_mix, y, yj, lam).item()
    assert reg.item() == smooth_reg(z_raw, z_noisy).item()


def test_objective_gradient_matches_finite_differences():
    assert objective_grad_check("f64", alpha=0.5, lmr=True, seed=0) < 1e-5


# -- AdamW ------------------------------------------------------------------------------------

def test_adamw_first_step_closed_form():
    p = [np.array([1.0])]
    adamw_step(p, [np.array([1.0])], OptimizerState(), lr=5e-4, weight_decay=1e-5)
    expected = 1 - 5e-4 * (1 / (1 + 1e-8)) - 5e-4 * 1e-5
    assert abs(p[0][0] - expected) < 1e-15
    assert abs(p[0][0] - 0.999499995005) < 1e-12


def test_zero_grad_no_decay_is_fixed_point():
    p = [np.array([0.7, -2.0])]
    st = OptimizerState()
    for _ in range(50):
        adamw_step(p, [np.zeros(2)], st, lr=1e-2, weight_decay=0.0)
    assert p[0].tolist() == [0.7, -2.0]
    assert st.t == 50


def test_zero_grad_geometric_decay():
    p = [np.array([3.0])]
    st = OptimizerState()
    lr, wd = 1e-2, 0.1
    for t in range(1, 101):
        adamw_step(p, [np.zeros(1)], st, lr=lr, weight_decay=wd)
        assert abs(p[0][0] - 3.0 * (1 - lr * wd) ** t) < 1e-12


def _reference_adam(theta, grads, lr, betas, eps):
    """Textbook Adam, written out scalar by scalar."""
    b1, b2 = betas
    theta = [float(x) for x in theta]
    m = [0.0] * len(theta)
    v = [0.0] * len(theta)
    for t, g in enumerate(grads, 1):
        for i, gi in enumerate(g):
            m[i] = b1 * m[i] + (1 - b1) * gi
            v[i] = b2 * v[i] + (1 - b2) * gi * gi
            mh = m[i] / (1 - b1 ** t)
            vh = v[i] / (1 - b2 ** t)
            theta[i] -= lr * mh / (math.sqrt(vh) + eps)
    return np.array(theta)


def test_no_decay_equals_adam():
    rng = np.random.default_rng(0)
    theta0 = rng.standard_normal(7)
    grads = rng.standard_normal((100, 7))
    p = [theta0.copy()]
    st = OptimizerState()
    for g in grads:
        adamw_step(p, [g], st, lr=1e-3, weight_decay=0.0)
    ref = _reference_adam(theta0, grads, 1e-3, (0.9, 0.999), 1e-8)
    assert np.max(np.abs(p[0] - ref)) < 1e-10


def test_matches_torch_optimizers():
    torch = pytest.importorskip("torch")
    rng = np.random.default_rng(1)
    theta0 = rng.standard_normal(6)
    grads = rng.standard_normal((100, 6))
    for wd, cls in ((0.0, torch.optim.Adam), (0.05, torch.optim.AdamW)):
        tp = torch.tensor(theta0.copy(), requires_grad=True)
        opt = cls([tp], lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=wd)
        p, st = [theta0.copy()], OptimizerState()
        for g in grads:
            tp.grad = torch.tensor(g)
            opt.step()
            adamw_step(p, [g], st, lr=1e-3, weight_decay=wd)
        assert np.max(np.abs(p[0] - tp.detach().numpy())) < 1e-10


def test_decay_never_enters_moments():
    p, st = [np.array([5.0])], OptimizerState()
    adamw_step(p, [np.array([0.0])], st, lr=0.1, weight_decay=0.5)
    assert st.m[0][0] == 0.0 and st.v[0][0] == 0.0


def test_nan_gradient_aborts():
    p = [np.array([1.0])]
    with pytest.raises(FloatingPointError, match="w0"):
        adamw_step(p, [np.array([np.nan])], OptimizerState(), names=["w0"])
    assert p[0][0] == 1.0


def test_adamw_class_uses_tensor_grads():
    w = Tensor(np.array([1.0, 2.0]), requires_grad=True, dtype=F64)
    opt = AdamW([w], lr=0.1, weight_decay=0.0)
    (w * w).sum().backward()
    opt.step()
    assert np.allclose(w.data, [0.9, 1.9])
    opt.zero_grad()
    assert w.grad is None


# -- training loop ------------------------------------------------------------------------------

def _cfg(**kw):
    base = TrainConfig(alpha=0.0, p_lmr=0.0, lr=2e-3, batch=16, epochs=3, seed=0)
    return replace(base, **kw)


def test_train_is_bit_deterministic(tiny_corpus, tmp_path):
    cfg = _cfg(alpha=0.5, p_lmr=0.5)
    a = train(tiny_corpus, SMALL_FEATURE, cfg, SMALL_MODEL, tmp_path / "a", segment_s=2.0)
    b = train(tiny_corpus, SMALL_FEATURE, cfg, SMALL_MODEL, tmp_path / "b", segment_s=2.0)
    assert a.losses == b.losses
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()
    assert (tmp_path / "a" / "best.ckpt").read_bytes() == (tmp_path / "b" / "best.ckpt").read_bytes()
    header = (tmp_path / "a" / "metrics.csv").read_text().splitlines()[0]
    assert header.startswith("epoch,train_loss,ce,reg,val_acc")


def test_train_seed_changes_run(tiny_corpus):
    a = train(tiny_corpus, SMALL_FEATURE, _cfg(epochs=1), SMALL_MODEL, segment_s=2.0)
    b = train(tiny_corpus, SMALL_FEATURE, _cfg(epochs=1, seed=1), SMALL_MODEL, segment_s=2.0)
    assert a.losses != b.losses


def test_best_checkpoint_selected_by_val(tiny_corpus):
    res = train(tiny_corpus, SMALL_FEATURE, _cfg(epochs=4), SMALL_MODEL, segment_s=2.0)
    keys = [(h["val_acc"], -h["val_loss"]) for h in res.history]
    assert res.best_epoch == 1 + max(range(len(keys)), key=lambda i: (keys[i], -i))


def test_train_errors(tiny_corpus):
    from uareg.ingest import Manifest
    empty = Manifest([e for e in tiny_corpus.entries if e.split == "test"], tiny_corpus.class_names)
    with pytest.raises(ValueError, match="empty training split"):
        train(empty, SMALL_FEATURE, _cfg(), SMALL_MODEL, segment_s=2.0)
    with pytest.raises(ValueError, match="classes"):
        train(tiny_corpus, SMALL_FEATURE, _cfg(), replace(SMALL_MODEL, n_classes=3), segment_s=2.0)


def test_regularizer_lowers_pair_divergence(tiny_corpus):
    snr = (-5.0, 5.0)
    out = {}
    for alpha in (0.0, 2.0):
        res = train(tiny_corpus, SMALL_FEATURE, _cfg(alpha=alpha, epochs=6, snr_range_db=snr),
                    SMALL_MODEL, segment_s=2.0)
        out[alpha] = pair_reg_value(res.model, res.pipeline, tiny_corpus.split("test"), snr, seed=0)
    assert out[2.0] < out[0.0]
