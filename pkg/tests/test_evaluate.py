import math

import numpy as np
import pytest

from uareg.autodiff import Tensor
from uareg.evaluate import (CLEAN_RANGE, ConfusionMatrix, alpha_sweep, evaluate, snr_sweep,
                            write_alpha_table)
from uareg.ingest import ManifestEntry
from uareg.model import ModelConfig

from conftest import SMALL_FEATURE, SMALL_MODEL, SMALL_TRAIN


class _Pipe:
    def batch(self, entries, dtype=np.float32):
        return np.array([[float(e.offset_s)] for e in entries], dtype=dtype)


class _Stub:
    """Predicts class ``offset_s`` (oracle) or a constant."""

    def __init__(self, k, constant=None):
        self.cfg = ModelConfig(n_classes=k, widths=[4], heads=1, attn_dim=4)
        self.dtype = np.float64
        self.constant = constant

    def eval(self):
        return self

    def __call__(self, x):
        k = self.cfg.n_classes
        cls = np.full(len(x), self.constant) if self.constant is not None else x[:, 0].astype(int)
        return Tensor(np.eye(k)[cls])


def _entries(k, per):
    names = [f"c{i}" for i in range(k)]
    return [ManifestEntry("x.wav", float(i), names[i], f"r{i}{j}", "test")
            for i in range(k) for j in range(per)], names


def test_perfect_and_constant_predictors():
    entries, names = _entries(3, 4)
    res = evaluate(_Stub(3), entries, _Pipe(), names)
    assert res.accuracy == 1.0
    assert np.array_equal(res.confusion.counts, 4 * np.eye(3, dtype=int))
    res = evaluate(_Stub(3, constant=1), entries, _Pipe(), names)
    assert abs(res.accuracy - 1 / 3) < 1e-15


def test_confusion_accounting(tmp_path):
    rng = np.random.default_rng(0)
    y, p = rng.integers(0, 4, 200), rng.integers(0, 4, 200)
    cm = ConfusionMatrix.from_predictions(y, p, list("abcd"))
    assert np.array_equal(cm.counts.sum(1), np.bincount(y, minlength=4))
    assert cm.accuracy == np.mean(y == p)
    cm.to_csv(tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "true\\pred,a,b,c,d"
    cm.to_pgm(tmp_path / "c.pgm")
    assert (tmp_path / "c.pgm").read_bytes().startswith(b"P5\n64 64\n255\n")


def test_evaluate_errors():
    entries, names = _entries(3, 1)
    with pytest.raises(ValueError, match="empty"):
        evaluate(_Stub(3), [], _Pipe(), names)
    with pytest.raises(ValueError, match="class mismatch"):
        evaluate(_Stub(2), entries, _Pipe(), names[:2])


def test_trace_identity_and_training_fit(tiny_trained, tiny_corpus):
    res, _ = tiny_trained
    for split in ("train", "test"):
        ev = evaluate(res.model, tiny_corpus.split(split), res.pipeline, res.class_names)
        assert ev.accuracy == np.trace(ev.confusion.counts) / ev.confusion.counts.sum()
    train_acc = evaluate(res.model, tiny_corpus.split("train"), res.pipeline, res.class_names)
    assert train_acc.accuracy >= 0.99


def test_snr_sweep_clean_sentinel_and_determinism(tiny_trained, tiny_corpus, tmp_path):
    res, _ = tiny_trained
    test = tiny_corpus.split("test")
    ranges = [CLEAN_RANGE, (5.0, 30.0), (-15.0, 10.0)]
    a = snr_sweep(res.model, test, res.pipeline, res.class_names, ranges, seed=3)
    b = snr_sweep(res.model, test, res.pipeline, res.class_names, ranges, seed=3)
    assert a.accuracy == b.accuracy
    assert a.accuracy[CLEAN_RANGE] == a.clean_accuracy
    assert all(0 <= v <= 1 for v in a.accuracy.values())
    a.to_csv(tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "snr_lo_db,snr_hi_db,accuracy"
    with pytest.raises(ValueError):
        snr_sweep(res.model, [], res.pipeline, res.class_names)


def test_alpha_sweep_single_alpha_equals_plain_train(tiny_corpus, tmp_path):
    from dataclasses import replace

    from uareg.training import train
    cfg = replace(SMALL_TRAIN, epochs=2, batch=16)
    rows = alpha_sweep(tiny_corpus, SMALL_FEATURE, cfg, SMALL_MODEL, [0.0], 2.0, tmp_path)
    plain = train(tiny_corpus, SMALL_FEATURE, replace(cfg, alpha=0.0), SMALL_MODEL, segment_s=2.0)
    acc = evaluate(plain.model, tiny_corpus.split("test"), plain.pipeline, plain.class_names).accuracy
    assert len(rows) == 1 and rows[0].test_accuracy == acc
    lines = (tmp_path / "alpha_sweep.csv").read_text().splitlines()
    assert lines[0] == "alpha,mel_test_acc,val_acc,best_epoch" and len(lines) == 2


def test_alpha_table_rows(tmp_path):
    from uareg.evaluate import AlphaRow
    rows = [AlphaRow(a, 0.5, 0.5, 1) for a in (0, 0.5, 1, 2)]
    write_alpha_table(tmp_path / "t.csv", rows, "cqt")
    assert len((tmp_path / "t.csv").read_text().splitlines()) == 5
