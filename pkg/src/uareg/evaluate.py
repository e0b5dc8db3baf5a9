"""Segment-level accuracy, confusion matrices, SNR robustness and alpha sweeps."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from uareg.autodiff import no_grad
from uareg.data import FeaturePipeline
from uareg.ingest import Manifest, ManifestEntry
from uareg.model import Model, ModelConfig
from uareg.training.loop import TrainConfig, train

TABLE_RANGES = [(5.0, 30.0), (-5.0, 20.0), (-15.0, 10.0)]
CLEAN_RANGE = (math.inf, math.inf)


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # rows true, columns predicted
    class_names: list[str]

    @classmethod
    def from_predictions(cls, y_true, y_pred, class_names) -> "ConfusionMatrix":
        k = len(class_names)
        counts = np.zeros((k, k), dtype=np.int64)
        np.add.at(counts, (np.asarray(y_true), np.asarray(y_pred)), 1)
        return cls(counts, list(class_names))

    @property
    def accuracy(self) -> float:
        total = self.counts.sum()
        return float(np.trace(self.counts) / total) if total else math.nan

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["true\\pred"] + self.class_names)
            for name, row in zip(self.class_names, self.counts):
                w.writerow([name] + row.tolist())

    def to_pgm(self, path, cell: int = 16) -> None:
        """Row-normalized heat map as binary greyscale PGM (dark = high)."""
        rows = self.counts.sum(axis=1, keepdims=True)
        frac = np.divide(self.counts, rows, out=np.zeros(self.counts.shape), where=rows > 0)
        img = (255 - np.round(255 * frac)).astype(np.uint8)
        img = np.kron(img, np.ones((cell, cell), dtype=np.uint8))
        with open(path, "wb") as fh:
            fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
            fh.write(img.tobytes())


@dataclass
class EvalResult:
    accuracy: float
    confusion: ConfusionMatrix
    predictions: np.ndarray


@dataclass
class SnrSweepResult:
    clean_accuracy: float
    accuracy: dict  # (lo, hi) -> accuracy

    def rows(self):
        yield ("clean", "", self.clean_accuracy)
        for (lo, hi), acc in self.accuracy.items():
            yield (lo, hi, acc)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["snr_lo_db", "snr_hi_db", "accuracy"])
            w.writerows(self.rows())


def _labels(entries, class_names):
    try:
        return np.array([class_names.index(e.label) for e in entries])
    except ValueError as exc:
        raise ValueError(f"class mismatch between model and manifest: {exc}") from exc


def _predict_entries(model: Model, xs_fn, n: int, batch: int) -> np.ndarray:
    preds = []
    model.eval()
    with no_grad():
        for s in range(0, n, batch):
            preds.append(model(xs_fn(s, min(n, s + batch))).data.argmax(axis=1))
    return np.concatenate(preds) if preds else np.zeros(0, dtype=np.int64)


def evaluate(model: Model, entries: Sequence[ManifestEntry], pipeline: FeaturePipeline,
             class_names: Sequence[str], batch: int = 64) -> EvalResult:
    """Argmax accuracy and confusion matrix over the given segments."""
    if not entries:
        raise ValueError("empty evaluation split")
    if model.cfg.n_classes != len(class_names):
        raise ValueError("class mismatch between checkpoint and manifest")
    y = _labels(entries, list(class_names))
    pred = _predict_entries(model, lambda a, b: pipeline.batch(entries[a:b], model.dtype),
                            len(entries), batch)
    cm = ConfusionMatrix.from_predictions(y, pred, class_names)
    return EvalResult(cm.accuracy, cm, pred)


def noisy_accuracy(model: Model, entries, pipeline: FeaturePipeline, class_names,
                   snr_range, rng: np.random.Generator, batch: int = 64) -> float:
    """Accuracy with each segment perturbed once at SNR ~ U(snr_range)."""
    lo, hi = snr_range
    if math.isinf(lo) and math.isinf(hi):
        return evaluate(model, entries, pipeline, class_names, batch).accuracy
    y = _labels(entries, list(class_names))
    snrs = rng.uniform(lo, hi, size=len(entries))
    pred = _predict_entries(
        model, lambda a, b: pipeline.noisy_batch(entries[a:b], snrs[a:b], rng, model.dtype),
        len(entries), batch)
    return float(np.mean(pred == y))


def snr_sweep(model: Model, entries, pipeline: FeaturePipeline, class_names,
              ranges=TABLE_RANGES, seed: int = 0, repeats: int = 1) -> SnrSweepResult:
    if not entries:
        raise ValueError("empty test split")
    clean = evaluate(model, entries, pipeline, class_names).accuracy
    out = {}
    for k, r in enumerate(ranges):
        accs = [noisy_accuracy(model, entries, pipeline, class_names, r,
                               np.random.default_rng([seed, k, rep]))
                for rep in range(repeats)]
        out[tuple(r)] = float(np.mean(accs))
    return SnrSweepResult(clean, out)


@dataclass
class AlphaRow:
    alpha: float
    test_accuracy: float
    val_accuracy: float
    best_epoch: int


def alpha_sweep(manifest: Manifest, feature, base_cfg: TrainConfig, model_cfg: ModelConfig,
                alphas=(0.0, 0.5, 1.0, 2.0), segment_s: float = 30.0,
                out_dir: str | Path | None = None) -> list[AlphaRow]:
    """Train one model per alpha with a shared seed; report test accuracy."""
    rows = []
    test = manifest.split("test")
    for a in alphas:
        sub = Path(out_dir) / f"alpha_{a:g}" if out_dir is not None else None
        res = train(manifest, feature, replace(base_cfg, alpha=float(a)), model_cfg, sub, segment_s)
        acc = evaluate(res.model, test, res.pipeline, res.class_names).accuracy if test else math.nan
        val = res.history[res.best_epoch - 1]["val_acc"]
        rows.append(AlphaRow(float(a), acc, val, res.best_epoch))
    if out_dir is not None:
        write_alpha_table(Path(out_dir) / "alpha_sweep.csv", rows, feature.kind)
    return rows


def write_alpha_table(path, rows: list[AlphaRow], feature_kind: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["alpha", f"{feature_kind}_test_acc", "val_acc", "best_epoch"])
        for r in rows:
            w.writerow([r.alpha, r.test_accuracy, r.val_accuracy, r.best_epoch])
