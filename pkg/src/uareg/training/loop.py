"""Training loop: LMR batch policy, noisy counterparts and symmetric-KL regularization."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from uareg.augment import MixedBatch, batch_policy, lmr_mix
from uareg.autodiff import Tensor, no_grad
from uareg.data import FeaturePipeline
from uareg.dsp.features import FeatureConfig
from uareg.ingest import Manifest
from uareg.model import Model, ModelConfig
from uareg.training.losses import MIXED, NOISY, RAW, cross_entropy, smooth_reg, total_loss
from uareg.training.optim import AdamW

log = logging.getLogger(__name__)

METRIC_FIELDS = ["epoch", "train_loss", "ce", "reg", "val_acc", "val_loss"]


@dataclass
class TrainConfig:
    alpha: float = 0.5
    p_lmr: float = 0.5
    snr_range_db: tuple[float, float] = (5.0, 30.0)
    lr: float = 5e-4
    batch: int = 64
    weight_decay: float = 1e-5
    epochs: int = 100
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    seed: int = 0
    mix_mode: str = "lmr"  # or "mixup" for the linear-mixing baseline
    kl_on_mixed: bool = False
    cache_noise: bool = False
    noise_domain: str = "waveform"

    def __post_init__(self):
        self.snr_range_db = tuple(float(s) for s in self.snr_range_db)
        self.betas = tuple(float(b) for b in self.betas)
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if not 0.0 <= self.p_lmr <= 1.0:
            raise ValueError("p_lmr must lie in [0, 1]")
        if self.snr_range_db[0] > self.snr_range_db[1]:
            raise ValueError("snr range must satisfy lo <= hi")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.batch < 1 or self.epochs < 1:
            raise ValueError("batch and epochs must be positive")
        if self.mix_mode not in ("lmr", "mixup"):
            raise ValueError(f"unknown mix_mode {self.mix_mode!r}")
        if self.noise_domain not in ("waveform", "feature"):
            raise ValueError(f"unknown noise_domain {self.noise_domain!r}")


@dataclass
class TrainResult:
    model: Model
    history: list[dict]
    pipeline: FeaturePipeline
    class_names: list[str]
    best_epoch: int
    meta: dict = field(default_factory=dict)

    @property
    def losses(self) -> list[float]:
        return [h["train_loss"] for h in self.history]


def _rngs(seed: int):
    init, shuffle, policy, noise = np.random.SeedSequence(seed).spawn(4)
    return (np.random.default_rng(init), np.random.default_rng(shuffle),
            np.random.default_rng(policy), np.random.default_rng(noise))


def _tagged(t: Tensor, tag: str) -> Tensor:
    t.tag = tag
    return t


def _remix(x: np.ndarray, mix: MixedBatch) -> np.ndarray:
    """Apply a batch's recorded LMR pairing and patches to another batch."""
    out = np.empty_like(x)
    for i, (j, patch) in enumerate(zip(mix.partners, mix.patches)):
        out[i] = lmr_mix(x[i], x[j], patch).values
    return out


def evaluate_loss_acc(model: Model, pipeline: FeaturePipeline, entries, labels,
                      batch: int = 64) -> tuple[float, float]:
    model.eval()
    correct, loss_sum = 0, 0.0
    with no_grad():
        for s in range(0, len(entries), batch):
            x = pipeline.batch(entries[s:s + batch], model.dtype)
            y = labels[s:s + batch]
            z = model(x)
            loss_sum += cross_entropy(z, y).item() * len(y)
            correct += int((z.data.argmax(axis=1) == y).sum())
    return correct / len(entries), loss_sum / len(entries)


def train(manifest: Manifest, feature: FeatureConfig, train_cfg: TrainConfig,
          model_cfg: ModelConfig, out_dir: str | Path | None = None,
          segment_s: float = 30.0, pipeline: FeaturePipeline | None = None) -> TrainResult:
    """Train one model; keeps the best-validation weights.

    Each batch: draw the LMR coin, build noisy counterparts when
    ``alpha > 0`` (fresh noise each epoch unless cached), forward raw,
    mixed and noisy inputs, backpropagate the combined loss, take an
    AdamW step.
    """
    cfg = train_cfg
    train_entries = manifest.split("train")
    if not train_entries:
        raise ValueError("empty training split")
    val_entries = manifest.split("val")
    names = manifest.class_names
    if model_cfg.n_classes != len(names):
        raise ValueError(f"model has {model_cfg.n_classes} classes, manifest {len(names)}")
    y_train = np.array([names.index(e.label) for e in train_entries])
    y_val = np.array([names.index(e.label) for e in val_entries])

    if pipeline is None:
        pipeline = FeaturePipeline(feature, model_cfg.time_len, segment_s, cfg.noise_domain)
    pipeline.fit_normalizer(train_entries)
    init_rng, shuffle_rng, policy_rng, noise_rng = _rngs(cfg.seed)
    model = Model(model_cfg, init_rng, freq_bins=pipeline.freq_bins(train_entries[0]))
    named = list(model.named_parameters())
    opt = AdamW([p for _, p in named], cfg.lr, cfg.weight_decay, cfg.betas, cfg.eps,
                names=[n for n, _ in named])
    x_all = pipeline.batch(train_entries, model.dtype)
    noisy_cache = None

    history: list[dict] = []
    best_key, best_state, best_epoch = None, None, 0
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    lo, hi = cfg.snr_range_db
    for epoch in range(1, cfg.epochs + 1):
        model.train()
        order = shuffle_rng.permutation(len(train_entries))
        if cfg.alpha > 0 and (noisy_cache is None or not cfg.cache_noise):
            snrs = noise_rng.uniform(lo, hi, size=len(train_entries))
            noisy_cache = pipeline.noisy_batch(train_entries, snrs, noise_rng, model.dtype)
        sums = {"train_loss": 0.0, "ce": 0.0, "reg": 0.0}
        for s in range(0, len(order), cfg.batch):
            idx = order[s:s + cfg.batch]
            x, y = x_all[idx], y_train[idx]
            x_in, mix = batch_policy(x, y, cfg.p_lmr, policy_rng, cfg.mix_mode)
            z_noisy = z_raw = mixed = reg_pair = None
            if mix is not None:
                z_mix = _tagged(model(x_in), MIXED)
                mixed = (z_mix, mix.labels_i, mix.labels_j, mix.lam)
                if cfg.alpha > 0:
                    if cfg.kl_on_mixed and mix.patches:
                        z_noisy = _tagged(model(_remix(noisy_cache[idx], mix)), NOISY)
                        reg_pair = (z_mix, z_noisy)
                    else:
                        z_raw = _tagged(model(x), RAW)
                        z_noisy = _tagged(model(noisy_cache[idx]), NOISY)
            else:
                z_raw = _tagged(model(x), RAW)
                if cfg.alpha > 0:
                    z_noisy = _tagged(model(noisy_cache[idx]), NOISY)
            loss, main, reg = total_loss(z_raw, y, cfg.alpha, z_noisy, mixed, reg_pair)
            opt.zero_grad()
            loss.backward()
            opt.step()
            n = len(idx)
            sums["train_loss"] += loss.item() * n
            sums["ce"] += main.item() * n
            sums["reg"] += (reg.item() if reg is not None else 0.0) * n
        row = {"epoch": epoch, **{k: v / len(order) for k, v in sums.items()}}
        if val_entries:
            row["val_acc"], row["val_loss"] = evaluate_loss_acc(model, pipeline, val_entries, y_val)
        else:
            row["val_acc"], row["val_loss"] = math.nan, math.nan
        history.append(row)
        log.info("epoch %d loss %.4f val_acc %.4f", epoch, row["train_loss"], row["val_acc"])
        key = (row["val_acc"], -row["val_loss"]) if val_entries else (epoch, 0.0)
        if best_key is None or key > best_key:
            best_key, best_epoch = key, epoch
            best_state = {k: v.copy() for k, v in model.state_dict().items()}

    model.load_state_dict(best_state)
    model.eval()
    meta = {
        "class_names": names,
        "feature": feature_to_dict(feature),
        "norm": [pipeline.mean, pipeline.std],
        "segment_s": pipeline.segment_s,
        "train": asdict(cfg),
        "best_epoch": best_epoch,
    }
    if out is not None:
        write_metrics(out / "metrics.csv", history)
        model.save(out / "best.ckpt", meta)
    return TrainResult(model, history, pipeline, names, best_epoch, meta)


def write_metrics(path, history) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=METRIC_FIELDS, extrasaction="ignore")
        w.writeheader()
        for row in history:
            w.writerow(row)


def feature_to_dict(f: FeatureConfig) -> dict:
    d = asdict(f)
    d["band"] = [f.band.f_lo, f.band.f_hi]
    return d


def feature_from_dict(d: dict) -> FeatureConfig:
    from uareg.dsp.spectral import BandConfig, FrameConfig
    d = dict(d)
    d["band"] = BandConfig(*d["band"])
    d["frame"] = FrameConfig(**d["frame"])
    return FeatureConfig(**d)


def pair_reg_value(model: Model, pipeline: FeaturePipeline, entries, snr_range, seed: int = 0,
                   batch: int = 64) -> float:
    """Mean symmetric KL between eval-mode predictions on raw and noisy inputs."""
    rng = np.random.default_rng(seed)
    model.eval()
    total = 0.0
    with no_grad():
        for s in range(0, len(entries), batch):
            chunk = entries[s:s + batch]
            snrs = rng.uniform(*snr_range, size=len(chunk))
            z = model(pipeline.batch(chunk, model.dtype))
            zt = model(pipeline.noisy_batch(chunk, snrs, rng, model.dtype))
            total += smooth_reg(z, zt).item() * len(chunk)
    return total / len(entries)
