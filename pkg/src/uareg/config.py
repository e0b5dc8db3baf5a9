"""Flat ``key = value`` run configuration.

Every key is optional; unknown keys are an error. Lists are
comma-separated, ranges and bands are ``lo:hi``. Keys:

  feature, band, n_filters, frame_len_s, frame_shift_s, window,
  octave_resolution, cqt_f_base, cqt_fps, real_part,
  segment_s, overlap_s, val_fraction, val_by_record,
  alpha, p_lmr, snr, lr, batch, weight_decay, epochs, beta1, beta2, eps,
  seed, mix_mode, kl_on_mixed, cache_noise, noise_domain,
  stem_channels, widths, blocks_per_stage, heads, attn_dim, time_len, full_widths
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path

from uareg.dsp.features import FeatureConfig
from uareg.dsp.spectral import BandConfig, FrameConfig
from uareg.model import FULL_WIDTHS, ModelConfig
from uareg.training.loop import TrainConfig

SEED_ENV = "UAREG_SEED"


class ConfigError(ValueError):
    pass


def _bool(v: str) -> bool:
    v = v.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def _range(v: str) -> tuple[float, float]:
    lo, hi = v.split(":")
    return float(lo), float(hi)


def _ints(v: str) -> list[int]:
    return [int(x) for x in v.split(",") if x.strip()]


PARSERS = {
    "feature": str, "band": _range, "n_filters": int, "frame_len_s": float,
    "frame_shift_s": float, "window": str, "octave_resolution": int, "cqt_f_base": float,
    "cqt_fps": float, "real_part": _bool,
    "segment_s": float, "overlap_s": float, "val_fraction": float, "val_by_record": _bool,
    "alpha": float, "p_lmr": float, "snr": _range, "lr": float, "batch": int,
    "weight_decay": float, "epochs": int, "beta1": float, "beta2": float, "eps": float,
    "seed": int, "mix_mode": str, "kl_on_mixed": _bool, "cache_noise": _bool,
    "noise_domain": str,
    "stem_channels": int, "widths": _ints, "blocks_per_stage": int, "heads": int,
    "attn_dim": int, "time_len": int, "full_widths": _bool,
}


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)

    def get(self, key, default=None):
        return self.values.get(key, default)

    def set(self, key: str, value) -> None:
        if key not in PARSERS:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(value, str):
            try:
                value = PARSERS[key](value)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {value!r}") from exc
        self.values[key] = value

    def update(self, overrides: dict) -> "RunConfig":
        for k, v in overrides.items():
            if v is not None:
                self.set(k, v)
        return self

    # -- component configs ----------------------------------------------------
    def feature(self) -> FeatureConfig:
        base = FeatureConfig()
        frame = FrameConfig(self.get("frame_len_s", base.frame.frame_len_s),
                            self.get("frame_shift_s", base.frame.frame_shift_s),
                            self.get("window", base.frame.window))
        band = self.get("band")
        return FeatureConfig(
            kind=self.get("feature", base.kind),
            band=BandConfig(*band) if band else base.band,
            frame=frame,
            n_filters=self.get("n_filters", base.n_filters),
            octave_resolution=self.get("octave_resolution", base.octave_resolution),
            cqt_f_base=self.get("cqt_f_base", base.cqt_f_base),
            cqt_fps=self.get("cqt_fps", base.cqt_fps),
            real_part=self.get("real_part", base.real_part),
        )

    def train(self) -> TrainConfig:
        base = TrainConfig()
        return TrainConfig(
            alpha=self.get("alpha", base.alpha), p_lmr=self.get("p_lmr", base.p_lmr),
            snr_range_db=self.get("snr", base.snr_range_db), lr=self.get("lr", base.lr),
            batch=self.get("batch", base.batch),
            weight_decay=self.get("weight_decay", base.weight_decay),
            epochs=self.get("epochs", base.epochs),
            betas=(self.get("beta1", base.betas[0]), self.get("beta2", base.betas[1])),
            eps=self.get("eps", base.eps), seed=self.seed(),
            mix_mode=self.get("mix_mode", base.mix_mode),
            kl_on_mixed=self.get("kl_on_mixed", base.kl_on_mixed),
            cache_noise=self.get("cache_noise", base.cache_noise),
            noise_domain=self.get("noise_domain", base.noise_domain),
        )

    def model(self, n_classes: int) -> ModelConfig:
        base = ModelConfig(n_classes=n_classes)
        widths = FULL_WIDTHS if self.get("full_widths") else self.get("widths", base.widths)
        return replace(base, stem_channels=self.get("stem_channels", base.stem_channels),
                       widths=list(widths),
                       blocks_per_stage=self.get("blocks_per_stage", base.blocks_per_stage),
                       heads=self.get("heads", base.heads),
                       attn_dim=self.get("attn_dim", base.attn_dim),
                       time_len=self.get("time_len", base.time_len))

    def seed(self) -> int:
        env = os.environ.get(SEED_ENV)
        if env is not None and env.strip():
            return int(env)
        return self.get("seed", 0)

    # -- text form ----------------------------------------------------------
    def dumps(self) -> str:
        lines = []
        for k in PARSERS:
            if k not in self.values:
                continue
            v = self.values[k]
            if k == "seed":
                v = self.seed()
            if isinstance(v, (tuple, list)) and k in ("band", "snr"):
                v = f"{v[0]:g}:{v[1]:g}"
            elif isinstance(v, (tuple, list)):
                v = ",".join(str(x) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"

    def resolved(self) -> "RunConfig":
        """Copy with every key filled from the component defaults."""
        f, t, m = self.feature(), self.train(), self.model(2)
        full = dict(
            feature=f.kind, band=(f.band.f_lo, f.band.f_hi), n_filters=f.n_filters,
            frame_len_s=f.frame.frame_len_s, frame_shift_s=f.frame.frame_shift_s,
            window=f.frame.window, octave_resolution=f.octave_resolution,
            cqt_f_base=f.cqt_f_base, cqt_fps=f.cqt_fps, real_part=f.real_part,
            segment_s=self.get("segment_s", 30.0), overlap_s=self.get("overlap_s", 15.0),
            val_fraction=self.get("val_fraction", 0.15),
            val_by_record=self.get("val_by_record", False),
            alpha=t.alpha, p_lmr=t.p_lmr, snr=t.snr_range_db, lr=t.lr, batch=t.batch,
            weight_decay=t.weight_decay, epochs=t.epochs, beta1=t.betas[0], beta2=t.betas[1],
            eps=t.eps, seed=t.seed, mix_mode=t.mix_mode, kl_on_mixed=t.kl_on_mixed,
            cache_noise=t.cache_noise, noise_domain=t.noise_domain,
            stem_channels=m.stem_channels, widths=m.widths,
            blocks_per_stage=m.blocks_per_stage, heads=m.heads, attn_dim=m.attn_dim,
            time_len=m.time_len, full_widths=bool(self.get("full_widths", False)),
        )
        return RunConfig(full)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.resolved().dumps(), encoding="utf-8")


def loads(text: str) -> RunConfig:
    cfg = RunConfig()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        cfg.set(key, value)
    return cfg


def load(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    return loads(Path(path).read_text(encoding="utf-8"))
