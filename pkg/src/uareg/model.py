"""Residual CNN with multi-head attention pooling over the final feature map."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from uareg.autodiff import (Tensor, batch_norm2d, conv2d, linear, max_pool2d, no_grad, relu,
                            scaled_dot_product_attention, softmax)
from uareg.autodiff.checkpoint import load_checkpoint, save_checkpoint

FULL_WIDTHS = [64, 128, 256, 512]


@dataclass
class ModelConfig:
    n_classes: int = 2
    stem_channels: int = 16
    widths: list[int] = field(default_factory=lambda: [16, 32, 64, 128])
    blocks_per_stage: int = 2
    heads: int = 4
    attn_dim: int = 64
    time_len: int = 384
    in_channels: int = 1

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValueError("n_classes must be >= 2")
        if not self.widths or any(w <= 0 for w in self.widths):
            raise ValueError("widths must be positive")
        if any(b < a for a, b in zip(self.widths, self.widths[1:])):
            raise ValueError("widths must be nondecreasing")
        if self.stem_channels <= 0 or self.blocks_per_stage < 1:
            raise ValueError("stem_channels and blocks_per_stage must be positive")
        if self.attn_dim % self.heads:
            raise ValueError("attn_dim must be divisible by heads")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        return cls(**known)


class Module:
    training = True

    def named_parameters(self, prefix: str = ""):
        for name, val in vars(self).items():
            if isinstance(val, Tensor) and val.requires_grad:
                yield prefix + name, val
            elif isinstance(val, Module):
                yield from val.named_parameters(f"{prefix}{name}.")
            elif isinstance(val, list):
                for i, m in enumerate(val):
                    if isinstance(m, Module):
                        yield from m.named_parameters(f"{prefix}{name}.{i}.")

    def named_buffers(self, prefix: str = ""):
        for name, val in vars(self).items():
            if isinstance(val, np.ndarray):
                yield prefix + name, val
            elif isinstance(val, Module):
                yield from val.named_buffers(f"{prefix}{name}.")
            elif isinstance(val, list):
                for i, m in enumerate(val):
                    if isinstance(m, Module):
                        yield from m.named_buffers(f"{prefix}{name}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def modules(self):
        yield self
        for val in vars(self).values():
            if isinstance(val, Module):
                yield from val.modules()
            elif isinstance(val, list):
                for m in val:
                    if isinstance(m, Module):
                        yield from m.modules()

    def train(self, mode: bool = True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {k: p.data for k, p in self.named_parameters()}
        out.update(dict(self.named_buffers()))
        return out

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        mine = dict(self.named_parameters())
        bufs = dict(self.named_buffers())
        missing = (set(mine) | set(bufs)) - set(state)
        if missing:
            raise KeyError(f"missing entries in state: {sorted(missing)[:5]}")
        for k, p in mine.items():
            if p.data.shape != state[k].shape:
                raise ValueError(f"{k}: shape {state[k].shape} != {p.data.shape}")
            p.data[...] = state[k]
        for k, b in bufs.items():
            b[...] = state[k]


def _param(arr, dtype) -> Tensor:
    return Tensor(np.asarray(arr, dtype=dtype), requires_grad=True)


class Conv(Module):
    def __init__(self, cin, cout, k, stride, pad, rng, dtype):
        fan_in = cin * k * k
        self.weight = _param(rng.normal(0.0, math.sqrt(2.0 / fan_in), (cout, cin, k, k)), dtype)
        self.stride, self.pad = stride, pad

    def __call__(self, x):
        return conv2d(x, self.weight, None, self.stride, self.pad)


class BatchNorm(Module):
    def __init__(self, c, dtype, momentum=0.1):
        self.gamma = _param(np.ones(c), dtype)
        self.beta = _param(np.zeros(c), dtype)
        self.running_mean = np.zeros(c, dtype=dtype)
        self.running_var = np.ones(c, dtype=dtype)
        self.momentum = momentum

    def __call__(self, x):
        return batch_norm2d(x, self.gamma, self.beta, self.running_mean, self.running_var,
                            self.training, self.momentum)


class BasicBlock(Module):
    def __init__(self, cin, cout, stride, rng, dtype):
        self.conv1 = Conv(cin, cout, 3, stride, 1, rng, dtype)
        self.bn1 = BatchNorm(cout, dtype)
        self.conv2 = Conv(cout, cout, 3, 1, 1, rng, dtype)
        self.bn2 = BatchNorm(cout, dtype)
        self.proj = self.proj_bn = None
        if stride != 1 or cin != cout:
            self.proj = Conv(cin, cout, 1, stride, 0, rng, dtype)
            self.proj_bn = BatchNorm(cout, dtype)

    def __call__(self, x):
        h = relu(self.bn1(self.conv1(x)))
        h = self.bn2(self.conv2(h))
        skip = x if self.proj is None else self.proj_bn(self.proj(x))
        return relu(h + skip)


class AttentionPool(Module):
    """Learned-query multi-head attention over flattened spatial positions."""

    def __init__(self, cin, dim, heads, rng, dtype):
        s = 1.0 / math.sqrt(cin)
        self.query = _param(rng.normal(0.0, 1.0, (1, 1, dim)), dtype)
        self.w_key = _param(rng.uniform(-s, s, (cin, dim)), dtype)
        self.w_value = _param(rng.uniform(-s, s, (cin, dim)), dtype)
        self.heads = heads

    def __call__(self, fmap, return_weights=False):
        b, c, h, w = fmap.shape
        tokens = fmap.reshape(b, c, h * w).transpose(0, 2, 1)
        keys = tokens @ self.w_key
        values = tokens @ self.w_value
        out, weights = scaled_dot_product_attention(self.query, keys, values, self.heads,
                                                    return_weights=True)
        out = out.reshape(b, -1)
        return (out, weights) if return_weights else out


class Model(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator | int | None = 0,
                 dtype=np.float32, freq_bins: int | None = None):
        rng = np.random.default_rng(rng)
        self.cfg = cfg
        # tall inputs get an extra frequency stride in the stem
        fstride = 4 if freq_bins is not None and freq_bins > 512 else 2
        self.freq_bins = freq_bins
        self.stem = Conv(cfg.in_channels, cfg.stem_channels, 7, (2, fstride), 3, rng, dtype)
        self.stem_bn = BatchNorm(cfg.stem_channels, dtype)
        self.blocks = []
        cin = cfg.stem_channels
        for s, width in enumerate(cfg.widths):
            for i in range(cfg.blocks_per_stage):
                stride = 2 if s > 0 and i == 0 else 1
                self.blocks.append(BasicBlock(cin, width, stride, rng, dtype))
                cin = width
        self.pool = AttentionPool(cin, cfg.attn_dim, cfg.heads, rng, dtype)
        s = 1.0 / math.sqrt(cfg.attn_dim)
        self.fc_weight = _param(rng.uniform(-s, s, (cfg.n_classes, cfg.attn_dim)), dtype)
        self.fc_bias = _param(np.zeros(cfg.n_classes), dtype)

    @property
    def dtype(self):
        return self.fc_weight.data.dtype

    def features(self, x: Tensor) -> Tensor:
        h = relu(self.stem_bn(self.stem(x)))
        h = max_pool2d(h, 3, 2, 1)
        for block in self.blocks:
            h = block(h)
        return h

    def __call__(self, x) -> Tensor:
        if not isinstance(x, Tensor):
            x = Tensor(np.asarray(x, dtype=self.dtype))
        if x.ndim == 3:
            x = x.reshape(x.shape[0], 1, x.shape[1], x.shape[2])
        return linear(self.pool(self.features(x)), self.fc_weight, self.fc_bias)

    def attention_weights(self, x) -> np.ndarray:
        x = Tensor(np.asarray(x, dtype=self.dtype))
        if x.ndim == 3:
            x = x.reshape(x.shape[0], 1, x.shape[1], x.shape[2])
        with no_grad():
            _, w = self.pool(self.features(x), return_weights=True)
        return w.data

    def n_params(self) -> int:
        return sum(p.size for p in self.parameters())

    def save(self, path, meta: dict | None = None) -> None:
        trailer = {"model": self.cfg.to_dict(), "freq_bins": self.freq_bins, **(meta or {})}
        save_checkpoint(path, self.state_dict(), trailer)

    @classmethod
    def load(cls, path, dtype=np.float32) -> tuple["Model", dict]:
        state, meta = load_checkpoint(path)
        model = cls(ModelConfig.from_dict(meta["model"]), 0, dtype, meta.get("freq_bins"))
        model.load_state_dict(state)
        return model.eval(), meta


def build_model(cfg: ModelConfig, rng=0, dtype=np.float32, freq_bins: int | None = None) -> Model:
    return Model(cfg, rng, dtype, freq_bins)


def prepare_input(values: np.ndarray, time_len: int | None, mean: float = 0.0,
                  std: float = 1.0) -> np.ndarray:
    """Standardize and center-crop or zero-pad the time axis to ``time_len``."""
    x = (np.asarray(values, dtype=np.float64) - mean) / std
    if time_len is None or x.shape[0] == time_len:
        return x
    t = x.shape[0]
    if t > time_len:
        start = (t - time_len) // 2
        return x[start:start + time_len]
    out = np.zeros((time_len,) + x.shape[1:])
    start = (time_len - t) // 2
    out[start:start + t] = x
    return out


def predict(model: Model, batch) -> np.ndarray:
    """Logits for a (B, T, F) array of prepared spectrograms, without a graph."""
    with no_grad():
        return model(batch).data


def predict_proba(model: Model, batch) -> np.ndarray:
    with no_grad():
        return softmax(model(batch)).data
