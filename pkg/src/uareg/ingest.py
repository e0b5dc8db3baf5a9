"""Audio ingestion: WAV reading, fixed-length segmentation and split manifests."""

from __future__ import annotations

import json
import logging
import math
import re
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.io import wavfile

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
WILDCARD = "*"


class AudioReadError(ValueError):
    pass


class SplitError(ValueError):
    pass


@dataclass
class AudioSignal:
    samples: np.ndarray
    sample_rate: int
    record_id: str

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.samples.size == 0:
            raise AudioReadError("zero-length audio")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("non-finite samples")

    @property
    def duration_s(self) -> float:
        return self.samples.shape[0] / self.sample_rate


@dataclass
class AudioSegment:
    samples: np.ndarray
    sample_rate: int
    record_id: str
    offset_s: float
    duration_s: float


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    offset_s: float
    label: str
    record_id: str
    split: str
    duration_s: float | None = None

    def to_json(self) -> str:
        d = {"path": self.path, "offset_s": self.offset_s, "label": self.label,
             "record_id": self.record_id, "split": self.split}
        if self.duration_s is not None:
            d["duration_s"] = self.duration_s
        return json.dumps(d, ensure_ascii=False)


@dataclass
class Manifest:
    entries: list[ManifestEntry]
    class_names: list[str]
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        known = set(self.class_names)
        for e in self.entries:
            if e.label not in known:
                raise ValueError(f"label {e.label!r} not in class_names")
            if e.split not in SPLITS:
                raise ValueError(f"bad split {e.split!r}")

    def split(self, name: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == name]

    def label_index(self, label: str) -> int:
        return self.class_names.index(label)

    def counts(self) -> dict[str, int]:
        return {s: sum(e.split == s for e in self.entries) for s in SPLITS}

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for e in self.entries:
                fh.write(e.to_json() + "\n")

    @classmethod
    def load(cls, path: str | Path, class_names: Sequence[str] | None = None) -> "Manifest":
        entries = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    d = json.loads(line)
                    entries.append(ManifestEntry(
                        path=d["path"], offset_s=float(d["offset_s"]), label=d["label"],
                        record_id=str(d["record_id"]), split=d["split"],
                        duration_s=d.get("duration_s")))
                except (KeyError, json.JSONDecodeError) as exc:
                    raise ValueError(f"{path}:{lineno}: bad manifest line ({exc})") from exc
        if class_names is None:
            class_names = sorted({e.label for e in entries})
        return cls(entries, list(class_names))


# -- audio ------------------------------------------------------------------

def _normalize_pcm(data: np.ndarray) -> np.ndarray:
    if data.dtype == np.uint8:
        return (data.astype(np.float64) - 128.0) / 128.0
    if data.dtype == np.int16:
        return data.astype(np.float64) / 32768.0
    if data.dtype == np.int32:
        # scipy left-justifies 24-bit PCM into int32
        return data.astype(np.float64) / 2147483648.0
    if data.dtype in (np.float32, np.float64):
        return data.astype(np.float64)
    raise AudioReadError(f"unsupported codec: sample dtype {data.dtype}")


def load_wav(path: str | Path) -> AudioSignal:
    """Read a PCM/float WAV file as a mono signal in [-1, 1].

    Multichannel audio is averaged across channels.
    """
    path = Path(path)
    if not path.is_file() or path.stat().st_size == 0:
        raise AudioReadError(f"unreadable file: {path}")
    try:
        sr, data = wavfile.read(path)
    except ValueError as exc:
        msg = str(exc)
        if "format" in msg.lower() or "not understood" in msg.lower():
            raise AudioReadError(f"unsupported codec: {path} ({msg})") from exc
        raise AudioReadError(f"unreadable file: {path} ({msg})") from exc
    except (OSError, EOFError) as exc:
        raise AudioReadError(f"unreadable file: {path} ({exc})") from exc
    x = _normalize_pcm(np.asarray(data))
    if x.ndim == 2:
        x = x.mean(axis=1)
    if x.size == 0:
        raise AudioReadError(f"zero-length audio: {path}")
    return AudioSignal(x, int(sr), path.stem)


def write_wav(path: str | Path, samples: np.ndarray, sample_rate: int) -> None:
    """Write float samples as 32-bit float WAV (lossless for the pipeline)."""
    wavfile.write(path, int(sample_rate), np.asarray(samples, dtype=np.float32))


def wav_duration(path: str | Path) -> tuple[float, int]:
    """Duration in seconds and sample rate, reading only what scipy needs."""
    sr, data = wavfile.read(path, mmap=True)
    return data.shape[0] / sr, int(sr)


# -- segmentation -------------------------------------------------------------

def n_windows(total: float, length: float, hop: float) -> int:
    """floor((total - length) / hop) + 1, or 0 when nothing fits.

    A small slack absorbs float error so exact fits are not lost.
    """
    if total + 1e-9 < length:
        return 0
    return int(math.floor((total - length) / hop + 1e-9)) + 1


def segment(signal: AudioSignal, seg_len_s: float = 30.0, overlap_s: float = 15.0) -> list[AudioSegment]:
    if not seg_len_s > overlap_s >= 0:
        raise ValueError("need seg_len_s > overlap_s >= 0")
    sr = signal.sample_rate
    hop_s = seg_len_s - overlap_s
    seg_n = int(round(seg_len_s * sr))
    count = n_windows(signal.samples.shape[0], seg_n, hop_s * sr)
    out = []
    for i in range(count):
        start = int(math.floor(i * hop_s * sr + 1e-9))
        out.append(AudioSegment(
            samples=signal.samples[start:start + seg_n],
            sample_rate=sr,
            record_id=signal.record_id,
            offset_s=i * hop_s,
            duration_s=seg_len_s,
        ))
    return out


def segment_offsets(duration_s: float, seg_len_s: float, overlap_s: float) -> list[float]:
    hop = seg_len_s - overlap_s
    return [i * hop for i in range(n_windows(duration_s, seg_len_s, hop))]


def read_segment(path: str | Path, offset_s: float, duration_s: float) -> AudioSegment:
    sig = load_wav(path)
    sr = sig.sample_rate
    start = int(math.floor(offset_s * sr + 1e-9))
    n = int(round(duration_s * sr))
    if start + n > sig.samples.shape[0]:
        raise ValueError(f"segment [{offset_s}, {offset_s + duration_s}) s exceeds {path}")
    return AudioSegment(sig.samples[start:start + n], sr, sig.record_id, offset_s, duration_s)


# -- split specs and manifests ------------------------------------------------

def _reject_conflicts(pairs):
    out = OrderedDict()
    for key, value in pairs:
        if key in out and out[key] != value:
            raise SplitError(f"record {key!r} assigned to both {out[key]!r} and {value!r}")
        out[key] = value
    return out


def load_split_spec(path: str | Path) -> dict[str, str]:
    """Load a record_id -> "train"|"test" JSON mapping.

    The key ``"*"`` sets the split for records not listed explicitly.
    A record listed twice with different splits is a hard error.
    """
    with open(path, encoding="utf-8") as fh:
        spec = json.load(fh, object_pairs_hook=_reject_conflicts)
    return check_split_spec(spec)


def check_split_spec(spec: Mapping[str, str]) -> dict[str, str]:
    spec = {str(k): v for k, v in spec.items()}
    for k, v in spec.items():
        if v not in ("train", "test"):
            raise SplitError(f"record {k!r}: split must be 'train' or 'test', got {v!r}")
    return spec


_LEADING_INT = re.compile(r"^0*(\d+)")


def resolve_record(stem: str, label: str, spec: Mapping[str, str]) -> str | None:
    """Find the split_spec key for a file stem.

    Tries ``label/stem``, then ``stem``, then the stem's leading integer
    without zero padding (ShipsEar files are named ``<id>__<date>_<name>``).
    """
    candidates = [f"{label}/{stem}", stem]
    m = _LEADING_INT.match(stem)
    if m:
        candidates += [f"{label}/{m.group(1)}", m.group(1)]
    for c in candidates:
        if c in spec:
            return c
    return None


def _assign_validation(entries: list[ManifestEntry], val_fraction: float, seed: int,
                       by_record: bool) -> list[ManifestEntry]:
    train = [i for i, e in enumerate(entries) if e.split == "train"]
    n_val = int(round(val_fraction * len(train)))
    if n_val == 0:
        return entries
    rng = np.random.default_rng(seed)
    out = list(entries)
    if by_record:
        records = sorted({entries[i].record_id for i in train})
        rng.shuffle(records)
        chosen, taken = set(), 0
        for r in records:
            if taken >= n_val:
                break
            chosen.add(r)
            taken += sum(entries[i].record_id == r for i in train)
        pick = [i for i in train if entries[i].record_id in chosen]
    else:
        pick = rng.choice(np.asarray(train), size=n_val, replace=False).tolist()
    for i in pick:
        e = out[i]
        out[i] = ManifestEntry(e.path, e.offset_s, e.label, e.record_id, "val", e.duration_s)
    return out


def build_manifest(labeled_dirs: Mapping[str, str | Path] | Iterable[str | Path],
                   split_spec: Mapping[str, str],
                   val_fraction: float = 0.15,
                   seed: int = 0,
                   seg_len_s: float = 30.0,
                   overlap_s: float = 15.0,
                   val_by_record: bool = False) -> Manifest:
    """Segment every WAV under the labeled directories and assign splits.

    ``labeled_dirs`` maps class name to directory, or is a list of
    directories named after their class. Records absent from the split
    spec (and with no ``"*"`` default) are skipped and reported in
    ``Manifest.warnings``.
    """
    if not isinstance(labeled_dirs, Mapping):
        labeled_dirs = {Path(d).name: d for d in labeled_dirs}
    spec = check_split_spec(split_spec)
    class_names = sorted(labeled_dirs)
    entries: list[ManifestEntry] = []
    warnings: list[str] = []
    seen: dict[str, str] = {}
    for label in class_names:
        for wav in sorted(Path(labeled_dirs[label]).glob("*.wav")):
            key = resolve_record(wav.stem, label, spec)
            if key is None:
                if WILDCARD not in spec:
                    warnings.append(f"record {wav.stem!r} ({label}) absent from split_spec")
                    continue
                key, split = f"{label}/{wav.stem}", spec[WILDCARD]
            else:
                split = spec[key]
            if seen.get(key, split) != split:
                raise SplitError(f"record {key!r} in both train and test")
            seen[key] = split
            duration, _ = wav_duration(wav)
            for off in segment_offsets(duration, seg_len_s, overlap_s):
                entries.append(ManifestEntry(str(wav), off, label, key, split, seg_len_s))
    for w in warnings:
        log.warning(w)
    entries = _assign_validation(entries, val_fraction, seed, val_by_record)
    return Manifest(entries, class_names, warnings)


def validate_split(manifest: Manifest) -> list[str]:
    """Record ids present in both train/val and test. Empty means valid."""
    fit = {e.record_id for e in manifest.entries if e.split in ("train", "val")}
    test = {e.record_id for e in manifest.entries if e.split == "test"}
    return sorted(fit & test)


# -- bundled benchmark splits -------------------------------------------------

_DATA = Path(__file__).parent / "data"


def bundled_split_spec(dataset: str) -> dict[str, str]:
    """Published track-level train/test split ("shipsear" or "deepship")."""
    path = _DATA / f"{dataset.lower()}_split.json"
    if not path.exists():
        raise KeyError(f"no bundled split for {dataset!r}")
    return load_split_spec(path)


def bundled_manifest(dataset: str) -> Manifest:
    """Record-level manifest of the bundled split (one entry per listed record)."""
    path = _DATA / f"{dataset.lower()}_records.jsonl"
    return Manifest.load(path)
