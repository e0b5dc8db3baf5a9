"""Binary feature files.

Layout: ``b"UASPEC1\\0"``, little-endian u32 rows, u32 cols, rows*cols
float32 row-major, then a UTF-8 JSON trailer with the feature metadata.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from uareg.dsp.spectral import Spectrogram

MAGIC = b"UASPEC1\0"


class FeatureFileError(ValueError):
    pass


def save(spec: Spectrogram, path: str | Path, config_hash: str = "") -> None:
    rows, cols = spec.values.shape
    trailer = {
        "feature_kind": spec.feature_kind,
        "record_id": spec.record_id,
        "offset_s": spec.offset_s,
        "frame_times_s": np.asarray(spec.frame_times_s, dtype=float).tolist(),
        "bin_freqs_hz": np.asarray(spec.bin_freqs_hz, dtype=float).tolist(),
        "config_hash": config_hash,
        **spec.meta,
    }
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", rows, cols))
        fh.write(np.ascontiguousarray(spec.values, dtype="<f4").tobytes())
        fh.write(json.dumps(trailer).encode("utf-8"))


def load(path: str | Path) -> Spectrogram:
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:8] != MAGIC:
        raise FeatureFileError(f"corrupt header: {path}")
    rows, cols = struct.unpack_from("<II", raw, 8)
    end = 16 + 4 * rows * cols
    if len(raw) < end:
        raise FeatureFileError(
            f"payload mismatch: header declares {rows}x{cols}, file holds {(len(raw) - 16) // 4} values")
    values = np.frombuffer(raw, dtype="<f4", count=rows * cols, offset=16).reshape(rows, cols)
    try:
        meta = json.loads(raw[end:].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FeatureFileError(f"payload mismatch: bad trailer in {path}") from exc
    times = np.asarray(meta.pop("frame_times_s"))
    freqs = np.asarray(meta.pop("bin_freqs_hz"))
    if times.size != rows or freqs.size != cols:
        raise FeatureFileError(f"payload mismatch: axis lengths disagree with {rows}x{cols}")
    return Spectrogram(values.astype(np.float32), times, freqs, meta.pop("feature_kind"),
                       meta.pop("record_id", ""), meta.pop("offset_s", 0.0), meta)
