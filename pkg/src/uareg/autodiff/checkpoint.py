"""Named-parameter checkpoint files.

Layout: ``b"UAMODEL1"``, u32 parameter count, then per parameter a u32
name length, UTF-8 name, u32 rank, rank u32 dims and a float32 payload;
everything after the last payload is a UTF-8 JSON trailer. Integers are
little-endian.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"UAMODEL1"


class CheckpointError(ValueError):
    pass


def save_checkpoint(path: str | Path, params: Mapping[str, np.ndarray], meta: dict | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(params)))
        for name, arr in params.items():
            arr = np.asarray(arr)
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
        fh.write(json.dumps(meta or {}).encode("utf-8"))


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"not a model checkpoint: {path}")
    try:
        (count,) = struct.unpack_from("<I", raw, 8)
        pos = 12
        params = {}
        for _ in range(count):
            (n,) = struct.unpack_from("<I", raw, pos)
            name = raw[pos + 4:pos + 4 + n].decode("utf-8")
            pos += 4 + n
            (rank,) = struct.unpack_from("<I", raw, pos)
            dims = struct.unpack_from(f"<{rank}I", raw, pos + 4)
            pos += 4 + 4 * rank
            size = int(np.prod(dims)) if rank else 1
            if pos + 4 * size > len(raw):
                raise CheckpointError(f"truncated payload for {name!r}")
            params[name] = np.frombuffer(raw, "<f4", size, pos).reshape(dims).copy()
            pos += 4 * size
        meta = json.loads(raw[pos:].decode("utf-8")) if pos < len(raw) else {}
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint {path}: {exc}") from exc
    return params, meta
