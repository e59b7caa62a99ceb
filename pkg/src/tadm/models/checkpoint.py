"""TADM1 checkpoint serialization.

Layout: magic bytes "TADM1", a 32-bit little-endian tensor count, then per
tensor: 16-bit name length, UTF-8 name, 8-bit rank, rank 32-bit dims, and
the raw 32-bit little-endian IEEE-754 data.  Tensors are written in sorted
name order so the file bytes are a pure function of the parameter values.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from ..errors import CheckpointError
from ..numerics import Tensor

MAGIC = b"TADM1"


def save_checkpoint(path: str, params: dict[str, Tensor]) -> None:
    chunks = [MAGIC, struct.pack("<I", len(params))]
    for name in sorted(params):
        data = params[name].data
        enc = name.encode("utf-8")
        if len(enc) > 0xFFFF:
            raise CheckpointError(f"parameter name too long: {name[:40]}...")
        if data.ndim > 0xFF:
            raise CheckpointError(f"parameter rank too large: {name}")
        chunks.append(struct.pack("<H", len(enc)))
        chunks.append(enc)
        chunks.append(struct.pack("<B", data.ndim))
        chunks.append(struct.pack(f"<{data.ndim}I", *data.shape))
        chunks.append(np.ascontiguousarray(data, dtype="<f4").tobytes())
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(b"".join(chunks))
    os.replace(tmp, path)


def load_checkpoint(path: str) -> dict[str, np.ndarray]:
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    if blob[:5] != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a TADM1 checkpoint")
    pos = 5
    try:
        (count,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        out: dict[str, np.ndarray] = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", blob, pos)
            pos += 2
            name = blob[pos:pos + nlen].decode("utf-8")
            pos += nlen
            (rank,) = struct.unpack_from("<B", blob, pos)
            pos += 1
            shape = struct.unpack_from(f"<{rank}I", blob, pos)
            pos += 4 * rank
            n = int(np.prod(shape, dtype=np.int64)) if rank else 1
            arr = np.frombuffer(blob, dtype="<f4", count=n, offset=pos)
            pos += 4 * n
            out[name] = arr.reshape(shape).astype(np.float32)
    except (struct.error, UnicodeDecodeError, ValueError) as e:
        raise CheckpointError(f"{path}: truncated or corrupt checkpoint ({e})") from e
    if pos != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - pos} trailing bytes")
    return out


def load_into(params: dict[str, Tensor], loaded: dict[str, np.ndarray],
              prefix: str = "") -> None:
    """Copy loaded arrays into live tensors; names and shapes must match.

    With a prefix, only that parameter group is loaded (e.g. "encoder.").
    """
    want = {k: v for k, v in params.items() if k.startswith(prefix)}
    have = {k: v for k, v in loaded.items() if k.startswith(prefix)}
    missing = sorted(set(want) - set(have))
    extra = sorted(set(have) - set(want))
    if missing or extra:
        raise CheckpointError(
            f"checkpoint does not match model: missing {missing[:3]}, unexpected {extra[:3]}")
    for name, t in want.items():
        arr = have[name]
        if arr.shape != t.data.shape:
            raise CheckpointError(
                f"shape mismatch for {name}: checkpoint {arr.shape} vs model {t.data.shape}")
        t.data[...] = arr
