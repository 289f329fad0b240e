"""Parameter checkpoint files.

Little-endian binary layout:

    magic  b"NBLB1"
    per parameter, repeated to EOF:
        u32   name length in bytes
        ...   name, utf-8
        u32   rank
        u32 * rank   extents
        f64 * prod(extents)   payload, row-major

Round-trips are bit-exact; tests compare raw float bits.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .tensor import Tensor

__all__ = ["save_checkpoint", "load_checkpoint", "MAGIC"]

MAGIC = b"NBLB1"


def save_checkpoint(path, params: dict[str, Tensor | np.ndarray]) -> None:
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        for name, p in params.items():
            # note: ascontiguousarray would promote 0-d to 1-d and break rank
            arr = np.asarray(p.data if isinstance(p, Tensor) else p, dtype="<f8", order="C")
            nb = name.encode("utf-8")
            fh.write(struct.pack("<I", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    path = Path(path)
    blob = path.read_bytes()
    if blob[: len(MAGIC)] != MAGIC:
        raise ValueError(f"{path}: not a parameter checkpoint (bad magic)")
    off = len(MAGIC)
    out: dict[str, np.ndarray] = {}
    while off < len(blob):
        (nlen,) = struct.unpack_from("<I", blob, off)
        off += 4
        name = blob[off : off + nlen].decode("utf-8")
        off += nlen
        (rank,) = struct.unpack_from("<I", blob, off)
        off += 4
        shape = struct.unpack_from(f"<{rank}I", blob, off)
        off += 4 * rank
        count = int(np.prod(shape)) if rank else 1
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=off).reshape(shape)
        off += 8 * count
        out[name] = arr.astype(np.float64)
    return out


def load_into(path, params: dict[str, Tensor]) -> None:
    """Load a checkpoint into an existing named-parameter dict."""
    stored = load_checkpoint(path)
    missing = set(params) - set(stored)
    extra = set(stored) - set(params)
    if missing or extra:
        raise ValueError(f"checkpoint mismatch: missing={sorted(missing)} extra={sorted(extra)}")
    for name, p in params.items():
        if stored[name].shape != p.data.shape:
            raise ValueError(f"shape mismatch for {name!r}: {stored[name].shape} vs {p.data.shape}")
        p.data = stored[name].copy()
