"""Heightfields, normal maps and their on-disk encodings.

Normal maps are camera-space unit vectors with +z toward the viewer,
stored alongside a boolean foreground mask. Background pixels carry the
sentinel normal (0, 0, 1) and mask False. The 8-bit image encoding is
rgb = round((n + 1) / 2 * 255) with background forced to white.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "Heightfield",
    "NormalMap",
    "encode_normal_image",
    "decode_normal_image",
    "write_ppm",
    "read_ppm",
    "write_pgm",
    "read_pgm",
    "write_height_bin",
    "read_height_bin",
    "HEIGHT_MAGIC",
]

SENTINEL_NORMAL = np.array([0.0, 0.0, 1.0])


@dataclass
class Heightfield:
    """H x W grid of heights in world units; ``cell_size`` is units/pixel."""

    heights: np.ndarray
    cell_size: float = 1.0

    def __post_init__(self):
        self.heights = np.asarray(self.heights, dtype=np.float64)
        if self.heights.ndim != 2:
            raise ValueError(f"heights must be 2-d, got shape {self.heights.shape}")
        h, w = self.heights.shape
        if h < 8 or w < 8:
            raise ValueError(f"heightfield must be at least 8x8, got {h}x{w}")
        if not np.isfinite(self.heights).all():
            raise ValueError("heightfield contains non-finite values")
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        return self.heights.shape


@dataclass
class NormalMap:
    """H x W field of unit 3-vectors plus a foreground mask."""

    vectors: np.ndarray
    mask: np.ndarray = None

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 3 or self.vectors.shape[2] != 3:
            raise ValueError(f"vectors must be HxWx3, got {self.vectors.shape}")
        if self.mask is None:
            self.mask = np.ones(self.vectors.shape[:2], dtype=bool)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != self.vectors.shape[:2]:
            raise ValueError("mask shape does not match vectors")

    @property
    def shape(self) -> tuple[int, int]:
        return self.vectors.shape[:2]

    def validate_unit(self, tol: float = 1e-6) -> None:
        norms = np.linalg.norm(self.vectors[self.mask], axis=-1)
        if norms.size and np.max(np.abs(norms - 1.0)) > tol:
            raise ValueError("foreground normals are not unit length")


def encode_normal_image(nm: NormalMap) -> np.ndarray:
    """uint8 H x W x 3 image; background pixels are white."""
    img = np.round((nm.vectors + 1.0) / 2.0 * 255.0).clip(0, 255).astype(np.uint8)
    img[~nm.mask] = 255
    return img


def decode_normal_image(img: np.ndarray, mask: np.ndarray | None = None) -> NormalMap:
    """Invert :func:`encode_normal_image`; decoded vectors are re-normalized."""
    v = img.astype(np.float64) / 255.0 * 2.0 - 1.0
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    v = np.where(n > 1e-12, v / np.maximum(n, 1e-12), SENTINEL_NORMAL)
    if mask is None:
        mask = np.ones(img.shape[:2], dtype=bool)
    v[~mask] = SENTINEL_NORMAL
    return NormalMap(v, mask)


# -- netpbm -------------------------------------------------------------


def write_ppm(path, img: np.ndarray) -> None:
    img = np.asarray(img)
    if img.dtype != np.uint8 or img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("write_ppm expects a uint8 HxWx3 array")
    h, w = img.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(img.tobytes())


def write_pgm(path, img: np.ndarray) -> None:
    img = np.asarray(img)
    if img.dtype != np.uint8 or img.ndim != 2:
        raise ValueError("write_pgm expects a uint8 HxW array")
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(img.tobytes())


def _read_netpbm(path, magic: bytes):
    blob = Path(path).read_bytes()
    if not blob.startswith(magic):
        raise ValueError(f"{path}: expected {magic.decode()} file")
    # header: magic, width, height, maxval, separated by whitespace/comments
    tokens = []
    pos = len(magic)
    while len(tokens) < 3:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        tokens.append(int(blob[start:pos]))
    pos += 1  # single whitespace after maxval
    w, h, maxval = tokens
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 supported")
    return blob, pos, w, h


def read_ppm(path) -> np.ndarray:
    blob, pos, w, h = _read_netpbm(path, b"P6")
    return np.frombuffer(blob, dtype=np.uint8, count=h * w * 3, offset=pos).reshape(h, w, 3).copy()


def read_pgm(path) -> np.ndarray:
    blob, pos, w, h = _read_netpbm(path, b"P5")
    return np.frombuffer(blob, dtype=np.uint8, count=h * w, offset=pos).reshape(h, w).copy()


# -- height binaries -----------------------------------------------------

HEIGHT_MAGIC = b"NBH1"


def write_height_bin(path, hf: Heightfield) -> None:
    """16-byte header (magic, u32 H, u32 W, f32 cell size), then f64 grid."""
    import struct

    h, w = hf.shape
    with open(path, "wb") as fh:
        fh.write(HEIGHT_MAGIC)
        fh.write(struct.pack("<IIf", h, w, hf.cell_size))
        fh.write(np.asarray(hf.heights, dtype="<f8", order="C").tobytes())


def read_height_bin(path) -> Heightfield:
    import struct

    blob = Path(path).read_bytes()
    if blob[:4] != HEIGHT_MAGIC:
        raise ValueError(f"{path}: not a height binary (bad magic)")
    h, w, cell = struct.unpack_from("<IIf", blob, 4)
    heights = np.frombuffer(blob, dtype="<f8", count=h * w, offset=16).reshape(h, w)
    return Heightfield(heights.astype(np.float64), float(cell))
