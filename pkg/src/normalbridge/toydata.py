"""Procedural paired (image, normal map, heightfield) samples.

Two label domains mirror how training data behaves in the wild:
``SYNTH`` samples carry exact normals derived from the heightfield;
``REAL`` samples take the same geometry but corrupt the normal labels
inside edge bands (Gaussian blur plus angular noise), the failure mode
of scanned ground truth. Everything is deterministic per (seed, index)
via counter-based RNG streams, so generation parallelism cannot change
results.

The toy world is an orthographic top-down view: axis 1 of the grid is
x (right), axis 0 is y, and normals live in that frame with +z toward
the viewer, n = normalize(-dh/dx, -dh/dy, 1).
"""

from __future__ import annotations

import enum
import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import metrics
from .maps import (
    Heightfield,
    NormalMap,
    decode_normal_image,
    encode_normal_image,
    read_height_bin,
    read_pgm,
    read_ppm,
    write_height_bin,
    write_pgm,
    write_ppm,
)
from .tensorcore import SeededRng, Tensor, concat, l2_normalize

__all__ = [
    "Domain",
    "DomainSample",
    "generate_scene",
    "heightfield_normals",
    "normals_from_heights_t",
    "shade_image",
    "corrupt_labels_real_domain",
    "make_dataset",
    "write_dataset",
    "read_dataset",
]

# RNG stream bases; keeps per-purpose streams disjoint under one seed.
_STREAM_SCENE = 0
_STREAM_SHADE = 10_000_000
_STREAM_CORRUPT = 20_000_000
_STREAM_ITEM = 30_000_000

DEFAULT_PRIMITIVES = ("box", "ramp", "sphere", "ridge")


class Domain(enum.Enum):
    REAL = "real"
    SYNTH = "synth"


@dataclass
class DomainSample:
    image: np.ndarray          # H x W x 3 floats in [0, 1]
    normal_gt: NormalMap
    height_gt: Heightfield
    domain: Domain
    index: int = 0

    def __post_init__(self):
        if self.image.shape[:2] != self.normal_gt.shape or self.image.shape[:2] != self.height_gt.shape:
            raise ValueError("image/normal/height dimensions disagree")


# -- scenes ----------------------------------------------------------------


def _paint_primitive(h: np.ndarray, kind: str, rng: SeededRng, cell: float) -> None:
    size_y, size_x = h.shape
    yy, xx = np.mgrid[0:size_y, 0:size_x].astype(np.float64)
    extent = rng.uniform(0.06, 0.12) * min(size_y, size_x)
    # narrow height spread: in dense scenes every primitive's edges must
    # clear canny's relative thresholds, not just the tallest one's
    height = rng.uniform(0.8, 1.3) * extent * cell * 0.5

    if kind == "box":
        # boxes stay fully interior so all 4 step edges are visible
        ey = extent * rng.uniform(0.6, 1.3)
        cy = rng.uniform(ey + 2.0, size_y - ey - 2.0)
        cx = rng.uniform(extent + 2.0, size_x - extent - 2.0)
        region = (np.abs(yy - cy) < ey) & (np.abs(xx - cx) < extent)
        np.maximum(h, np.where(region, height, 0.0), out=h)
        return

    cy = rng.uniform(0.12, 0.88) * size_y
    cx = rng.uniform(0.12, 0.88) * size_x
    if kind == "ramp":
        ey = extent * rng.uniform(0.8, 1.6)
        region = (np.abs(yy - cy) < ey) & (np.abs(xx - cx) < extent)
        axis = xx if rng.uniform() < 0.5 else yy
        c = cx if axis is xx else cy
        ramp = (axis - (c - extent)) / (2.0 * extent)
        np.maximum(h, np.where(region, height * np.clip(ramp, 0.0, 1.0), 0.0), out=h)
    elif kind == "sphere":
        r2 = (yy - cy) ** 2 + (xx - cx) ** 2
        cap = np.sqrt(np.maximum(extent ** 2 - r2, 0.0)) * cell
        np.maximum(h, cap * (height / (extent * cell)), out=h)
    elif kind == "ridge":
        ey = extent * rng.uniform(1.2, 2.2)
        along_x = rng.uniform() < 0.5
        dist = np.abs(xx - cx) if along_x else np.abs(yy - cy)
        other = np.abs(yy - cy) if along_x else np.abs(xx - cx)
        profile = np.clip(1.0 - dist / extent, 0.0, 1.0)
        region = other < ey
        np.maximum(h, np.where(region, height * profile, 0.0), out=h)
    else:
        raise ValueError(f"unknown primitive {kind!r}")


def generate_scene(
    seed: int,
    complexity: int,
    size: int = 64,
    cell_size: float = 1.0,
    primitives: tuple[str, ...] = DEFAULT_PRIMITIVES,
    stream: int = 0,
) -> Heightfield:
    """Union-by-max composite of ``complexity`` primitives on a ground plane."""
    if not 1 <= complexity <= 10:
        raise ValueError(f"complexity must be in 1..10, got {complexity}")
    rng = SeededRng(seed, _STREAM_SCENE + stream)
    h = np.zeros((size, size))
    for _ in range(complexity):
        kind = primitives[int(rng.integers(0, len(primitives)))]
        _paint_primitive(h, kind, rng, cell_size)
    return Heightfield(h, cell_size)


# -- normals ----------------------------------------------------------------


def normals_from_heights_t(heights: Tensor, cell_size: float = 1.0) -> Tensor:
    """Differentiable unit normals of an H x W height Tensor -> (H, W, 3).

    Central differences inside, one-sided at borders; gradients flow back
    into the heights.
    """
    c = float(cell_size)

    def grad_axis1(h):
        left = (h[:, 1:2] - h[:, 0:1]) * (1.0 / c)
        inner = (h[:, 2:] - h[:, :-2]) * (1.0 / (2.0 * c))
        right = (h[:, -1:] - h[:, -2:-1]) * (1.0 / c)
        return concat([left, inner, right], axis=1)

    gx = grad_axis1(heights)
    gy = grad_axis1(heights.transpose(1, 0)).transpose(1, 0)
    hgt, wid = heights.shape
    ones = Tensor(np.ones((hgt, wid, 1)))
    stacked = concat([(-1.0 * gx).reshape(hgt, wid, 1), (-1.0 * gy).reshape(hgt, wid, 1), ones], axis=2)
    # squared norm is >= 1 (z component is 1), so no eps is needed and
    # flat regions normalize to exactly (0, 0, 1)
    return l2_normalize(stacked, axis=2, eps=0.0)


def heightfield_normals(hf: Heightfield) -> NormalMap:
    """Exact normals of a heightfield (full-frame foreground)."""
    vec = normals_from_heights_t(Tensor(hf.heights), hf.cell_size).data
    return NormalMap(vec, np.ones(hf.shape, dtype=bool))


# -- shading ----------------------------------------------------------------


def _procedural_albedo(shape, rng: SeededRng, contrast: float, max_freq: float) -> np.ndarray:
    size_y, size_x = shape
    yy, xx = np.mgrid[0:size_y, 0:size_x].astype(np.float64)
    albedo = np.empty((size_y, size_x, 3))
    for ch in range(3):
        fy = rng.uniform(0.5, max_freq)
        fx = rng.uniform(0.5, max_freq)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        wave = np.sin(2.0 * np.pi * (fy * yy / size_y + fx * xx / size_x) + phase)
        albedo[..., ch] = 0.7 + contrast * wave
    return albedo


def shade_image(
    hf: Heightfield,
    normals: NormalMap,
    light_dir=(0.35, -0.25, 0.9),
    albedo_seed: int | None = 0,
    noise_std: float = 0.02,
    flat_albedo: bool = False,
    albedo_contrast: float = 0.25,
    albedo_max_freq: float = 3.0,
) -> np.ndarray:
    """Lambertian shading with procedural albedo and sensor noise.

    The albedo pattern and the additive noise deliberately inject the
    lighting/texture ambiguity a normal estimator has to see through;
    the contrast/frequency/noise knobs set how strong that ambiguity is
    (they define the gap between the real and synthetic image styles).
    """
    light = np.asarray(light_dir, dtype=np.float64)
    norm = np.linalg.norm(light)
    if norm < 1e-12:
        raise ValueError("light direction must be nonzero")
    light = light / norm
    lam = np.maximum(normals.vectors @ light, 0.0)
    if flat_albedo or albedo_seed is None:
        albedo = np.ones(hf.shape + (3,))
    else:
        albedo = _procedural_albedo(
            hf.shape, SeededRng(albedo_seed, _STREAM_SHADE), albedo_contrast, albedo_max_freq
        )
    img = lam[..., None] * albedo
    if noise_std > 0:
        rng = SeededRng(0 if albedo_seed is None else albedo_seed, _STREAM_SHADE + 1)
        img = img + noise_std * rng.normal(img.shape)
    return np.clip(img, 0.0, 1.0)


# -- real-domain label corruption -------------------------------------------


def _gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    radius = int(np.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    k /= k.sum()
    out = img.astype(np.float64)
    pad = np.pad(out, ((radius, radius), (0, 0)) + ((0, 0),) * (img.ndim - 2), mode="edge")
    out = sum(k[i] * pad[i : i + img.shape[0]] for i in range(len(k)))
    pad = np.pad(out, ((0, 0), (radius, radius)) + ((0, 0),) * (img.ndim - 2), mode="edge")
    return sum(k[i] * pad[:, i : i + img.shape[1]] for i in range(len(k)))


def corrupt_labels_real_domain(
    sample: DomainSample,
    seed: int,
    blur_sigma: float = 4.0,
    angle_noise_deg: float = 25.0,
    band_radius: int = 4,
) -> DomainSample:
    """Blur + angular noise on normals inside dilated edge bands.

    Mimics scanner label noise at depth discontinuities: the geometry and
    image stay exact, only the normal labels degrade, and only near edges.
    """
    if sample.domain is not Domain.SYNTH:
        raise ValueError("corruption expects a synthetic-domain sample")
    nm = sample.normal_gt
    band = metrics.dilate(metrics.canny(nm), band_radius).mask
    vec = nm.vectors.copy()
    if band.any():
        blurred = _gaussian_blur(nm.vectors, blur_sigma)
        vec[band] = blurred[band]
        rng = SeededRng(seed, _STREAM_CORRUPT)
        n = vec[band]
        n /= np.linalg.norm(n, axis=-1, keepdims=True)
        # random unit tangents: project a random vector onto each tangent plane
        raw = rng.normal(n.shape)
        raw -= np.sum(raw * n, axis=-1, keepdims=True) * n
        tan = raw / np.maximum(np.linalg.norm(raw, axis=-1, keepdims=True), 1e-12)
        theta = np.radians(rng.normal(n.shape[:1], scale=angle_noise_deg))[:, None]
        vec[band] = np.cos(theta) * n + np.sin(theta) * tan
    corrupted = NormalMap(vec, nm.mask.copy())
    corrupted.validate_unit(1e-6)
    return DomainSample(sample.image, corrupted, sample.height_gt, Domain.REAL, sample.index)


# -- datasets ----------------------------------------------------------------


# Image-style presets per domain. Real-world captures carry strong
# textures, varied lighting and sensor noise; synthetic renders are
# clean and canonically lit. The gap is what domain-specific training
# has to straddle.
DOMAIN_STYLES = {
    Domain.REAL: {"albedo_contrast": 0.3, "albedo_max_freq": 6.0, "noise_std": 0.03, "light_tilt": 0.25},
    Domain.SYNTH: {"albedo_contrast": 0.12, "albedo_max_freq": 2.8, "noise_std": 0.008, "light_tilt": 0.1},
}


def _make_sample(seed: int, index: int, domain: Domain, complexity_range, size, cell_size) -> DomainSample:
    item = SeededRng(seed, _STREAM_ITEM + index)
    lo, hi = complexity_range
    complexity = int(item.integers(lo, hi + 1))
    hf = generate_scene(seed, complexity, size=size, cell_size=cell_size, stream=index + 1)
    nm = heightfield_normals(hf)
    style = DOMAIN_STYLES[domain]
    tilt = item.normal((2,), scale=style["light_tilt"])
    light = np.array([0.2 + tilt[0], -0.2 + tilt[1], 0.95])
    img = shade_image(
        hf,
        nm,
        light_dir=light,
        albedo_seed=seed * 1_000_003 + index,
        noise_std=style["noise_std"],
        albedo_contrast=style["albedo_contrast"],
        albedo_max_freq=style["albedo_max_freq"],
    )
    sample = DomainSample(img, nm, hf, Domain.SYNTH, index)
    if domain is Domain.REAL:
        sample = corrupt_labels_real_domain(sample, seed * 2_000_003 + index)
    return sample


def make_dataset(
    n: int,
    domain: Domain,
    seed: int,
    complexity_range: tuple[int, int] = (1, 10),
    size: int = 64,
    cell_size: float = 1.0,
    threads: int = 1,
) -> list[DomainSample]:
    """Deterministic dataset; item i depends only on (seed, i)."""
    if n < 1:
        raise ValueError("need n >= 1 samples")
    lo, hi = complexity_range
    if not (1 <= lo <= hi <= 10):
        raise ValueError(f"bad complexity range {complexity_range}")
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futs = [
                pool.submit(_make_sample, seed, i, domain, complexity_range, size, cell_size)
                for i in range(n)
            ]
            return [f.result() for f in futs]
    return [_make_sample(seed, i, domain, complexity_range, size, cell_size) for i in range(n)]


def sample_digest(sample: DomainSample) -> str:
    return hashlib.sha256(sample.image.tobytes()).hexdigest()


def write_dataset(out_dir, samples: list[DomainSample], meta: dict | None = None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, s in enumerate(samples):
        stem = f"{i:04d}"
        write_ppm(out / f"{stem}_img.ppm", np.round(s.image * 255.0).clip(0, 255).astype(np.uint8))
        write_ppm(out / f"{stem}_normal.ppm", encode_normal_image(s.normal_gt))
        write_pgm(out / f"{stem}_mask.pgm", np.where(s.normal_gt.mask, 255, 0).astype(np.uint8))
        write_height_bin(out / f"{stem}_height.bin", s.height_gt)
        entries.append({"index": i, "stem": stem, "domain": s.domain.value})
    manifest = {"n": len(samples), "items": entries}
    manifest.update(meta or {})
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def read_dataset(path) -> list[DomainSample]:
    root = Path(path)
    manifest = json.loads((root / "manifest.json").read_text())
    samples = []
    for item in manifest["items"]:
        stem = item["stem"]
        img = read_ppm(root / f"{stem}_img.ppm").astype(np.float64) / 255.0
        mask = read_pgm(root / f"{stem}_mask.pgm") > 127
        nm = decode_normal_image(read_ppm(root / f"{stem}_normal.ppm"), mask)
        hf = read_height_bin(root / f"{stem}_height.bin")
        samples.append(DomainSample(img, nm, hf, Domain(item["domain"]), item["index"]))
    return samples
