"""Normal-map error metrics.

NE is the mean per-pixel angular error in degrees over a mask. SNE is
NE restricted to salient regions of the ground-truth normal map: Canny
edges of the encoded normal image (per channel, unioned), dilated by a
Chebyshev ball, intersected with the foreground.

The Canny gradient magnitude is normalized to max 1 before thresholding,
so ``low``/``high`` are relative thresholds on unit-scaled gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .maps import NormalMap, encode_normal_image

__all__ = [
    "EdgeMask",
    "SneResult",
    "AngularErrorReport",
    "normal_error",
    "canny",
    "dilate",
    "sharp_normal_error",
    "multiview_report",
    "scaled_dilation_radius",
]

REFERENCE_RESOLUTION = 768  # dilation radius 5 is calibrated at this height
DEFAULT_DILATION_RADIUS = 5
DEFAULT_CANNY_LOW = 0.1
DEFAULT_CANNY_HIGH = 0.2


@dataclass
class EdgeMask:
    mask: np.ndarray
    canny_low: float = DEFAULT_CANNY_LOW
    canny_high: float = DEFAULT_CANNY_HIGH
    dilation_radius: int = 0

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.ndim != 2:
            raise ValueError("edge mask must be 2-d")

    @property
    def count(self) -> int:
        return int(self.mask.sum())


@dataclass
class SneResult:
    """SNE in degrees, or the explicit no-sharp-regions outcome."""

    sne_deg: Optional[float]
    n_pixels: int
    no_sharp_regions: bool = False


@dataclass
class AngularErrorReport:
    ne_deg: float
    sne_deg: Optional[float]
    n_foreground: int
    n_sharp: int
    per_view: list = field(default_factory=list)
    params: dict = field(default_factory=dict)


def scaled_dilation_radius(height: int) -> int:
    """Default dilation radius scaled from the 768-px calibration."""
    return max(1, round(DEFAULT_DILATION_RADIUS * height / REFERENCE_RESOLUTION))


def normal_error(pred: NormalMap, gt: NormalMap, mask: np.ndarray | None = None) -> float:
    """Mean angular deviation in degrees over ``mask`` (defaults to joint foreground)."""
    if pred.shape != gt.shape:
        raise ValueError(f"normal map shapes differ: {pred.shape} vs {gt.shape}")
    if mask is None:
        mask = pred.mask & gt.mask
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("empty mask: normal error undefined")
    dots = np.sum(pred.vectors[mask] * gt.vectors[mask], axis=-1)
    ang = np.degrees(np.arccos(np.clip(dots, -1.0, 1.0)))
    return float(ang.mean())


# -- Canny ----------------------------------------------------------------


def _gaussian_kernel1d(sigma: float) -> np.ndarray:
    radius = int(np.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def _convolve_sep(img: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Separable 2-d convolution with reflect padding."""
    r = len(k) // 2
    pad = np.pad(img, ((r, r), (0, 0)), mode="reflect")
    out = np.zeros_like(img)
    for i, kv in enumerate(k):
        out += kv * pad[i : i + img.shape[0], :]
    pad = np.pad(out, ((0, 0), (r, r)), mode="reflect")
    out2 = np.zeros_like(img)
    for i, kv in enumerate(k):
        out2 += kv * pad[:, i : i + img.shape[1]]
    return out2


def _conv3(img: np.ndarray, k3: np.ndarray) -> np.ndarray:
    pad = np.pad(img, 1, mode="reflect")
    out = np.zeros_like(img)
    h, w = img.shape
    for i in range(3):
        for j in range(3):
            out += k3[i, j] * pad[i : i + h, j : j + w]
    return out


_SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
_SOBEL_Y = _SOBEL_X.T


def _canny_channel(gray: np.ndarray, low: float, high: float, sigma: float = 1.4) -> np.ndarray:
    blur = _convolve_sep(gray.astype(np.float64), _gaussian_kernel1d(sigma))
    gx = _conv3(blur, _SOBEL_X)
    gy = _conv3(blur, _SOBEL_Y)
    mag = np.hypot(gx, gy)
    peak = mag.max()
    if peak <= 0:
        return np.zeros_like(gray, dtype=bool)
    mag = mag / peak  # unit-scaled gradients

    # non-maximum suppression along the quantized gradient direction;
    # the asymmetric (>, >=) pair keeps exactly one pixel on plateau ties
    ang = np.mod(np.arctan2(gy, gx), np.pi)
    sector = np.floor((ang + np.pi / 8) / (np.pi / 4)).astype(int) % 4
    offsets = {0: (0, 1), 1: (-1, 1), 2: (-1, 0), 3: (-1, -1)}
    padm = np.pad(mag, 1, mode="constant")
    h, w = gray.shape
    nms = np.zeros((h, w), dtype=bool)
    for s, (dy, dx) in offsets.items():
        ahead = padm[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
        behind = padm[1 - dy : 1 - dy + h, 1 - dx : 1 - dx + w]
        keep = (mag > behind) & (mag >= ahead)
        nms |= keep & (sector == s)

    strong = nms & (mag >= high)
    weak = nms & (mag >= low)
    # hysteresis: grow strong seeds through 8-connected weak pixels
    result = strong.copy()
    while True:
        grown = _dilate_bool(result, 1) & weak
        if np.array_equal(grown, result):
            return result
        result = grown


def canny(source, low: float = DEFAULT_CANNY_LOW, high: float = DEFAULT_CANNY_HIGH) -> EdgeMask:
    """Edge mask of a NormalMap (encoded rgb, per-channel union) or float image.

    Accepts a NormalMap, an HxWx3 float image in [0,1], or an HxW gray
    image. Per-channel masks are unioned so pure-direction discontinuities
    with equal luminance still register.
    """
    if not (0.0 < low < high):
        raise ValueError("need 0 < low < high")
    if isinstance(source, NormalMap):
        img = encode_normal_image(source).astype(np.float64) / 255.0
    else:
        img = np.asarray(source, dtype=np.float64)
    if img.ndim == 2:
        channels = [img]
    elif img.ndim == 3:
        channels = [img[..., c] for c in range(img.shape[2])]
    else:
        raise ValueError(f"unsupported image shape {img.shape}")
    mask = np.zeros(img.shape[:2], dtype=bool)
    for ch in channels:
        mask |= _canny_channel(ch, low, high)
    return EdgeMask(mask, canny_low=low, canny_high=high, dilation_radius=0)


def _dilate_bool(mask: np.ndarray, radius: int) -> np.ndarray:
    if radius <= 0:
        return mask.copy()
    h, w = mask.shape
    pad = np.pad(mask, radius, mode="constant")
    out = np.zeros((h, w), dtype=bool)
    for dy in range(2 * radius + 1):
        for dx in range(2 * radius + 1):
            out |= pad[dy : dy + h, dx : dx + w]
    return out


def dilate(mask: EdgeMask, radius: int = DEFAULT_DILATION_RADIUS) -> EdgeMask:
    """Chebyshev-ball (square) dilation; radius 0 is the identity."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    return EdgeMask(
        _dilate_bool(mask.mask, radius),
        canny_low=mask.canny_low,
        canny_high=mask.canny_high,
        dilation_radius=mask.dilation_radius + radius,
    )


def sharp_normal_error(
    pred: NormalMap,
    gt: NormalMap,
    fg_mask: np.ndarray | None = None,
    canny_low: float = DEFAULT_CANNY_LOW,
    canny_high: float = DEFAULT_CANNY_HIGH,
    radius: int = DEFAULT_DILATION_RADIUS,
) -> SneResult:
    """NE restricted to dilated Canny edges of the ground-truth normals.

    An empty sharp mask yields the explicit no-sharp-regions result
    rather than reporting 0.
    """
    if fg_mask is None:
        fg_mask = pred.mask & gt.mask
    edges = dilate(canny(gt, canny_low, canny_high), radius)
    sharp = edges.mask & fg_mask
    n = int(sharp.sum())
    if n == 0:
        return SneResult(sne_deg=None, n_pixels=0, no_sharp_regions=True)
    return SneResult(sne_deg=normal_error(pred, gt, sharp), n_pixels=n)


def multiview_report(
    pred_views: Sequence[NormalMap],
    gt_views: Sequence[NormalMap],
    canny_low: float = DEFAULT_CANNY_LOW,
    canny_high: float = DEFAULT_CANNY_HIGH,
    radius: int | None = None,
) -> AngularErrorReport:
    """NE/SNE averaged over paired views with nonempty masks."""
    if len(pred_views) != len(gt_views):
        raise ValueError(f"view count mismatch: {len(pred_views)} vs {len(gt_views)}")
    if not pred_views:
        raise ValueError("no views given")
    per_view = []
    nes, snes = [], []
    n_fg = n_sharp = 0
    for i, (p, g) in enumerate(zip(pred_views, gt_views)):
        r = scaled_dilation_radius(g.shape[0]) if radius is None else radius
        fg = p.mask & g.mask
        if not fg.any():
            per_view.append({"view": i, "ne_deg": None, "sne_deg": None, "n_fg": 0, "n_sharp": 0})
            continue
        ne = normal_error(p, g, fg)
        sne = sharp_normal_error(p, g, fg, canny_low, canny_high, r)
        nes.append(ne)
        if sne.sne_deg is not None:
            snes.append(sne.sne_deg)
        n_fg += int(fg.sum())
        n_sharp += sne.n_pixels
        per_view.append(
            {"view": i, "ne_deg": ne, "sne_deg": sne.sne_deg, "n_fg": int(fg.sum()), "n_sharp": sne.n_pixels}
        )
    if not nes:
        raise ValueError("all views have empty masks")
    return AngularErrorReport(
        ne_deg=float(np.mean(nes)),
        sne_deg=float(np.mean(snes)) if snes else None,
        n_foreground=n_fg,
        n_sharp=n_sharp,
        per_view=per_view,
        params={"canny_low": canny_low, "canny_high": canny_high, "radius": radius},
    )
