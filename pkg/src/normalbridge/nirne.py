"""Noise-injected dual-stream normal regression.

Two encoders with identical architecture but independent weights read
the same image. During training the "noisy" stream's features receive
scaled Gaussian noise (sigma log-uniform per sample), biasing it toward
high-frequency structure that survives corruption; the clean stream
keeps low-frequency reliability. The decoder upsamples from the clean
stream's skips while the noisy stream enters through per-level 1x1
fusion projections added to each decoder block, so the noisy path is a
residual detail channel that can be fine-tuned alone.

Training is two-stage: stage 1 fits everything on real-domain data
(noisy edge labels, broad coverage); stage 2 freezes the clean stream
and decoder and fine-tunes only the noisy encoder and its fusion layers
on synthetic data with exact labels. Inference never injects noise.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .maps import NormalMap
from .tensorcore import (
    AdamWState,
    Conv2d,
    GroupNorm,
    SeededRng,
    Tensor,
    adamw_step,
    backward,
    collect_params,
    concat,
    l2_normalize,
    no_grad,
    upsample_nearest,
)
from .toydata import DomainSample, Domain

__all__ = [
    "NoiseSchedule",
    "TrainPhase",
    "TrainConfig",
    "DualStreamModel",
    "inject_noise",
    "forward",
    "train_stage1",
    "train_stage2",
    "predict",
    "evaluate_model",
]


@dataclass(frozen=True)
class NoiseSchedule:
    """Injection noise levels. The full EDM range is retained for
    analysis; training draws sigma log-uniformly from the narrower
    injection band, which keeps coarse shape while perturbing detail.
    ``sigma_lo == sigma_hi == 0`` disables injection entirely.
    """

    sigma_min: float = 0.002
    sigma_max: float = 80.0
    sigma_lo: float = 0.002
    sigma_hi: float = 1.0

    def __post_init__(self):
        if self.sigma_lo == self.sigma_hi == 0.0:
            return  # explicit no-injection configuration
        if not (0.0 < self.sigma_lo <= self.sigma_hi <= self.sigma_max):
            raise ValueError(
                f"need 0 < sigma_lo <= sigma_hi <= sigma_max, got "
                f"[{self.sigma_lo}, {self.sigma_hi}] vs max {self.sigma_max}"
            )

    @property
    def disabled(self) -> bool:
        return self.sigma_lo == self.sigma_hi == 0.0


class TrainPhase(enum.Enum):
    STAGE1_REAL_BOTH_STREAMS = 1
    STAGE2_SYNTH_NOISY_ONLY = 2


def inject_noise(features: Tensor, schedule: NoiseSchedule, rng: SeededRng, sigma=None):
    """Add sigma * N(0,1) to features; sigma log-uniform per batch sample.

    Pass ``sigma`` (shape [N]) to reuse one draw across feature levels.
    Returns (noised, sigma).
    """
    if schedule.disabled:
        n = features.shape[0]
        return features, np.zeros(n)
    if sigma is None:
        n = features.shape[0]
        lo, hi = np.log(schedule.sigma_lo), np.log(schedule.sigma_hi)
        sigma = np.exp(rng.uniform(lo, hi, (n,)))
    eps = rng.normal(features.shape)
    sig = sigma.reshape((-1,) + (1,) * (len(features.shape) - 1))
    noised = features + Tensor(sig * eps)
    return noised, sigma


class _Encoder:
    """Two-conv full-resolution stem plus three stride-2 downsamplings.

    Each level's output is group-normalized to roughly unit scale so the
    injection sigma range is calibrated the same way at every level (and
    run to run), like noise levels defined against unit-variance latents.
    """

    def __init__(self, channels, rng: SeededRng):
        c0, c1, c2, c3 = channels
        self.stem_a = Conv2d(3, c0, rng=rng.stream_rng(1))
        self.stem_b = Conv2d(c0, c0, rng=rng.stream_rng(5))
        self.down1 = Conv2d(c0, c1, stride=2, rng=rng.stream_rng(2))
        self.down2 = Conv2d(c1, c2, stride=2, rng=rng.stream_rng(3))
        self.down3 = Conv2d(c2, c3, stride=2, rng=rng.stream_rng(4))
        self.norm0 = GroupNorm(c0, num_groups=1)
        self.norm1 = GroupNorm(c1, num_groups=1)
        self.norm2 = GroupNorm(c2, num_groups=1)
        self.norm3 = GroupNorm(c3, num_groups=1)

    def __call__(self, x: Tensor) -> list[Tensor]:
        s = self.stem_b(self.stem_a(x).leaky_relu(0.1))
        f0 = self.norm0(s).leaky_relu(0.1)
        f1 = self.norm1(self.down1(f0)).leaky_relu(0.1)
        f2 = self.norm2(self.down2(f1)).leaky_relu(0.1)
        f3 = self.norm3(self.down3(f2)).leaky_relu(0.1)
        return [f0, f1, f2, f3]

    def layers(self, prefix):
        return {
            f"{prefix}.stem_a": self.stem_a,
            f"{prefix}.stem_b": self.stem_b,
            f"{prefix}.down1": self.down1,
            f"{prefix}.down2": self.down2,
            f"{prefix}.down3": self.down3,
            f"{prefix}.norm0": self.norm0,
            f"{prefix}.norm1": self.norm1,
            f"{prefix}.norm2": self.norm2,
            f"{prefix}.norm3": self.norm3,
        }


class DualStreamModel:
    """Clean/noisy encoders + shared decoder with per-level fusion.

    ``dual_stream=False`` builds the single-stream ablation: one encoder
    (still noise-injected in training) feeds the decoder directly and no
    fusion layers exist.
    """

    def __init__(self, channels=(8, 12, 16, 24), seed: int = 0, dual_stream: bool = True,
                 schedule: NoiseSchedule = NoiseSchedule()):
        self.channels = tuple(channels)
        self.dual_stream = dual_stream
        self.schedule = schedule
        self.stage_trained = 0
        c0, c1, c2, c3 = self.channels
        rng = SeededRng(seed)
        self.noisy_enc = _Encoder(self.channels, rng.stream_rng(10))
        self.clean_enc = _Encoder(self.channels, rng.stream_rng(20)) if dual_stream else None
        dec_rng = rng.stream_rng(30)
        self.dec3 = Conv2d(c3, c2, rng=dec_rng.stream_rng(1))
        self.dec2 = Conv2d(c2 + c2, c1, rng=dec_rng.stream_rng(2))
        self.dec1 = Conv2d(c1 + c1, c0, rng=dec_rng.stream_rng(3))
        self.dec0 = Conv2d(c0 + c0, c0, rng=dec_rng.stream_rng(4))
        self.head = Conv2d(c0, 3, rng=dec_rng.stream_rng(5))
        if dual_stream:
            fuse_rng = rng.stream_rng(40)
            # small but nonzero init: the residual detail path is live
            # from the start and grows during training
            self.fuse3 = Conv2d(c3, c3, k=1, rng=fuse_rng.stream_rng(1), init_scale=0.3)
            self.fuse2 = Conv2d(c2, c2, k=1, rng=fuse_rng.stream_rng(2), init_scale=0.3)
            self.fuse1 = Conv2d(c1, c1, k=1, rng=fuse_rng.stream_rng(3), init_scale=0.3)
            self.fuse0 = Conv2d(c0, c0, k=1, rng=fuse_rng.stream_rng(4), init_scale=0.3)

    # -- parameter bookkeeping ------------------------------------------

    def _layer_map(self) -> dict:
        layers = {}
        layers.update(self.noisy_enc.layers("noisy"))
        if self.dual_stream:
            layers.update(self.clean_enc.layers("clean"))
            layers.update({"fuse3": self.fuse3, "fuse2": self.fuse2,
                           "fuse1": self.fuse1, "fuse0": self.fuse0})
        layers.update({"dec3": self.dec3, "dec2": self.dec2, "dec1": self.dec1,
                       "dec0": self.dec0, "head": self.head})
        return layers

    def named_parameters(self) -> dict[str, Tensor]:
        return collect_params(self._layer_map())

    def stage2_trainable_names(self) -> set[str]:
        """Noisy encoder + fusion projections; everything when single-stream."""
        if not self.dual_stream:
            return set(self.named_parameters())
        return {
            name
            for name in self.named_parameters()
            if name.startswith("noisy.") or name.startswith("fuse")
        }

    def frozen_names_stage2(self) -> set[str]:
        return set(self.named_parameters()) - self.stage2_trainable_names()

    # -- forward ----------------------------------------------------------

    def forward_t(self, images: Tensor, train: bool = False,
                  rng: SeededRng | None = None,
                  zero_noisy_stream: bool = False,
                  return_raw: bool = False) -> Tensor:
        """(N,3,H,W) images -> (N,3,H,W) unit normals.

        Train mode injects noise on the noisy stream's encoder output
        (one sigma per sample, shared across levels). ``zero_noisy_stream``
        ablates the residual path at inference. ``return_raw`` skips the
        final per-pixel normalization: the regression loss fits the raw
        3-channel output against unit targets, which keeps gradients
        healthy (normalizing inside the loss makes output scale a flat
        direction that drifts up and chokes the gradient signal).
        """
        n, c, h, w = images.shape
        if h % 8 or w % 8:
            raise ValueError(f"image dims must be divisible by 8, got {h}x{w}")
        if train and rng is None and not self.schedule.disabled:
            raise ValueError("training forward needs an rng for noise injection")

        noisy_feats = self.noisy_enc(images)
        if train and not self.schedule.disabled:
            sigma = None
            injected = []
            for f in noisy_feats:
                f2, sigma = inject_noise(f, self.schedule, rng, sigma)
                injected.append(f2)
            noisy_feats = injected
        if zero_noisy_stream:
            noisy_feats = [Tensor(np.zeros(f.shape)) for f in noisy_feats]

        if self.dual_stream:
            clean_feats = self.clean_enc(images)
            # fusion enters each level's skip before the decoder conv, so
            # the (later frozen) decoder processes noisy detail through the
            # same high-sensitivity channels as the clean skips
            s3 = clean_feats[3] + self.fuse3(noisy_feats[3])
            t3 = self.dec3(s3).leaky_relu(0.1)
            u2 = upsample_nearest(t3)
            s2 = clean_feats[2] + self.fuse2(noisy_feats[2])
            t2 = self.dec2(concat([u2, s2], axis=1)).leaky_relu(0.1)
            u1 = upsample_nearest(t2)
            s1 = clean_feats[1] + self.fuse1(noisy_feats[1])
            t1 = self.dec1(concat([u1, s1], axis=1)).leaky_relu(0.1)
            u0 = upsample_nearest(t1)
            s0 = clean_feats[0] + self.fuse0(noisy_feats[0])
            t0 = self.dec0(concat([u0, s0], axis=1)).leaky_relu(0.1)
        else:
            t3 = self.dec3(noisy_feats[3]).leaky_relu(0.1)
            u2 = upsample_nearest(t3)
            t2 = self.dec2(concat([u2, noisy_feats[2]], axis=1)).leaky_relu(0.1)
            u1 = upsample_nearest(t2)
            t1 = self.dec1(concat([u1, noisy_feats[1]], axis=1)).leaky_relu(0.1)
            u0 = upsample_nearest(t1)
            t0 = self.dec0(concat([u0, noisy_feats[0]], axis=1)).leaky_relu(0.1)
        raw = self.head(t0)
        if return_raw:
            return raw
        return l2_normalize(raw, axis=1)


def forward(model: DualStreamModel, images, train: bool = False,
            rng: SeededRng | None = None, **kw) -> Tensor:
    if not isinstance(images, Tensor):
        images = Tensor(np.asarray(images, dtype=np.float64))
    return model.forward_t(images, train=train, rng=rng, **kw)


# -- training -----------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 400
    batch_size: int = 4
    lr: float = 3e-4
    weight_decay: float = 1e-2
    log_every: int = 50


def _batch_arrays(samples: list[DomainSample], idx) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    imgs = np.stack([samples[i].image.transpose(2, 0, 1) for i in idx])
    tgts = np.stack([samples[i].normal_gt.vectors.transpose(2, 0, 1) for i in idx])
    masks = np.stack([samples[i].normal_gt.mask for i in idx])
    return imgs, tgts, masks


def _masked_mse(pred: Tensor, target: np.ndarray, mask: np.ndarray) -> Tensor:
    m = mask[:, None, :, :].astype(np.float64)
    diff = pred - Tensor(target)
    total = (diff * diff * Tensor(m)).sum()
    denom = 3.0 * float(mask.sum())
    return total * (1.0 / denom)


def _train_loop(model, dataset, steps, seed, trainable: dict[str, Tensor],
                config: TrainConfig, stream_base: int) -> list[dict]:
    rng_batch = SeededRng(seed, stream_base)
    rng_noise = SeededRng(seed, stream_base + 1)
    opt = AdamWState(lr=config.lr, weight_decay=config.weight_decay)
    logs = []
    for step in range(steps):
        idx = rng_batch.integers(0, len(dataset), (config.batch_size,))
        imgs, tgts, masks = _batch_arrays(dataset, idx)
        pred = model.forward_t(Tensor(imgs), train=True, rng=rng_noise, return_raw=True)
        loss = _masked_mse(pred, tgts, masks)
        val = loss.item()
        if not np.isfinite(val):
            raise FloatingPointError(f"non-finite training loss at step {step}")
        for p in trainable.values():
            p.zero_grad()
        backward(loss)
        adamw_step(trainable, opt)
        if step % config.log_every == 0 or step == steps - 1:
            logs.append({"step": step, "loss": val})
    return logs


def train_stage1(model: DualStreamModel, real_dataset: list[DomainSample], steps: int,
                 seed: int, config: TrainConfig | None = None) -> list[dict]:
    """Both streams and the decoder, on real-domain (noisy-label) data."""
    if not real_dataset:
        raise ValueError("empty dataset")
    if any(s.domain is not Domain.REAL for s in real_dataset):
        raise ValueError("stage 1 expects real-domain samples")
    config = config or TrainConfig(steps=steps)
    logs = _train_loop(model, real_dataset, steps, seed, model.named_parameters(), config, 100)
    model.stage_trained = max(model.stage_trained, 1)
    return logs


def train_stage2(model: DualStreamModel, synth_dataset: list[DomainSample], steps: int,
                 seed: int, config: TrainConfig | None = None) -> list[dict]:
    """Noisy stream + fusion only, on synthetic (exact-label) data."""
    import warnings

    if not synth_dataset:
        raise ValueError("empty dataset")
    if any(s.domain is not Domain.SYNTH for s in synth_dataset):
        raise ValueError("stage 2 expects synthetic-domain samples")
    if model.stage_trained < 1:
        warnings.warn("stage 2 called before stage 1; fine-tuning an untrained clean stream")
    config = config or TrainConfig(steps=steps)
    params = model.named_parameters()
    trainable = {k: params[k] for k in sorted(model.stage2_trainable_names())}
    frozen = sorted(model.frozen_names_stage2())
    # dropping requires_grad takes the clean stream out of the graph and
    # skips weight-gradient work for the frozen decoder
    for name in frozen:
        params[name].requires_grad = False
    try:
        logs = _train_loop(model, synth_dataset, steps, seed, trainable, config, 200)
    finally:
        for name in frozen:
            params[name].requires_grad = True
    model.stage_trained = max(model.stage_trained, 2)
    return logs


def predict(model: DualStreamModel, image, mask: np.ndarray | None = None) -> NormalMap:
    """Infer a normal map for one HxWx3 image; no noise anywhere."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected HxWx3 image, got {img.shape}")
    with no_grad():
        out = model.forward_t(Tensor(img.transpose(2, 0, 1)[None]), train=False)
    vec = out.data[0].transpose(1, 2, 0)
    if mask is None:
        mask = np.ones(img.shape[:2], dtype=bool)
    vec = vec.copy()
    vec[~mask] = [0.0, 0.0, 1.0]
    return NormalMap(vec, mask)


def predict_batch(model: DualStreamModel, samples: list[DomainSample],
                  batch_size: int = 16) -> list[NormalMap]:
    out = []
    with no_grad():
        for start in range(0, len(samples), batch_size):
            chunk = samples[start : start + batch_size]
            imgs = np.stack([s.image.transpose(2, 0, 1) for s in chunk])
            pred = model.forward_t(Tensor(imgs), train=False)
            for k, s in enumerate(chunk):
                vec = pred.data[k].transpose(1, 2, 0).copy()
                vec[~s.normal_gt.mask] = [0.0, 0.0, 1.0]
                out.append(NormalMap(vec, s.normal_gt.mask))
    return out


def evaluate_model(model: DualStreamModel, samples: list[DomainSample],
                   sne_radius: int = 2) -> dict:
    """Mean NE / SNE of model predictions.

    Ground truth is recomputed from each sample's heightfield, so the
    benchmark stays exact even for real-domain samples whose stored
    training labels are deliberately corrupted.
    """
    from . import metrics
    from .toydata import heightfield_normals

    nes, snes = [], []
    for s, pred in zip(samples, predict_batch(model, samples)):
        gt = heightfield_normals(s.height_gt)
        nes.append(metrics.normal_error(pred, gt))
        res = metrics.sharp_normal_error(pred, gt, radius=sne_radius)
        if res.sne_deg is not None:
            snes.append(res.sne_deg)
    return {
        "ne_deg": float(np.mean(nes)),
        "sne_deg": float(np.mean(snes)) if snes else None,
        "n_samples": len(samples),
    }
