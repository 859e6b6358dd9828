"""Video autoencoder that splits a clip into first-frame content features and a
compact motion latent, then fuses them back into pixels.

The image encoder is a 2D pyramid over the first frame; the motion encoder is
a 3D net that downsamples space by f_s and collapses the temporal axis
entirely; the decoder expands the motion latent back through time at the
coarsest scale and then upsamples spatially, injecting the content pyramid
via skip connections.

Public encode/decode methods follow the package-wide (L, H, W, C) video
layout and return small dataclasses; the *_batch methods used by training
work on channels-first batches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..tensors import check_video, to_channels_first, to_frames_last
from .blocks import (
    ResBlock2d,
    ResBlock3d,
    SpatialDown2d,
    SpatialDown3d,
    SpatialUp3d,
    TemporalDown3d,
    group_norm,
)

LOG_SIGMA_CLAMP = 10.0


@dataclass(frozen=True)
class AutoencoderConfig:
    clip_length: int = 16
    frame_height: int = 64
    frame_width: int = 64
    in_channels: int = 3
    latent_channels: int = 3
    image_base: int = 32
    motion_base: int = 32
    decoder_base: int = 32
    channel_mult: tuple[int, ...] = (1, 2, 4)
    blocks_per_res: int = 2

    @property
    def spatial_factor(self) -> int:
        return 2 ** (len(self.channel_mult) - 1)

    @property
    def latent_hw(self) -> tuple[int, int]:
        return self.frame_height // self.spatial_factor, self.frame_width // self.spatial_factor

    @property
    def content_channels(self) -> int:
        return self.image_base * self.channel_mult[-1]

    def validate(self):
        f = self.spatial_factor
        if self.frame_height % f or self.frame_width % f:
            raise ValueError(f"frame dims must be divisible by f_s={f}")
        if self.clip_length < 2 or self.clip_length & (self.clip_length - 1):
            raise ValueError("clip_length must be a power of two >= 2")
        if list(self.channel_mult) != sorted(self.channel_mult):
            raise ValueError("channel_mult must be ascending")
        return self


@dataclass
class ContentFeatures:
    """Deepest first-frame feature plus the finer pyramid levels, (H, W, C) each."""

    deepest: torch.Tensor
    pyramid: list[torch.Tensor]


@dataclass
class MotionPosterior:
    mu: torch.Tensor      # (h, w, d)
    sigma: torch.Tensor   # (h, w, d), strictly positive


@dataclass
class LatentMotion:
    z: torch.Tensor       # (h, w, d)
    normalized: bool = False


def reparameterize(mu: torch.Tensor, sigma: torch.Tensor, eps: torch.Tensor) -> torch.Tensor:
    """mu + eps * sigma; the sampling path of the motion posterior."""
    return mu + eps * sigma


def normalize_latent(z: torch.Tensor) -> torch.Tensor:
    """Non-affine per-channel standardization over spatial positions.

    Input is (B, d, h, w) or (d, h, w); mean/variance are taken per channel
    across h*w. Channels with (near-)zero spatial variance collapse to zeros.
    """
    dims = (-2, -1)
    mean = z.mean(dim=dims, keepdim=True)
    var = z.var(dim=dims, unbiased=False, keepdim=True)
    return (z - mean) / torch.sqrt(var + 1e-6)


class ImageEncoder(nn.Module):
    """2D multi-scale encoder over the first frame."""

    def __init__(self, cfg: AutoencoderConfig):
        super().__init__()
        widths = [cfg.image_base * m for m in cfg.channel_mult]
        self.stem = nn.Conv2d(cfg.in_channels, widths[0], 3, padding=1)
        self.levels = nn.ModuleList()
        self.downs = nn.ModuleList()
        for i, w in enumerate(widths):
            self.levels.append(nn.Sequential(
                *[ResBlock2d(w, w) for _ in range(cfg.blocks_per_res)]
            ))
            if i + 1 < len(widths):
                self.downs.append(SpatialDown2d(w, widths[i + 1]))

    def forward(self, frame: torch.Tensor) -> tuple[torch.Tensor, list[torch.Tensor]]:
        """frame (B, C, H, W) -> (deepest, pyramid finest-last)."""
        h = self.stem(frame)
        feats = []
        for i, level in enumerate(self.levels):
            h = level(h)
            feats.append(h)
            if i < len(self.downs):
                h = self.downs[i](h)
        deepest = feats[-1]
        pyramid = feats[:-1][::-1]  # coarser first, finest (input-res) last
        return deepest, pyramid


class MotionEncoder(nn.Module):
    """3D encoder: spatial downsample by f_s, temporal collapse to a single step."""

    def __init__(self, cfg: AutoencoderConfig):
        super().__init__()
        widths = [cfg.motion_base * m for m in cfg.channel_mult]
        # the stem performs the first spatial downsample, so the conv stack
        # never runs at full H x W (3D convs there dominate otherwise)
        self.stem = nn.Conv3d(cfg.in_channels, widths[0], 3, stride=(1, 2, 2), padding=1)
        stages = []
        for i in range(len(widths) - 1):
            stages.append(nn.Sequential(
                *[ResBlock3d(widths[i], widths[i]) for _ in range(cfg.blocks_per_res)]
            ))
            if i + 2 < len(widths):
                stages.append(SpatialDown3d(widths[i], widths[i + 1]))
        self.stages = nn.Sequential(*stages)
        mid = widths[-2] if len(widths) > 1 else widths[0]
        self.collapse = nn.Sequential(*[
            TemporalDown3d(mid, mid) for _ in range(int(math.log2(cfg.clip_length)))
        ])
        self.post = nn.Sequential(ResBlock2d(mid, widths[-1]), ResBlock2d(widths[-1], widths[-1]))
        self.head_mu = nn.Conv2d(widths[-1], cfg.latent_channels, 1)
        self.head_log_sigma = nn.Conv2d(widths[-1], cfg.latent_channels, 1)
        # start near-deterministic: noise-dominated latents early in training
        # stall the motion pathway before the KL term can do anything useful
        nn.init.constant_(self.head_log_sigma.bias, -3.0)

    def forward(self, video: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """video (B, C, L, H, W) -> posterior mu, sigma of shape (B, d, h, w)."""
        h = self.stem(video)
        h = self.stages(h)
        h = self.collapse(h)
        h = h.squeeze(2)
        h = self.post(h)
        mu = self.head_mu(h)
        log_sigma = self.head_log_sigma(h).clamp(-LOG_SIGMA_CLAMP, LOG_SIGMA_CLAMP)
        return mu, torch.exp(log_sigma)


class FusionDecoder(nn.Module):
    """Fuses motion latent with content features and synthesizes the clip.

    The latent is expanded through time at the coarsest grid (a learned
    time-expansion conv), refined with 3D blocks, then upsampled spatially
    with one content-pyramid skip per resolution.
    """

    def __init__(self, cfg: AutoencoderConfig):
        super().__init__()
        self.cfg = cfg
        widths = [cfg.decoder_base * m for m in cfg.channel_mult]
        deep = widths[-1]
        self.fuse = nn.Conv2d(cfg.latent_channels + cfg.content_channels, deep, 3, padding=1)
        self.expand = nn.Conv2d(deep, deep * cfg.clip_length, 3, padding=1)
        self.deep_blocks = nn.Sequential(
            *[ResBlock3d(deep, deep) for _ in range(cfg.blocks_per_res)]
        )
        ups, skips, stages = [], [], []
        image_widths = [cfg.image_base * m for m in cfg.channel_mult]
        for i in reversed(range(len(widths) - 1)):
            ups.append(SpatialUp3d(widths[i + 1], widths[i]))
            skips.append(nn.Conv3d(widths[i] + image_widths[i], widths[i], 1))
            stages.append(nn.Sequential(
                *[ResBlock3d(widths[i], widths[i]) for _ in range(cfg.blocks_per_res)]
            ))
        self.ups = nn.ModuleList(ups)
        self.skips = nn.ModuleList(skips)
        self.stages = nn.ModuleList(stages)
        self.head_norm = group_norm(widths[0])
        self.head = nn.Conv3d(widths[0], cfg.in_channels, 3, padding=1)
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)

    def forward(self, z: torch.Tensor, deepest: torch.Tensor,
                pyramid: list[torch.Tensor]) -> torch.Tensor:
        """z (B, d, h, w) + content -> video (B, C, L, H, W) in [-1, 1]."""
        if z.shape[-2:] != deepest.shape[-2:]:
            raise ValueError(
                f"latent grid {tuple(z.shape[-2:])} does not match content grid "
                f"{tuple(deepest.shape[-2:])}"
            )
        b, _, h, w = z.shape
        fused = self.fuse(torch.cat([z, deepest], dim=1))
        x = self.expand(fused).view(b, -1, self.cfg.clip_length, h, w)
        x = self.deep_blocks(x)
        for up, skip, stage, feat in zip(self.ups, self.skips, self.stages, pyramid):
            x = up(x)
            feat3d = feat.unsqueeze(2).expand(-1, -1, x.shape[2], -1, -1)
            x = skip(torch.cat([x, feat3d], dim=1))
            x = stage(x)
        x = self.head(F.silu(self.head_norm(x)))
        return torch.tanh(x)


class MotionContentAutoencoder(nn.Module):
    def __init__(self, cfg: AutoencoderConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.image_encoder = ImageEncoder(cfg)
        self.motion_encoder = MotionEncoder(cfg)
        self.decoder = FusionDecoder(cfg)

    # ---- batched, channels-first paths used by training ----

    def encode_content_batch(self, frames: torch.Tensor):
        return self.image_encoder(frames)

    def encode_motion_batch(self, videos: torch.Tensor, sample: bool,
                            generator: torch.Generator | None = None):
        mu, sigma = self.motion_encoder(videos)
        if sample:
            eps = torch.randn(mu.shape, generator=generator, dtype=mu.dtype, device=mu.device)
            z = reparameterize(mu, sigma, eps)
        else:
            z = mu
        return mu, sigma, normalize_latent(z)

    def decode_batch(self, z: torch.Tensor, deepest: torch.Tensor,
                     pyramid: list[torch.Tensor]) -> torch.Tensor:
        return self.decoder(z, deepest, pyramid)

    def reconstruct_batch(self, videos: torch.Tensor, sample: bool = False,
                          generator: torch.Generator | None = None):
        deepest, pyramid = self.encode_content_batch(videos[:, :, 0])
        mu, sigma, z = self.encode_motion_batch(videos, sample, generator)
        recon = self.decode_batch(z, deepest, pyramid)
        return recon, mu, sigma, z

    # ---- spec-level single-clip API ----

    @torch.no_grad()
    def encode_content(self, first_frame: torch.Tensor) -> ContentFeatures:
        """(H, W, C) frame in [-1, 1] -> content feature pyramid."""
        if first_frame.ndim != 3:
            raise ValueError(f"first_frame must be (H, W, C), got {tuple(first_frame.shape)}")
        if torch.min(first_frame).item() < -1.0 - 1e-6 or torch.max(first_frame).item() > 1.0 + 1e-6:
            raise ValueError("first_frame values must lie in [-1, 1]")
        f = self.cfg.spatial_factor
        hgt, wid, _ = first_frame.shape
        if hgt % f or wid % f:
            raise ValueError(f"frame dims {hgt}x{wid} not divisible by f_s={f}")
        x = first_frame.movedim(-1, 0).unsqueeze(0)
        deepest, pyramid = self.image_encoder(x)
        return ContentFeatures(
            deepest=deepest[0].movedim(0, -1),
            pyramid=[p[0].movedim(0, -1) for p in pyramid],
        )

    @torch.no_grad()
    def encode_motion(self, video: torch.Tensor, sample: bool = False,
                      rng_seed: int = 0) -> tuple[MotionPosterior, LatentMotion]:
        """(L, H, W, C) video -> (posterior, normalized latent). Deterministic
        in mu-mode; sampling draws eps from a generator seeded with rng_seed."""
        check_video(video)
        if video.shape[0] != self.cfg.clip_length:
            raise ValueError(
                f"clip length {video.shape[0]} does not match configured "
                f"{self.cfg.clip_length}"
            )
        x = to_channels_first(video).unsqueeze(0)
        generator = torch.Generator(device=x.device).manual_seed(rng_seed) if sample else None
        mu, sigma, z = self.encode_motion_batch(x, sample=sample, generator=generator)
        posterior = MotionPosterior(mu=mu[0].movedim(0, -1), sigma=sigma[0].movedim(0, -1))
        return posterior, LatentMotion(z=z[0].movedim(0, -1), normalized=True)

    @torch.no_grad()
    def decode(self, z: LatentMotion, content: ContentFeatures) -> torch.Tensor:
        """(latent, content) -> (L, H, W, C) video in [-1, 1]."""
        if not z.normalized:
            raise ValueError("decode requires a normalized LatentMotion")
        zb = z.z.movedim(-1, 0).unsqueeze(0)
        deepest = content.deepest.movedim(-1, 0).unsqueeze(0)
        pyramid = [p.movedim(-1, 0).unsqueeze(0) for p in content.pyramid]
        out = self.decode_batch(zb, deepest, pyramid)
        return to_frames_last(out[0])
