"""2D UNet noise predictor over motion latents with cross-attention conditioning."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass(frozen=True)
class EpsNetConfig:
    latent_channels: int = 3
    base_channels: int = 48
    channel_multipliers: tuple[int, ...] = (1, 2, 4)
    blocks_per_resolution: int = 2
    attention_levels: tuple[int, ...] = (1, 2, 4)   # downsampling factors with attention
    cond_dim: int = 128
    heads: int = 4

    def validate(self):
        if not self.channel_multipliers:
            raise ValueError("channel_multipliers must be non-empty")
        if list(self.channel_multipliers) != sorted(self.channel_multipliers):
            raise ValueError("channel_multipliers must be ascending or flat")
        if self.cond_dim <= 0:
            raise ValueError("cond_dim must be positive")
        return self


def timestep_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Sinusoidal embedding of integer timesteps, (B,) -> (B, dim)."""
    half = dim // 2
    freqs = torch.exp(-math.log(10_000.0) * torch.arange(half, dtype=torch.float32,
                                                         device=t.device) / half)
    args = t.float()[:, None] * freqs[None, :]
    emb = torch.cat([torch.cos(args), torch.sin(args)], dim=1)
    if dim % 2:
        emb = F.pad(emb, (0, 1))
    return emb


def _norm(c: int) -> nn.GroupNorm:
    g = min(8, c)
    while c % g:
        g -= 1
    return nn.GroupNorm(g, c)


class TimedResBlock(nn.Module):
    def __init__(self, c_in: int, c_out: int, emb_dim: int):
        super().__init__()
        self.norm1 = _norm(c_in)
        self.conv1 = nn.Conv2d(c_in, c_out, 3, padding=1)
        self.emb_proj = nn.Linear(emb_dim, c_out)
        self.norm2 = _norm(c_out)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, padding=1)
        self.skip = nn.Conv2d(c_in, c_out, 1) if c_in != c_out else nn.Identity()

    def forward(self, x, emb):
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.emb_proj(F.silu(emb))[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return self.skip(x) + h


class AttentionBlock(nn.Module):
    """Self-attention over latent positions, then cross-attention to condition tokens."""

    def __init__(self, channels: int, cond_dim: int, heads: int):
        super().__init__()
        self.heads = heads
        self.norm_self = _norm(channels)
        self.qkv = nn.Conv2d(channels, channels * 3, 1)
        self.proj_self = nn.Conv2d(channels, channels, 1)
        self.norm_cross = _norm(channels)
        self.q_cross = nn.Conv2d(channels, channels, 1)
        self.kv_cross = nn.Linear(cond_dim, channels * 2)
        self.proj_cross = nn.Conv2d(channels, channels, 1)

    def _split(self, x: torch.Tensor) -> torch.Tensor:
        b, n, c = x.shape
        return x.view(b, n, self.heads, c // self.heads).transpose(1, 2)

    def forward(self, x: torch.Tensor, cond: torch.Tensor,
                cond_mask: torch.Tensor | None = None) -> torch.Tensor:
        b, c, h, w = x.shape
        qkv = self.qkv(self.norm_self(x)).flatten(2).transpose(1, 2)
        q, k, v = qkv.chunk(3, dim=2)
        out = F.scaled_dot_product_attention(self._split(q), self._split(k), self._split(v))
        out = out.transpose(1, 2).reshape(b, h * w, c).transpose(1, 2).view(b, c, h, w)
        x = x + self.proj_self(out)

        q = self.q_cross(self.norm_cross(x)).flatten(2).transpose(1, 2)
        k, v = self.kv_cross(cond).chunk(2, dim=2)
        attn_mask = None
        if cond_mask is not None:
            # True marks tokens to ignore (padding / dropped captions)
            attn_mask = ~cond_mask[:, None, None, :]
        out = F.scaled_dot_product_attention(self._split(q), self._split(k),
                                             self._split(v), attn_mask=attn_mask)
        out = out.transpose(1, 2).reshape(b, h * w, c).transpose(1, 2).view(b, c, h, w)
        return x + self.proj_cross(out)


class Downsample(nn.Module):
    def __init__(self, c: int):
        super().__init__()
        self.conv = nn.Conv2d(c, c, 3, stride=2, padding=1)

    def forward(self, x):
        return self.conv(x)


class Upsample(nn.Module):
    def __init__(self, c: int):
        super().__init__()
        self.conv = nn.Conv2d(c, c, 3, padding=1)

    def forward(self, x):
        return self.conv(F.interpolate(x, scale_factor=2, mode="nearest"))


class NoiseUNet(nn.Module):
    """eps_theta(z_t, t, cond): predicts the noise component of a motion latent."""

    def __init__(self, cfg: EpsNetConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        base = cfg.base_channels
        emb_dim = 4 * base
        self.time_mlp = nn.Sequential(
            nn.Linear(base, emb_dim), nn.SiLU(), nn.Linear(emb_dim, emb_dim)
        )
        widths = [base * m for m in cfg.channel_multipliers]
        self.stem = nn.Conv2d(cfg.latent_channels, widths[0], 3, padding=1)

        self.down_blocks = nn.ModuleList()
        self.downs = nn.ModuleList()
        skip_widths = [widths[0]]
        c = widths[0]
        for i, w in enumerate(widths):
            level = nn.ModuleList()
            attn = 2 ** i in cfg.attention_levels
            for _ in range(cfg.blocks_per_resolution):
                blk = nn.ModuleDict({"res": TimedResBlock(c, w, emb_dim)})
                if attn:
                    blk["attn"] = AttentionBlock(w, cfg.cond_dim, cfg.heads)
                level.append(blk)
                c = w
                skip_widths.append(c)
            self.down_blocks.append(level)
            if i + 1 < len(widths):
                self.downs.append(Downsample(c))
                skip_widths.append(c)

        self.mid_res1 = TimedResBlock(c, c, emb_dim)
        self.mid_attn = AttentionBlock(c, cfg.cond_dim, cfg.heads)
        self.mid_res2 = TimedResBlock(c, c, emb_dim)

        self.up_blocks = nn.ModuleList()
        self.ups = nn.ModuleList()
        for i in reversed(range(len(widths))):
            w = widths[i]
            attn = 2 ** i in cfg.attention_levels
            level = nn.ModuleList()
            for _ in range(cfg.blocks_per_resolution + 1):
                blk = nn.ModuleDict({"res": TimedResBlock(c + skip_widths.pop(), w, emb_dim)})
                if attn:
                    blk["attn"] = AttentionBlock(w, cfg.cond_dim, cfg.heads)
                level.append(blk)
                c = w
            self.up_blocks.append(level)
            if i > 0:
                self.ups.append(Upsample(c))

        self.out_norm = _norm(c)
        self.out_conv = nn.Conv2d(c, cfg.latent_channels, 3, padding=1)
        nn.init.zeros_(self.out_conv.weight)
        nn.init.zeros_(self.out_conv.bias)

    def forward(self, z: torch.Tensor, t: torch.Tensor, cond: torch.Tensor,
                cond_mask: torch.Tensor | None = None) -> torch.Tensor:
        """z (B, d, h, w), t (B,) int64, cond (B, N, cond_dim) -> (B, d, h, w)."""
        if cond.shape[-1] != self.cfg.cond_dim:
            raise ValueError(f"condition dim {cond.shape[-1]} != configured {self.cfg.cond_dim}")
        emb = self.time_mlp(timestep_embedding(t, self.cfg.base_channels).to(z.dtype))
        h = self.stem(z)
        skips = [h]
        for i, level in enumerate(self.down_blocks):
            for blk in level:
                h = blk["res"](h, emb)
                if "attn" in blk:
                    h = blk["attn"](h, cond, cond_mask)
                skips.append(h)
            if i < len(self.downs):
                h = self.downs[i](h)
                skips.append(h)

        h = self.mid_res1(h, emb)
        h = self.mid_attn(h, cond, cond_mask)
        h = self.mid_res2(h, emb)

        for i, level in enumerate(self.up_blocks):
            for blk in level:
                h = blk["res"](torch.cat([h, skips.pop()], dim=1), emb)
                if "attn" in blk:
                    h = blk["attn"](h, cond, cond_mask)
            if i < len(self.ups):
                h = self.ups[i](h)

        return self.out_conv(F.silu(self.out_norm(h)))
