"""Pluggable perceptual distance between videos.

The default backend is a small convolutional feature extractor with frozen,
seed-determined random weights: dependency-free, reproducible run to run,
and sensitive to structure rather than raw pixel offsets. A hook for an
external pretrained network is provided for users who want calibrated
perceptual numbers; nothing in this package requires one.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F


class SeededConvFeatures(nn.Module):
    """Frozen random conv stack; per-frame multi-layer feature distance."""

    def __init__(self, in_channels: int = 3, base: int = 16, seed: int = 710):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        layers = []
        c = in_channels
        for width in (base, base * 2, base * 4):
            conv = nn.Conv2d(c, width, 4, stride=2, padding=1)
            with torch.no_grad():
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=gen)
                                  * (2.0 / conv.weight[0].numel()) ** 0.5)
                conv.bias.zero_()
            layers.append(conv)
            c = width
        self.convs = nn.ModuleList(layers)
        for p in self.parameters():
            p.requires_grad_(False)

    def features(self, frames: torch.Tensor) -> list[torch.Tensor]:
        feats = []
        h = frames
        for conv in self.convs:
            h = F.leaky_relu(conv(h), 0.2)
            feats.append(h)
        return feats

    def forward(self, x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
        """Frame batches (N, C, H, W) -> scalar distance (mean over frames)."""
        total = 0.0
        for fx, fy in zip(self.features(x), self.features(y)):
            # epsilon inside the sqrt: an exactly-zero feature map must not
            # produce a NaN in the backward pass
            nx = fx / (fx.square().sum(dim=1, keepdim=True) + 1e-10).sqrt()
            ny = fy / (fy.square().sum(dim=1, keepdim=True) + 1e-10).sqrt()
            total = total + (nx - ny).square().sum(dim=1).mean(dim=(1, 2))
        return total.mean()


class PerceptualLoss(nn.Module):
    """Dispatches to the configured backend; videos are (B, C, L, H, W)."""

    def __init__(self, backend: str = "seeded_conv", external: nn.Module | None = None):
        super().__init__()
        if backend == "seeded_conv":
            self.impl = SeededConvFeatures()
        elif backend == "external":
            if external is None:
                raise ValueError("backend 'external' requires a module computing "
                                 "a frame-batch distance")
            self.impl = external
        else:
            raise ValueError(f"unknown perceptual backend {backend!r}")

    def forward(self, x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
        if x.shape != y.shape:
            raise ValueError(f"shape mismatch {tuple(x.shape)} vs {tuple(y.shape)}")
        b, c, l, hh, ww = x.shape
        xf = x.movedim(2, 1).reshape(b * l, c, hh, ww)
        yf = y.movedim(2, 1).reshape(b * l, c, hh, ww)
        return self.impl(xf, yf)


def perceptual_distance(x: torch.Tensor, y: torch.Tensor,
                        loss: PerceptualLoss | None = None) -> float:
    """Distance between two (L, H, W, C) videos under the default backend."""
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {tuple(x.shape)} vs {tuple(y.shape)}")
    if loss is None:
        loss = PerceptualLoss()
    xb = x.permute(3, 0, 1, 2).unsqueeze(0)  # (1, C, L, H, W)
    yb = y.permute(3, 0, 1, 2).unsqueeze(0)
    with torch.no_grad():
        return float(loss(xb, yb).item())
