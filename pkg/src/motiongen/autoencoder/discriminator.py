"""Small 3D patch discriminator over video clips."""

from __future__ import annotations

import torch
import torch.nn as nn

from .blocks import group_norm


class VideoPatchDiscriminator(nn.Module):
    """Conv3d stack producing a logits map over spatio-temporal patches."""

    def __init__(self, in_channels: int = 3, base: int = 32):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv3d(in_channels, base, (3, 4, 4), stride=(1, 2, 2), padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv3d(base, base * 2, (4, 4, 4), stride=2, padding=1),
            group_norm(base * 2),
            nn.LeakyReLU(0.2),
            nn.Conv3d(base * 2, base * 4, (4, 4, 4), stride=2, padding=1),
            group_norm(base * 4),
            nn.LeakyReLU(0.2),
            nn.Conv3d(base * 4, 1, 3, padding=1),
        )

    def forward(self, video: torch.Tensor) -> torch.Tensor:
        """(B, C, L, H, W) -> patch logits."""
        return self.net(video)
