"""Shared tensor conventions.

Videos are (L, H, W, C) float32 in [-1, 1]; batches prepend a leading axis.
8-bit conversion uses round-half-away-from-zero so that exporting frames to
disk and reading them back is bit-exact for already-quantized videos.
"""

from __future__ import annotations

import numpy as np
import torch


def video_to_uint8(video: torch.Tensor | np.ndarray) -> np.ndarray:
    """Map [-1, 1] floats to uint8, rounding half away from zero."""
    arr = video.detach().cpu().numpy() if isinstance(video, torch.Tensor) else np.asarray(video)
    unit = np.clip((arr + 1.0) / 2.0, 0.0, 1.0)
    return np.floor(unit * 255.0 + 0.5).astype(np.uint8)


def video_from_uint8(arr: np.ndarray) -> torch.Tensor:
    """Inverse of video_to_uint8 up to the 8-bit grid."""
    unit = arr.astype(np.float32) / np.float32(255.0)
    return torch.from_numpy(unit * np.float32(2.0) - np.float32(1.0))


def check_video(video: torch.Tensor, what: str = "video") -> torch.Tensor:
    if video.ndim != 4:
        raise ValueError(f"{what} must be (L, H, W, C), got shape {tuple(video.shape)}")
    if torch.min(video).item() < -1.0 - 1e-6 or torch.max(video).item() > 1.0 + 1e-6:
        raise ValueError(f"{what} values must lie in [-1, 1]")
    return video


def to_channels_first(video: torch.Tensor) -> torch.Tensor:
    """(..., L, H, W, C) -> (..., C, L, H, W) for 3D convs."""
    return video.movedim(-1, -4).contiguous()


def to_frames_last(video: torch.Tensor) -> torch.Tensor:
    """(..., C, L, H, W) -> (..., L, H, W, C)."""
    return video.movedim(-4, -1).contiguous()
