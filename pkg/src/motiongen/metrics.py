"""Quantitative evaluation: PSNR, SSIM, and Fréchet feature distance.

The Fréchet metric runs over a frozen, seed-determined frame embedder (with
optional temporal pooling for clip-level stats); values are reproducible
run to run but make no claim of parity with Inception/I3D-based scores.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

PSNR_CAP_DB = 100.0
COVARIANCE_SHRINKAGE = 1e-6
_GAUSS_SIGMA = 1.5
_WINDOW = 11
_K1, _K2 = 0.01, 0.03


def psnr(x: torch.Tensor, y: torch.Tensor) -> float:
    """Peak signal-to-noise ratio in dB over [0, 1]-mapped videos, capped at 100."""
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {tuple(x.shape)} vs {tuple(y.shape)}")
    mse = ((x - y) / 2.0).square().mean().item()
    if mse <= 0.0:
        return PSNR_CAP_DB
    return min(10.0 * math.log10(1.0 / mse), PSNR_CAP_DB)


def _gaussian_window(device, dtype) -> torch.Tensor:
    half = (_WINDOW - 1) / 2.0
    coords = torch.arange(_WINDOW, device=device, dtype=dtype) - half
    g = torch.exp(-coords.square() / (2.0 * _GAUSS_SIGMA ** 2))
    g = g / g.sum()
    return torch.outer(g, g)


def ssim(x: torch.Tensor, y: torch.Tensor) -> float:
    """Mean structural similarity over frames and channels.

    Standard 11x11 Gaussian window (sigma 1.5), constants k1=0.01, k2=0.03,
    population statistics, computed on the [0, 1] mapping of the inputs.
    """
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {tuple(x.shape)} vs {tuple(y.shape)}")
    if x.ndim == 3:
        x = x.unsqueeze(0)
        y = y.unsqueeze(0)
    L, H, W, C = x.shape
    if H < _WINDOW or W < _WINDOW:
        raise ValueError(f"frames {H}x{W} smaller than the {_WINDOW}x{_WINDOW} window")
    xa = ((x + 1.0) / 2.0).movedim(-1, 1).reshape(L * C, 1, H, W).double()
    ya = ((y + 1.0) / 2.0).movedim(-1, 1).reshape(L * C, 1, H, W).double()
    win = _gaussian_window(xa.device, xa.dtype).view(1, 1, _WINDOW, _WINDOW)

    mu_x = F.conv2d(xa, win)
    mu_y = F.conv2d(ya, win)
    xx = F.conv2d(xa * xa, win) - mu_x * mu_x
    yy = F.conv2d(ya * ya, win) - mu_y * mu_y
    xy = F.conv2d(xa * ya, win) - mu_x * mu_y
    c1 = (_K1 * 1.0) ** 2
    c2 = (_K2 * 1.0) ** 2
    num = (2 * mu_x * mu_y + c1) * (2 * xy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (xx + yy + c2)
    return float((num / den).mean().item())


@dataclass
class FeatureStats:
    mean: np.ndarray          # (D,)
    covariance: np.ndarray    # (D, D), symmetric PSD up to tolerance
    count: int

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.covariance = np.asarray(self.covariance, dtype=np.float64)
        if self.covariance.shape != (self.mean.size, self.mean.size):
            raise ValueError("covariance shape does not match mean dimension")
        asym = np.abs(self.covariance - self.covariance.T).max()
        if asym > 1e-8:
            raise ValueError(f"covariance asymmetry {asym:.3g} exceeds 1e-8")
        eigs = np.linalg.eigvalsh(self.covariance)
        if eigs.min() < -1e-8:
            raise ValueError(f"covariance has eigenvalue {eigs.min():.3g} < -1e-8")


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh((mat + mat.T) / 2.0)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(a: FeatureStats, b: FeatureStats) -> float:
    """||mu_a - mu_b||^2 + tr(Sig_a + Sig_b - 2 (Sig_a Sig_b)^(1/2)).

    The matrix square root is taken by eigendecomposition of the symmetrized
    product sqrt(Sig_a) Sig_b sqrt(Sig_a), clamping eigenvalues at zero.
    """
    if a.mean.shape != b.mean.shape:
        raise ValueError("feature dimension mismatch")
    diff = a.mean - b.mean
    root_a = _psd_sqrt(a.covariance)
    inner = root_a @ b.covariance @ root_a
    vals = np.linalg.eigvalsh((inner + inner.T) / 2.0)
    tr_sqrt = np.sqrt(np.clip(vals, 0.0, None)).sum()
    fd = float(diff @ diff + np.trace(a.covariance) + np.trace(b.covariance) - 2.0 * tr_sqrt)
    return max(fd, 0.0)


class FrozenFrameEmbedder(nn.Module):
    """Seeded random conv net mapping a frame batch to D-dim embeddings."""

    def __init__(self, dim: int = 32, in_channels: int = 3, seed: int = 1871):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        widths = (16, 32, dim)
        layers = []
        c = in_channels
        for w in widths:
            conv = nn.Conv2d(c, w, 4, stride=2, padding=1)
            with torch.no_grad():
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=gen)
                                  * (2.0 / conv.weight[0].numel()) ** 0.5)
                conv.bias.zero_()
            layers.append(conv)
            c = w
        self.convs = nn.ModuleList(layers)
        self.dim = dim
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, frames: torch.Tensor) -> torch.Tensor:
        h = frames
        for conv in self.convs:
            h = F.leaky_relu(conv(h), 0.2)
        return h.mean(dim=(2, 3))


_EMBEDDER: FrozenFrameEmbedder | None = None


def _embedder() -> FrozenFrameEmbedder:
    global _EMBEDDER
    if _EMBEDDER is None:
        _EMBEDDER = FrozenFrameEmbedder()
    return _EMBEDDER


def video_features(video: torch.Tensor, extractor: str) -> np.ndarray:
    """Feature rows for one (L, H, W, C) video.

    frame_features: one row per frame; clip_features: a single row made of
    the temporal mean and standard deviation of the frame features.
    """
    if video.ndim != 4:
        raise ValueError(f"video must be (L, H, W, C), got {tuple(video.shape)}")
    frames = video.permute(0, 3, 1, 2).float()
    with torch.no_grad():
        f = _embedder()(frames).cpu().numpy().astype(np.float64)
    if extractor == "frame_features":
        return f
    if extractor == "clip_features":
        return np.concatenate([f.mean(axis=0), f.std(axis=0)])[None, :]
    raise ValueError(f"unknown extractor {extractor!r}")


def extract_stats(videos: Iterable[torch.Tensor] | Iterator[torch.Tensor],
                  extractor: str = "clip_features") -> FeatureStats:
    """Gaussian statistics of the embedded sample set (two-pass, float64).

    Shrinkage of 1e-6 * I is always added to the covariance, which also
    covers the degenerate single-sample case.
    """
    rows = []
    for video in videos:
        rows.append(video_features(video, extractor))
    if not rows:
        raise ValueError("empty video iterator")
    feats = np.concatenate(rows, axis=0)
    n, d = feats.shape
    mean = feats.mean(axis=0)
    if n > 1:
        centered = feats - mean
        cov = centered.T @ centered / (n - 1)
    else:
        cov = np.zeros((d, d))
    cov = (cov + cov.T) / 2.0 + COVARIANCE_SHRINKAGE * np.eye(d)
    return FeatureStats(mean=mean, covariance=cov, count=n)


def merge_stats(a: FeatureStats, b: FeatureStats) -> FeatureStats:
    """Combine shard statistics (counts, means, covariances) exactly.

    Covariances are assumed to carry the same shrinkage term, which is
    preserved rather than double-counted.
    """
    n = a.count + b.count
    delta = b.mean - a.mean
    mean = a.mean + delta * (b.count / n)
    eye = COVARIANCE_SHRINKAGE * np.eye(a.mean.size)
    sa = (a.covariance - eye) * (a.count - 1)
    sb = (b.covariance - eye) * (b.count - 1)
    s = sa + sb + np.outer(delta, delta) * (a.count * b.count / n)
    cov = s / (n - 1) + eye
    return FeatureStats(mean=mean, covariance=(cov + cov.T) / 2.0, count=n)
