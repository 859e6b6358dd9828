"""Loss terms for the autoencoder stage.

Conventions: the reconstruction L1 is summed over all pixels of a clip and
averaged over the batch (matching the sum-form objective the KL weight beta
is calibrated against); the KL term is likewise summed over latent elements
and batch-averaged. The adversarial terms use the log form with a
non-saturating generator objective.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

ADAPTIVE_WEIGHT_CLIP = 1e4
ADAPTIVE_WEIGHT_EPS = 1e-6


@dataclass
class VaeLossBreakdown:
    l1: float
    perceptual: float
    kl: float
    gan_generator: float
    gan_discriminator: float
    lambda_adaptive: float
    total: float
    beta: float

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("l1", "perceptual", "kl", "gan_generator", "gan_discriminator",
                 "lambda_adaptive", "total", "beta")}


def l1_reconstruction(x: torch.Tensor, x_hat: torch.Tensor) -> torch.Tensor:
    """Sum of absolute errors per clip, averaged over the batch."""
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch {tuple(x.shape)} vs {tuple(x_hat.shape)}")
    return (x - x_hat).abs().flatten(1).sum(dim=1).mean()


def kl_to_standard_normal(mu: torch.Tensor, sigma: torch.Tensor) -> torch.Tensor:
    """0.5 * sum(mu^2 + sigma^2 - 1 - log sigma^2), batch-averaged.

    Accepts (h, w, d) posteriors or batches thereof; a missing batch axis is
    treated as batch size 1.
    """
    if torch.any(sigma <= 0):
        raise ValueError("sigma must be strictly positive")
    per_element = 0.5 * (mu.square() + sigma.square() - 1.0 - torch.log(sigma.square()))
    if per_element.ndim == 3:
        return per_element.sum()
    return per_element.flatten(1).sum(dim=1).mean()


def adaptive_gan_weight(grad_rec_norm: float, grad_gan_norm: float) -> float:
    """Gradient-norm ratio balancing the adversarial term, clipped to [0, 1e4]."""
    if grad_rec_norm < 0 or grad_gan_norm < 0:
        raise ValueError("gradient norms must be non-negative")
    lam = grad_rec_norm / (grad_gan_norm + ADAPTIVE_WEIGHT_EPS)
    return float(min(max(lam, 0.0), ADAPTIVE_WEIGHT_CLIP))


def generator_adversarial(logits_fake: torch.Tensor) -> torch.Tensor:
    """Non-saturating generator term: -log D(x_hat)."""
    return F.softplus(-logits_fake).mean()


def discriminator_loss(logits_real: torch.Tensor, logits_fake: torch.Tensor) -> torch.Tensor:
    """Negative of log D(x) + log(1 - D(x_hat)); the discriminator minimizes this."""
    return F.softplus(-logits_real).mean() + F.softplus(logits_fake).mean()
