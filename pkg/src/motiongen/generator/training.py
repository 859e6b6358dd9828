"""Training step for the diffusion motion generator (noise-prediction MSE)."""

from __future__ import annotations

import numpy as np
import torch

from ..diffusion import DiffusionSchedule
from .conditioning import ConditionEncoder
from .unet import NoiseUNet


class TrainingDiverged(RuntimeError):
    pass


def q_sample_batch(z0: torch.Tensor, t: torch.Tensor, eps: torch.Tensor,
                   sched: DiffusionSchedule) -> torch.Tensor:
    """Vectorized forward marginal for per-sample timesteps t (B,) in [1, T]."""
    if z0.shape != eps.shape:
        raise ValueError("z0/eps shape mismatch")
    ab = torch.from_numpy(sched.alpha_bars).to(z0.dtype)[t - 1]
    while ab.ndim < z0.ndim:
        ab = ab.unsqueeze(-1)
    return torch.sqrt(ab) * z0 + torch.sqrt(1.0 - ab) * eps


class DiffusionTrainer:
    """Owns the noise predictor, condition encoder, and their joint optimizer.

    The motion latents fed to train_step must come from the frozen
    autoencoder in mu-mode; freezing is the caller's contract and is audited
    by the harness (any drift of autoencoder parameters during this stage is
    a hard failure).
    """

    def __init__(self, eps_net: NoiseUNet, cond_encoder: ConditionEncoder,
                 sched: DiffusionSchedule, *, lr: float = 2e-4, seed: int = 0):
        self.eps_net = eps_net
        self.cond_encoder = cond_encoder
        self.sched = sched
        self.seed = seed
        params = list(eps_net.parameters()) + list(cond_encoder.parameters())
        self.optimizer = torch.optim.Adam(params, lr=lr)
        self.step_count = 0

    def train_step(self, z0: torch.Tensor, deepest: torch.Tensor,
                   captions: list[tuple[int, ...] | None] | None,
                   step: int | None = None) -> float:
        """z0 (B, d, h, w) normalized latents; deepest (B, C, h, w) content.

        Draws per-sample timesteps uniformly from [1, T] and standard-normal
        noise, then minimizes ||eps_hat - eps||^2 (mean over elements).
        """
        if step is None:
            step = self.step_count
        gen = torch.Generator().manual_seed(self.seed * 9_176_941 + step)
        b = z0.shape[0]
        t = torch.randint(1, self.sched.T + 1, (b,), generator=gen)
        eps = torch.randn(z0.shape, generator=gen, dtype=z0.dtype)
        zt = q_sample_batch(z0, t, eps, self.sched)

        self.eps_net.train()
        self.cond_encoder.train()
        tokens, mask = self.cond_encoder.encode_batch(deepest, captions)
        eps_hat = self.eps_net(zt, t, tokens, mask)
        loss = (eps_hat - eps).square().mean()
        if not torch.isfinite(loss):
            raise TrainingDiverged(f"non-finite diffusion loss at step {step}")
        self.optimizer.zero_grad(set_to_none=True)
        loss.backward()
        self.optimizer.step()
        self.step_count = step + 1
        return float(loss.item())


def noise_prediction_loss(eps_net: NoiseUNet, z0: torch.Tensor, t: torch.Tensor,
                          eps: torch.Tensor, tokens: torch.Tensor,
                          mask: torch.Tensor | None, sched: DiffusionSchedule,
                          ) -> torch.Tensor:
    """The bare objective (no optimizer step); used by gradient checks."""
    zt = q_sample_batch(z0, t, eps, sched)
    return (eps_net(zt, t, tokens, mask) - eps).square().mean()
