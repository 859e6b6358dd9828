"""Training step for the video autoencoder (generator/discriminator alternation)."""

from __future__ import annotations

import torch

from .discriminator import VideoPatchDiscriminator
from .losses import (
    VaeLossBreakdown,
    adaptive_gan_weight,
    discriminator_loss,
    generator_adversarial,
    kl_to_standard_normal,
    l1_reconstruction,
)
from .model import MotionContentAutoencoder
from .perceptual import PerceptualLoss


class TrainingDiverged(RuntimeError):
    """Raised when a step produces a non-finite loss; the step is not applied."""


def _step_generator(seed: int, step: int) -> torch.Generator:
    return torch.Generator().manual_seed(seed * 1_000_003 + step)


class VaeTrainer:
    """Owns the autoencoder, discriminator, and both optimizers.

    One call to train_step performs the generator-side update (L1 +
    perceptual + beta*KL + lambda*adversarial) and, once past the warm-up
    step, the discriminator update. Noise draws are derived from (seed,
    step) so a step is bit-reproducible given the same batch.
    """

    def __init__(self, model: MotionContentAutoencoder, *, beta: float = 1e-2,
                 perceptual_weight: float = 4096.0, lr: float = 1e-3,
                 disc_lr: float = 1e-3, warmup_steps: int = 0, seed: int = 0,
                 perceptual_backend: str = "seeded_conv",
                 disc_base: int = 32, lambda_clip: float = 5.0,
                 adam_betas: tuple[float, float] = (0.9, 0.99)):
        self.model = model
        self.discriminator = VideoPatchDiscriminator(model.cfg.in_channels, base=disc_base)
        self.perceptual = PerceptualLoss(backend=perceptual_backend)
        self.beta = beta
        self.perceptual_weight = perceptual_weight
        self.warmup_steps = warmup_steps
        self.lambda_clip = lambda_clip
        self.seed = seed
        self.opt_g = torch.optim.Adam(model.parameters(), lr=lr, betas=adam_betas)
        self.opt_d = torch.optim.Adam(self.discriminator.parameters(), lr=disc_lr,
                                      betas=adam_betas)
        self.step_count = 0

    def _adaptive_weight(self, rec_loss: torch.Tensor, g_adv: torch.Tensor) -> float:
        last = self.model.decoder.head.weight
        rec_grad = torch.autograd.grad(rec_loss, last, retain_graph=True)[0]
        gan_grad = torch.autograd.grad(g_adv, last, retain_graph=True)[0]
        return adaptive_gan_weight(rec_grad.norm().item(), gan_grad.norm().item())

    def train_step(self, videos: torch.Tensor, step: int | None = None) -> VaeLossBreakdown:
        """videos: (B, C, L, H, W) in [-1, 1]. Returns the loss breakdown."""
        if step is None:
            step = self.step_count
        gen = _step_generator(self.seed, step)
        self.model.train()

        recon, mu, sigma, _ = self.model.reconstruct_batch(videos, sample=True, generator=gen)
        l1 = l1_reconstruction(videos, recon)
        perc = self.perceptual_weight * self.perceptual(videos, recon)
        kl = kl_to_standard_normal(mu, sigma)
        rec_loss = l1 + perc

        use_gan = step >= self.warmup_steps
        if use_gan:
            logits_fake = self.discriminator(recon)
            g_adv = generator_adversarial(logits_fake)
            # adaptive ratio, further bounded by the configured clip
            lam = min(self._adaptive_weight(rec_loss, g_adv), self.lambda_clip)
        else:
            g_adv = torch.zeros((), dtype=videos.dtype)
            lam = 0.0

        total = rec_loss + self.beta * kl + lam * g_adv
        if not torch.isfinite(total):
            raise TrainingDiverged(
                f"non-finite generator loss at step {step}: "
                f"l1={l1.item():.4g} perc={perc.item():.4g} kl={kl.item():.4g}"
            )
        self.opt_g.zero_grad(set_to_none=True)
        total.backward()
        self.opt_g.step()

        d_value = 0.0
        if use_gan:
            logits_real = self.discriminator(videos)
            logits_fake = self.discriminator(recon.detach())
            d_loss = discriminator_loss(logits_real, logits_fake)
            if not torch.isfinite(d_loss):
                raise TrainingDiverged(f"non-finite discriminator loss at step {step}")
            self.opt_d.zero_grad(set_to_none=True)
            d_loss.backward()
            self.opt_d.step()
            d_value = -d_loss.item()  # log D(x) + log(1 - D(x_hat))

        self.step_count = step + 1
        return VaeLossBreakdown(
            l1=l1.item(),
            perceptual=perc.item(),
            kl=kl.item(),
            gan_generator=g_adv.item() if use_gan else 0.0,
            gan_discriminator=d_value,
            lambda_adaptive=lam,
            total=total.item(),
            beta=self.beta,
        )
