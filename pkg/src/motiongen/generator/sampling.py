"""Conditional K-step sampler over motion latents."""

from __future__ import annotations

import torch

from ..autoencoder.model import LatentMotion
from ..diffusion import DiffusionSchedule, SamplingSubsequence, strided_reverse_step


class CallCounter:
    """Wraps the noise predictor to count invocations (used by tests/benchmarks)."""

    def __init__(self, eps_net):
        self.eps_net = eps_net
        self.calls = 0

    def __call__(self, *args, **kwargs):
        self.calls += 1
        return self.eps_net(*args, **kwargs)


@torch.no_grad()
def sample_motion_batch(eps_net, tokens: torch.Tensor, mask: torch.Tensor | None,
                        latent_shape: tuple[int, int, int], sched: DiffusionSchedule,
                        subseq: SamplingSubsequence, rng_seed: int,
                        sigma_rule: str = "beta",
                        emit_at: list[int] | None = None,
                        ) -> tuple[torch.Tensor, dict[int, torch.Tensor]]:
    """Reverse diffusion from pure noise, visiting only the subsequence steps.

    tokens (B, N, D) conditioning; returns the final latent batch (B, d, h, w)
    plus, when emit_at is given, intermediate latents keyed by the requested
    timesteps (each mapped to the nearest visited boundary; T maps to the
    initial noise, 0 to the final output).
    """
    if subseq.indices[-1] != sched.T:
        raise ValueError(f"subsequence ends at {subseq.indices[-1]}, schedule has T={sched.T}")
    b = tokens.shape[0]
    d, h, w = latent_shape
    gen = torch.Generator().manual_seed(rng_seed)
    z = torch.randn((b, d, h, w), generator=gen)
    visited: dict[int, torch.Tensor] = {}
    want = sorted(set(emit_at)) if emit_at else []
    if want:
        visited[sched.T] = z.clone()

    indices = list(subseq.indices)
    for k in range(len(indices) - 1, -1, -1):
        t = indices[k]
        t_prev = indices[k - 1] if k > 0 else 0
        t_batch = torch.full((b,), t, dtype=torch.long)
        eps_hat = eps_net(z, t_batch, tokens, mask)
        noise = torch.randn(z.shape, generator=gen, dtype=z.dtype)
        z = strided_reverse_step(z, t, t_prev, eps_hat, sched, noise, sigma_rule)
        if want:
            visited[t_prev] = z.clone()

    intermediates: dict[int, torch.Tensor] = {}
    if want:
        boundaries = sorted(visited)
        for req in want:
            nearest = min(boundaries, key=lambda bdy: (abs(bdy - req), bdy))
            intermediates[req] = visited[nearest]
    return z, intermediates


@torch.no_grad()
def sample_motion(eps_net, bundle, latent_shape: tuple[int, int, int],
                  sched: DiffusionSchedule, subseq: SamplingSubsequence,
                  rng_seed: int, sigma_rule: str = "beta",
                  emit_at: list[int] | None = None,
                  ) -> tuple[LatentMotion, list[tuple[int, LatentMotion]]]:
    """Single-sample convenience wrapper around sample_motion_batch.

    Takes a ConditionBundle, returns the final motion latent in the (h, w, d)
    layout plus (timestep, latent) intermediates. The raw sampler output is
    not standardized; callers re-normalize before decoding.
    """
    tokens = bundle.combined.unsqueeze(0)
    z, inter = sample_motion_batch(eps_net, tokens, None, latent_shape, sched,
                                   subseq, rng_seed, sigma_rule, emit_at)
    latent = LatentMotion(z=z[0].movedim(0, -1), normalized=False)
    extras = [(t, LatentMotion(z=v[0].movedim(0, -1), normalized=False))
              for t, v in sorted(inter.items(), reverse=True)]
    return latent, extras
