"""Closed-form DDPM arithmetic: noise schedules, forward marginals, reverse steps.

Everything here is a pure function of its inputs. Timesteps are 1-based
(t in [1, T]); the backing arrays are 0-indexed, and the schedule accessors
handle the offset. Schedule arithmetic is float64 throughout; the tensors
being noised/denoised may be float32.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch


@dataclass(frozen=True)
class DiffusionSchedule:
    """Variance schedule: betas plus the derived alpha / cumulative-alpha arrays."""

    T: int
    betas: np.ndarray          # (T,) float64, values in (0, 1)
    alphas: np.ndarray         # (T,) float64, alpha_t = 1 - beta_t
    alpha_bars: np.ndarray     # (T,) float64, cumulative product of alphas
    schedule_kind: str = "linear"

    def __post_init__(self):
        if self.T < 1:
            raise ValueError(f"T must be >= 1, got {self.T}")
        for name in ("betas", "alphas", "alpha_bars"):
            arr = getattr(self, name)
            if len(arr) != self.T:
                raise ValueError(f"{name} has length {len(arr)}, expected T={self.T}")
        if not np.all((self.betas > 0.0) & (self.betas < 1.0)):
            raise ValueError("all betas must lie strictly inside (0, 1)")
        if not np.allclose(self.alphas, 1.0 - self.betas, rtol=0, atol=0):
            raise ValueError("alphas must equal 1 - betas exactly")
        if self.T > 1 and not np.all(np.diff(self.alpha_bars) < 0.0):
            raise ValueError("alpha_bars must be strictly decreasing")

    def _check_t(self, t: int) -> int:
        if not 1 <= t <= self.T:
            raise ValueError(f"timestep {t} out of range [1, {self.T}]")
        return t - 1

    def beta(self, t: int) -> float:
        return float(self.betas[self._check_t(t)])

    def alpha(self, t: int) -> float:
        return float(self.alphas[self._check_t(t)])

    def alpha_bar(self, t: int) -> float:
        """Cumulative product of alphas up to and including t; alpha_bar(0) = 1."""
        if t == 0:
            return 1.0
        return float(self.alpha_bars[self._check_t(t)])

    def to_dict(self) -> dict:
        return {"kind": self.schedule_kind, "T": self.T,
                "beta_start": float(self.betas[0]), "beta_end": float(self.betas[-1])}

    @staticmethod
    def from_dict(d: dict) -> "DiffusionSchedule":
        if d.get("kind", "linear") != "linear":
            raise ValueError(f"unknown schedule kind {d.get('kind')!r}")
        return make_linear_schedule(int(d["T"]), float(d["beta_start"]), float(d["beta_end"]))


@dataclass(frozen=True)
class SamplingSubsequence:
    """Strictly ascending timestep indices used for strided sampling; ends at T."""

    indices: tuple[int, ...]
    K: int = field(init=False, default=0)

    def __post_init__(self):
        if len(self.indices) == 0:
            raise ValueError("subsequence must be non-empty")
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            raise ValueError("indices must be strictly ascending")
        object.__setattr__(self, "K", len(self.indices))


def make_linear_schedule(T: int, beta_start: float = 1e-4, beta_end: float = 0.02) -> DiffusionSchedule:
    """Betas linearly spaced from beta_start to beta_end inclusive over T steps."""
    if T < 1:
        raise ValueError(f"T must be a positive integer, got {T}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError(f"beta bounds must satisfy 0 < start <= end < 1, got ({beta_start}, {beta_end})")
    if T == 1:
        betas = np.asarray([beta_start], dtype=np.float64)
    else:
        betas = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    return DiffusionSchedule(T=T, betas=betas, alphas=alphas, alpha_bars=alpha_bars)


def _check_shapes(a: torch.Tensor, b: torch.Tensor, what: str):
    if a.shape != b.shape:
        raise ValueError(f"{what}: shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")


def q_sample(z0: torch.Tensor, t: int, eps: torch.Tensor, sched: DiffusionSchedule) -> torch.Tensor:
    """Forward marginal: sqrt(abar_t) * z0 + sqrt(1 - abar_t) * eps."""
    _check_shapes(z0, eps, "q_sample")
    ab = sched.alpha_bar(t)
    return np.sqrt(ab) * z0 + np.sqrt(1.0 - ab) * eps


def predict_x0_from_eps(zt: torch.Tensor, t: int, eps_hat: torch.Tensor,
                        sched: DiffusionSchedule) -> torch.Tensor:
    """Invert the forward marginal: (zt - sqrt(1 - abar_t) * eps_hat) / sqrt(abar_t)."""
    _check_shapes(zt, eps_hat, "predict_x0_from_eps")
    ab = sched.alpha_bar(t)
    if ab <= 0.0:
        raise ValueError(f"alpha_bar({t}) is zero; cannot invert the marginal")
    return (zt - np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(ab)


def reverse_step_mean(zt: torch.Tensor, t: int, eps_hat: torch.Tensor,
                      sched: DiffusionSchedule) -> torch.Tensor:
    """Posterior mean (1/sqrt(alpha_t)) * (zt - beta_t/sqrt(1 - abar_t) * eps_hat)."""
    _check_shapes(zt, eps_hat, "reverse_step_mean")
    a, b, ab = sched.alpha(t), sched.beta(t), sched.alpha_bar(t)
    if ab >= 1.0:
        # beta_t / sqrt(1 - abar_t) blows up unless the noise prediction is exactly zero
        if torch.any(eps_hat != 0):
            raise ValueError(f"alpha_bar({t}) = 1 with nonzero eps_hat")
        return zt / np.sqrt(a)
    return (zt - (b / np.sqrt(1.0 - ab)) * eps_hat) / np.sqrt(a)


def reverse_step(zt: torch.Tensor, t: int, eps_hat: torch.Tensor, sched: DiffusionSchedule,
                 noise: torch.Tensor, sigma_rule: str = "beta") -> torch.Tensor:
    """One reverse transition: posterior mean plus sigma_t * noise.

    sigma_t = sqrt(beta_t) under rule "beta", 0 under rule "zero". The noise
    term is always suppressed at t=1 (the terminal step).
    """
    _check_shapes(zt, noise, "reverse_step")
    mean = reverse_step_mean(zt, t, eps_hat, sched)
    if sigma_rule == "zero" or t == 1:
        return mean
    if sigma_rule != "beta":
        raise ValueError(f"unknown sigma_rule {sigma_rule!r}")
    return mean + np.sqrt(sched.beta(t)) * noise


def strided_reverse_step(zt: torch.Tensor, t: int, t_prev: int, eps_hat: torch.Tensor,
                         sched: DiffusionSchedule, noise: torch.Tensor,
                         sigma_rule: str = "beta") -> torch.Tensor:
    """Reverse transition from t to t_prev < t using the rescaled single-step alpha.

    Consecutive subsequence indices define alpha_eff = abar_t / abar_{t_prev}
    (and beta_eff = 1 - alpha_eff), which preserves the cumulative-alpha values
    at every visited step. With t_prev = t - 1 this reduces to reverse_step.
    The noise term is suppressed on the final jump (t_prev = 0).
    """
    _check_shapes(zt, noise, "strided_reverse_step")
    if not 0 <= t_prev < t:
        raise ValueError(f"need 0 <= t_prev < t, got t_prev={t_prev}, t={t}")
    ab_t = sched.alpha_bar(t)
    ab_prev = sched.alpha_bar(t_prev)
    alpha_eff = ab_t / ab_prev
    beta_eff = 1.0 - alpha_eff
    mean = (zt - (beta_eff / np.sqrt(1.0 - ab_t)) * eps_hat) / np.sqrt(alpha_eff)
    if sigma_rule == "zero" or t_prev == 0:
        return mean
    if sigma_rule != "beta":
        raise ValueError(f"unknown sigma_rule {sigma_rule!r}")
    return mean + np.sqrt(beta_eff) * noise


def make_subsequence(T: int, K: int) -> SamplingSubsequence:
    """K timestep indices round(i * T / K) for i = 1..K, deduplicated.

    Rounding is half-up so the rule is deterministic across platforms. The
    last index is always T; duplicates (possible only when K is close to T
    with awkward ratios) are collapsed.
    """
    if K <= 0:
        raise ValueError(f"K must be positive, got {K}")
    if K > T:
        raise ValueError(f"K={K} exceeds T={T}")
    raw = [int(np.floor(i * T / K + 0.5)) for i in range(1, K + 1)]
    seen, indices = set(), []
    for idx in raw:
        idx = min(max(idx, 1), T)
        if idx not in seen:
            seen.add(idx)
            indices.append(idx)
    return SamplingSubsequence(indices=tuple(indices))
