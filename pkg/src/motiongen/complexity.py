"""Analytic sampling-cost model for the three video-diffusion paradigms.

Costs count (state volume) x (per-position kernel cost) at equal channel
width and depth: full-resolution 3D diffusion over pixels, 3D diffusion over
a spatiotemporally downsampled latent video, and 2D diffusion over a motion
latent with no temporal axis. Attention costs are excluded from the model
(noted in the emitted report); the wall-clock benchmark complements it.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

PARADIGMS = ("pixel_3d", "latent_video_3d", "latent_motion_2d")


@dataclass(frozen=True)
class KernelCostModel:
    """Per-position multiply-accumulate counts for 2D vs 3D convolution."""

    conv2d: float = 9.0      # 3x3
    conv3d: float = 27.0     # 3x3x3 (temporal extent 3)

    @property
    def temporal_ratio(self) -> float:
        return self.conv3d / self.conv2d


@dataclass(frozen=True)
class ParadigmSpec:
    paradigm: str
    L: int
    H: int
    W: int
    f_s: int = 1
    f_t: int = 1
    kernel_cost_model: KernelCostModel = field(default_factory=KernelCostModel)

    def validate(self):
        if self.paradigm not in PARADIGMS:
            raise ValueError(f"unknown paradigm {self.paradigm!r}")
        if min(self.L, self.H, self.W, self.f_s, self.f_t) < 1:
            raise ValueError("all dims and factors must be >= 1")
        if self.paradigm != "pixel_3d" and (self.H % self.f_s or self.W % self.f_s):
            raise ValueError(f"H, W must be divisible by f_s={self.f_s}")
        if self.paradigm == "latent_video_3d" and self.L % self.f_t:
            raise ValueError(f"L must be divisible by f_t={self.f_t}")
        return self


def per_step_cost(spec: ParadigmSpec) -> float:
    """Relative multiply-accumulate units for one denoising step."""
    spec.validate()
    k = spec.kernel_cost_model
    if spec.paradigm == "pixel_3d":
        return spec.L * spec.H * spec.W * k.conv3d
    if spec.paradigm == "latent_video_3d":
        return (spec.L / spec.f_t) * (spec.H / spec.f_s) * (spec.W / spec.f_s) * k.conv3d
    return (spec.H / spec.f_s) * (spec.W / spec.f_s) * k.conv2d


def total_sampling_cost(spec: ParadigmSpec, K: int) -> float:
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    return K * per_step_cost(spec)


def comparison_table(L: int, H: int, W: int, f_s: int, f_t: int, K: int,
                     kernel: KernelCostModel | None = None) -> tuple[str, list[dict]]:
    kernel = kernel or KernelCostModel()
    rows = []
    pixel = ParadigmSpec("pixel_3d", L, H, W, kernel_cost_model=kernel)
    base = per_step_cost(pixel)
    specs = [
        pixel,
        ParadigmSpec("latent_video_3d", L, H, W, f_s=f_s, f_t=f_t, kernel_cost_model=kernel),
        ParadigmSpec("latent_motion_2d", L, H, W, f_s=f_s, f_t=L, kernel_cost_model=kernel),
    ]
    for spec in specs:
        step = per_step_cost(spec)
        rows.append({
            "paradigm": spec.paradigm,
            "per_step": step,
            "total": total_sampling_cost(spec, K),
            "speedup": base / step,
        })
    width = max(len(r["paradigm"]) for r in rows)
    lines = [
        f"sampling cost model: L={L} H={H} W={W} f_s={f_s} f_t={f_t} K={K} "
        f"(c3d/c2d={kernel.temporal_ratio:g}; attention excluded)",
        f"{'paradigm'.ljust(width)}  {'per-step':>14}  {'total(K)':>16}  {'vs pixel':>9}",
    ]
    for r in rows:
        lines.append(f"{r['paradigm'].ljust(width)}  {r['per_step']:>14.4g}  "
                     f"{r['total']:>16.4g}  {r['speedup']:>8.1f}x")
    return "\n".join(lines), rows


def benchmark_sampling(sample_fn, n_videos: int, warmup: int = 1,
                       k_steps: int | None = None) -> tuple[float, float]:
    """Median wall-clock seconds per video (and per step) for sample_fn().

    sample_fn generates exactly one video per call; warm-up calls are
    excluded. Runs serially to avoid contention skew.
    """
    if n_videos < 1:
        raise ValueError(f"n_videos must be >= 1, got {n_videos}")
    for _ in range(warmup):
        sample_fn()
    times = []
    for _ in range(n_videos):
        t0 = time.perf_counter()
        sample_fn()
        times.append(time.perf_counter() - t0)
    times.sort()
    n = len(times)
    median = times[n // 2] if n % 2 else 0.5 * (times[n // 2 - 1] + times[n // 2])
    per_step = median / k_steps if k_steps else float("nan")
    return median, per_step
