"""Color-keyed trajectory measurement and action classification.

These are the evaluation oracles used for the decomposition and
controllability checks: they look only at rendered pixels (no access to
model internals) and recover per-sprite centroid tracks.
"""

from __future__ import annotations

import numpy as np
import torch
from scipy import ndimage

from .sprites import BACKGROUND_RGB, COLOR_RGB, SpriteScene

# entries below this color-match weight never contribute to a track
_WEIGHT_FLOOR = 0.15
# max distance from the line black->color for a pixel to count as that color
_COLOR_RESIDUAL = 0.25
# minimum total component mass (in px of coverage) to accept a detection
_MIN_MASS = 3.0
# slide/grow evidence below this many px picks the stationary class (rotate)
_CLASSIFY_FLOOR = 3.0
# weight of the log-area-change channel relative to displacement px
_GROWTH_GAIN = 30.0

TrackPoint = tuple[float, float, float]  # x, y, mass


def _color_weight(frame: np.ndarray, rgb: tuple[float, float, float]) -> np.ndarray:
    """Per-pixel match weight: projection onto the background->color ray, gated
    by the residual distance from that ray."""
    bg = np.asarray(BACKGROUND_RGB)
    c = np.asarray(rgb) - bg
    p = frame - bg
    denom = float(c @ c)
    t = p @ c / denom
    resid = np.linalg.norm(p - t[..., None] * c, axis=-1)
    w = np.where((resid < _COLOR_RESIDUAL) & (t > _WEIGHT_FLOOR), t, 0.0)
    return w


def _largest_component(w: np.ndarray) -> np.ndarray | None:
    mask = w > _WEIGHT_FLOOR
    if not mask.any():
        return None
    labels, n = ndimage.label(mask)
    if n == 0:
        return None
    masses = ndimage.sum_labels(w, labels, index=np.arange(1, n + 1))
    best = int(np.argmax(masses)) + 1
    return np.where(labels == best, w, 0.0)


def measure_trajectory(video: torch.Tensor, reference_scene: SpriteScene,
                       ) -> list[list[TrackPoint | None]]:
    """Per-sprite, per-frame (x, y, mass) tracks keyed by the reference colors.

    mass is the summed anti-aliased coverage of the detected component (an
    area proxy, used for the grow/shrink channel). Frames where a color is
    missing yield None rather than raising.
    """
    arr = video.detach().cpu().numpy() if isinstance(video, torch.Tensor) else np.asarray(video)
    if arr.ndim != 4:
        raise ValueError(f"video must be (L, H, W, C), got {arr.shape}")
    frames = (arr + 1.0) / 2.0
    L, H, W, _ = frames.shape
    yy, xx = np.mgrid[0:H, 0:W]
    px = xx + 0.5
    py = yy + 0.5
    tracks: list[list[TrackPoint | None]] = []
    for sp in reference_scene.sprites:
        rgb = COLOR_RGB[sp.color]
        track: list[TrackPoint | None] = []
        for t in range(L):
            w = _largest_component(_color_weight(frames[t], rgb))
            if w is None or w.sum() < _MIN_MASS:
                track.append(None)
                continue
            mass = float(w.sum())
            track.append((float((w * px).sum() / mass), float((w * py).sum() / mass), mass))
        tracks.append(track)
    return tracks


def classify_trajectory(track: list[TrackPoint | None]) -> str:
    """Nearest-template action label from net displacement and area change.

    Templates score the four slide directions by signed displacement and
    grow by scaled log area ratio; if no score clears the evidence floor the
    track is labeled rotate (the stationary class). Ties break toward the
    earlier entry of the fixed action ordering.
    """
    valid = [p for p in track if p is not None]
    if len(valid) < 2:
        raise ValueError(f"need at least 2 valid track points, got {len(valid)}")
    x0, y0, m0 = valid[0]
    x1, y1, m1 = valid[-1]
    dx = x1 - x0
    dy = y1 - y0
    g = np.log(max(m1, 1e-6) / max(m0, 1e-6))
    scores = {
        "slide_left": -dx,
        "slide_right": dx,
        "slide_up": -dy,
        "slide_down": dy,
        "grow": _GROWTH_GAIN * g,
    }
    best = max(scores, key=lambda k: (scores[k], -list(scores).index(k)))
    if scores[best] < _CLASSIFY_FLOOR:
        return "rotate"
    return best
