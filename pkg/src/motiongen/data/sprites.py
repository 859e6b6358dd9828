"""Deterministic moving-sprites clip generator.

Scenes hold 1-3 non-overlapping sprites on a black background; exactly one
sprite performs an action (slide in one of four directions, rotate in place,
or grow). Rendering is a pure function of (scene, L, H, W): sprites are drawn
from signed-distance fields with a 1-pixel smooth edge, so sub-pixel motion
is visible to downstream encoders. Frames are quantized to the 8-bit grid at
render time, which makes the PNG export/ingest round trip exact.

Scene generation guarantees more than the bare invariants: sprites stay
clear of each other over the *whole* clip (swept-volume check), keeping the
color-keyed trajectory oracle unambiguous.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import torch

from ..tensors import video_from_uint8, video_to_uint8
from .captions import caption_for_action, encode_caption

SHAPES = ("circle", "square", "triangle")
COLORS = ("red", "green", "blue", "yellow")
SIZES = ("small", "large")
ACTIONS = ("slide_left", "slide_right", "slide_up", "slide_down", "rotate", "grow")

# channel values stay inside [0.06, 0.94]: exact 0/1 targets map to +-1, the
# asymptote of the decoder's saturating output, where gradients vanish
COLOR_RGB = {
    "red": (0.94, 0.06, 0.06),
    "green": (0.06, 0.94, 0.06),
    "blue": (0.06, 0.06, 0.94),
    "yellow": (0.94, 0.94, 0.06),
}
BACKGROUND_RGB = (0.06, 0.06, 0.06)
RADIUS = {"small": 5.0, "large": 8.0}

_SLIDE_DIRS = {
    "slide_left": (-1.0, 0.0),
    "slide_right": (1.0, 0.0),
    "slide_up": (0.0, -1.0),   # y axis points down in image coordinates
    "slide_down": (0.0, 1.0),
}


@dataclass(frozen=True)
class Sprite:
    shape: str
    color: str
    size: str
    x: float
    y: float

    @property
    def radius(self) -> float:
        return RADIUS[self.size]


@dataclass(frozen=True)
class SpriteAction:
    sprite_index: int
    kind: str
    speed: float = 0.0    # px/frame for slides
    omega: float = 0.0    # rad/frame for rotate
    growth: float = 0.0   # final scale - 1 for grow


@dataclass(frozen=True)
class SpriteScene:
    sprites: tuple[Sprite, ...]
    action: SpriteAction
    seed: int


@dataclass(frozen=True)
class CaptionedClip:
    video: torch.Tensor                 # (L, H, W, 3) float32 in [-1, 1], 8-bit quantized
    caption: str
    caption_ids: tuple[int, ...]
    trajectory: np.ndarray              # (n_sprites, L, 3): x, y, analytic area
    scene: SpriteScene = field(repr=False, default=None)


def shape_area(shape: str, radius: float) -> float:
    if shape == "circle":
        return math.pi * radius * radius
    if shape == "square":
        half = 0.82 * radius
        return (2.0 * half) ** 2
    if shape == "triangle":
        return 3.0 * math.sqrt(3.0) / 4.0 * radius * radius
    raise ValueError(f"unknown shape {shape!r}")


def sprite_states(scene: SpriteScene, L: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Analytic motion: per-sprite positions (n, L, 2), scales (n, L), angles (n, L)."""
    n = len(scene.sprites)
    pos = np.zeros((n, L, 2))
    scale = np.ones((n, L))
    angle = np.zeros((n, L))
    t = np.arange(L, dtype=np.float64)
    for i, sp in enumerate(scene.sprites):
        pos[i, :, 0] = sp.x
        pos[i, :, 1] = sp.y
    act = scene.action
    i = act.sprite_index
    if act.kind in _SLIDE_DIRS:
        dx, dy = _SLIDE_DIRS[act.kind]
        pos[i, :, 0] += act.speed * dx * t
        pos[i, :, 1] += act.speed * dy * t
    elif act.kind == "rotate":
        angle[i] = act.omega * t
    elif act.kind == "grow":
        scale[i] = 1.0 + act.growth * t / max(L - 1, 1)
    else:
        raise ValueError(f"unknown action kind {act.kind!r}")
    return pos, scale, angle


def scene_trajectory(scene: SpriteScene, L: int) -> np.ndarray:
    """(n_sprites, L, 3) array of centroid x, centroid y, analytic area."""
    pos, scale, _ = sprite_states(scene, L)
    n = len(scene.sprites)
    out = np.zeros((n, L, 3))
    out[:, :, :2] = pos
    for i, sp in enumerate(scene.sprites):
        out[i, :, 2] = shape_area(sp.shape, sp.radius) * scale[i] ** 2
    return out


def _sdf(shape: str, px: np.ndarray, py: np.ndarray, cx: float, cy: float,
         radius: float, theta: float) -> np.ndarray:
    """Signed distance from pixel centers to the sprite boundary (negative inside)."""
    x = px - cx
    y = py - cy
    if theta != 0.0:
        c, s = math.cos(-theta), math.sin(-theta)
        x, y = c * x - s * y, s * x + c * y
    if shape == "circle":
        return np.hypot(x, y) - radius
    if shape == "square":
        half = 0.82 * radius
        qx = np.abs(x) - half
        qy = np.abs(y) - half
        outside = np.hypot(np.maximum(qx, 0.0), np.maximum(qy, 0.0))
        inside = np.minimum(np.maximum(qx, qy), 0.0)
        return outside + inside
    if shape == "triangle":
        # equilateral triangle, circumradius = radius, one vertex pointing up
        d = None
        for k in range(3):
            a = math.pi / 2 + 2.0 * math.pi * k / 3.0
            vx, vy = math.cos(a), -math.sin(a)
            # distance to the edge line opposite this vertex (outward normal -v)
            e = -(x * vx + y * vy) - radius / 2.0
            d = e if d is None else np.maximum(d, e)
        return d
    raise ValueError(f"unknown shape {shape!r}")


def render_frame(scene: SpriteScene, pos: np.ndarray, scale: np.ndarray,
                 angle: np.ndarray, t: int, H: int, W: int) -> np.ndarray:
    """One (H, W, 3) float frame in [0, 1]; later sprites paint over earlier ones."""
    yy, xx = np.mgrid[0:H, 0:W]
    px = xx + 0.5
    py = yy + 0.5
    img = np.broadcast_to(np.asarray(BACKGROUND_RGB), (H, W, 3)).copy()
    for i, sp in enumerate(scene.sprites):
        sdf = _sdf(sp.shape, px, py, pos[i, t, 0], pos[i, t, 1],
                   sp.radius * scale[i, t], angle[i, t])
        cov = np.clip(0.5 - sdf, 0.0, 1.0)
        rgb = np.asarray(COLOR_RGB[sp.color])
        img = img * (1.0 - cov[..., None]) + rgb * cov[..., None]
    return img


def render_clip(scene: SpriteScene, L: int = 16, H: int = 64, W: int = 64) -> CaptionedClip:
    """Render a scene to an 8-bit-quantized video with caption and oracle trajectory."""
    if H % 4 != 0 or W % 4 != 0:
        raise ValueError(f"frame dims must be divisible by the spatial factor 4, got {H}x{W}")
    pos, scale, angle = sprite_states(scene, L)
    frames = np.stack([render_frame(scene, pos, scale, angle, t, H, W) for t in range(L)])
    u8 = video_to_uint8(frames * 2.0 - 1.0)
    video = video_from_uint8(u8)
    actor = scene.sprites[scene.action.sprite_index]
    caption = caption_for_action(actor.size, actor.color, actor.shape, scene.action.kind)
    return CaptionedClip(
        video=video,
        caption=caption,
        caption_ids=tuple(encode_caption(caption)),
        trajectory=scene_trajectory(scene, L),
        scene=scene,
    )


def _max_radius(sprite: Sprite, action: SpriteAction, idx: int) -> float:
    r = sprite.radius
    if action.kind == "grow" and action.sprite_index == idx:
        r *= 1.0 + action.growth
    return r


def _swept_clear(pos: np.ndarray, radii: list[float], i: int, j: int, margin: float) -> bool:
    """Sprites i and j keep at least `margin` px between boundaries over all frames."""
    d = np.hypot(pos[i, :, 0] - pos[j, :, 0], pos[i, :, 1] - pos[j, :, 1])
    return bool(np.all(d > radii[i] + radii[j] + margin))


def _in_bounds(pos: np.ndarray, radius: float, i: int, H: int, W: int, margin: float) -> bool:
    lo = radius + margin
    return bool(
        np.all(pos[i, :, 0] > lo) and np.all(pos[i, :, 0] < W - lo)
        and np.all(pos[i, :, 1] > lo) and np.all(pos[i, :, 1] < H - lo)
    )


def _draw_action(rng: np.random.Generator, kind: str, sprite_index: int) -> SpriteAction:
    if kind in _SLIDE_DIRS:
        return SpriteAction(sprite_index, kind, speed=float(rng.uniform(1.5, 2.4)))
    if kind == "rotate":
        return SpriteAction(sprite_index, kind, omega=float(rng.uniform(0.12, 0.22)))
    if kind == "grow":
        return SpriteAction(sprite_index, kind, growth=float(rng.uniform(0.6, 1.0)))
    raise ValueError(kind)


def _place_scene(rng: np.random.Generator, n: int, shapes: list[str], colors: list[str],
                 sizes: list[str], actions: list[SpriteAction], L: int, H: int, W: int,
                 ) -> tuple[Sprite, ...] | None:
    """Find positions valid for every candidate action list entry, or None."""
    idx = actions[0].sprite_index
    sprites: list[Sprite] = []
    for i in range(n):
        placed = False
        for _ in range(60):
            x = float(rng.uniform(0.0, W))
            y = float(rng.uniform(0.0, H))
            cand = sprites + [Sprite(shapes[i], colors[i], sizes[i], x, y)]
            # pad remaining sprites with the candidate so the index math stays simple
            probe = tuple(cand) + tuple(
                Sprite(shapes[k], colors[k], sizes[k], -1e6, -1e6) for k in range(i + 1, n)
            )
            ok = True
            for action in actions:
                scene = SpriteScene(probe, action, seed=-1)
                pos, scale, _ = sprite_states(scene, L)
                radii = [_max_radius(probe[k], action, k) for k in range(n)]
                if not _in_bounds(pos, radii[i], i, H, W, margin=2.0):
                    ok = False
                    break
                for j in range(i):
                    if not _swept_clear(pos, radii, i, j, margin=2.0):
                        ok = False
                        break
                if not ok:
                    break
            if ok:
                sprites = cand
                placed = True
                break
        if not placed:
            return None
    _ = idx
    return tuple(sprites)


def generate_scene(seed: int, L: int = 16, H: int = 64, W: int = 64) -> SpriteScene:
    """Deterministic scene from seed: 1-3 sprites, exactly one of them acting."""
    rng = np.random.default_rng(seed)
    for _ in range(200):
        n = int(rng.integers(1, 4))
        shapes = [str(rng.choice(SHAPES)) for _ in range(n)]
        colors = [str(c) for c in rng.choice(COLORS, size=n, replace=False)]
        sizes = [str(rng.choice(SIZES)) for _ in range(n)]
        actor = int(rng.integers(n))
        kind = str(rng.choice(ACTIONS))
        action = _draw_action(rng, kind, actor)
        sprites = _place_scene(rng, n, shapes, colors, sizes, [action], L, H, W)
        if sprites is not None:
            return SpriteScene(sprites=sprites, action=action, seed=seed)
    raise RuntimeError(f"could not generate a feasible scene for seed {seed}")


def generate_transfer_pair(seed: int, L: int = 16, H: int = 64, W: int = 64,
                           ) -> tuple[SpriteScene, SpriteScene]:
    """Two scenes sharing layout (positions, sizes, acting index) with different
    appearance and different actions.

    Decoding the second scene's motion with the first scene's content should
    reproduce the second action on the first scene's sprites, which is what
    the transfer acceptance check measures.
    """
    rng = np.random.default_rng(seed)
    for _ in range(200):
        n = int(rng.integers(1, 4))
        sizes = [str(rng.choice(SIZES)) for _ in range(n)]
        actor = int(rng.integers(n))
        shapes_a = [str(rng.choice(SHAPES)) for _ in range(n)]
        shapes_b = [str(rng.choice(SHAPES)) for _ in range(n)]
        colors_a = [str(c) for c in rng.choice(COLORS, size=n, replace=False)]
        colors_b = [str(c) for c in rng.choice(COLORS, size=n, replace=False)]
        if colors_b[actor] == colors_a[actor]:
            others = [c for c in COLORS if c != colors_a[actor] and c not in colors_b]
            if not others:
                continue
            swap = str(rng.choice(others))
            colors_b[actor] = swap
        kind_a = str(rng.choice(ACTIONS))
        kind_b = str(rng.choice([k for k in ACTIONS if k != kind_a]))
        action_a = _draw_action(rng, kind_a, actor)
        action_b = _draw_action(rng, kind_b, actor)
        sprites_a = _place_scene(rng, n, shapes_a, colors_a, sizes,
                                 [action_a, action_b], L, H, W)
        if sprites_a is None:
            continue
        sprites_b = tuple(
            replace(sp, shape=shapes_b[i], color=colors_b[i]) for i, sp in enumerate(sprites_a)
        )
        return (SpriteScene(sprites_a, action_a, seed=seed),
                SpriteScene(sprites_b, action_b, seed=seed))
    raise RuntimeError(f"could not generate a feasible transfer pair for seed {seed}")
