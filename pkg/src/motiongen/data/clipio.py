"""On-disk clip layout shared by the synthetic exporter and real-data ingestion.

One directory per clip:

    clip_000123/
        frame_00000.png ... frame_NNNNN.png   8-bit RGB, lossless
        caption.txt                           optional, one lowercase line
        meta.txt                              optional key-value provenance

meta.txt is "key: value" per line. Scene fields use dotted keys
(sprite.0.shape, action.kind, ...); trajectories serialize one sprite per
key as semicolon-separated "x,y,area" triples.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from ..tensors import video_from_uint8, video_to_uint8
from .sprites import Sprite, SpriteAction, SpriteScene

FRAME_PATTERN = "frame_{:05d}.png"
META_FORMAT_VERSION = 1


class ClipReadError(ValueError):
    """A clip directory violates the layout contract."""


def write_meta(path: Path, scene: SpriteScene, trajectory: np.ndarray | None,
               extra: dict | None = None):
    lines = [f"format_version: {META_FORMAT_VERSION}", f"seed: {scene.seed}"]
    lines.append(f"sprite_count: {len(scene.sprites)}")
    for i, sp in enumerate(scene.sprites):
        lines += [
            f"sprite.{i}.shape: {sp.shape}",
            f"sprite.{i}.color: {sp.color}",
            f"sprite.{i}.size: {sp.size}",
            f"sprite.{i}.x: {float(sp.x)!r}",
            f"sprite.{i}.y: {float(sp.y)!r}",
        ]
    a = scene.action
    lines += [
        f"action.sprite_index: {a.sprite_index}",
        f"action.kind: {a.kind}",
        f"action.speed: {float(a.speed)!r}",
        f"action.omega: {float(a.omega)!r}",
        f"action.growth: {float(a.growth)!r}",
    ]
    if trajectory is not None:
        for i in range(trajectory.shape[0]):
            pts = ";".join(f"{float(x)!r},{float(y)!r},{float(m)!r}"
                           for x, y, m in trajectory[i])
            lines.append(f"trajectory.{i}: {pts}")
    for k, v in (extra or {}).items():
        lines.append(f"{k}: {v}")
    path.write_text("\n".join(lines) + "\n")


def parse_meta(path: Path) -> dict:
    """Flat dict of string values plus parsed scene/trajectory when present."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        if ":" not in line:
            raise ClipReadError(f"{path}:{lineno}: expected 'key: value'")
        k, v = line.split(":", 1)
        raw[k.strip()] = v.strip()
    out: dict = {"raw": raw}
    if "sprite_count" in raw:
        n = int(raw["sprite_count"])
        sprites = tuple(
            Sprite(
                shape=raw[f"sprite.{i}.shape"],
                color=raw[f"sprite.{i}.color"],
                size=raw[f"sprite.{i}.size"],
                x=float(raw[f"sprite.{i}.x"]),
                y=float(raw[f"sprite.{i}.y"]),
            )
            for i in range(n)
        )
        action = SpriteAction(
            sprite_index=int(raw["action.sprite_index"]),
            kind=raw["action.kind"],
            speed=float(raw.get("action.speed", 0.0)),
            omega=float(raw.get("action.omega", 0.0)),
            growth=float(raw.get("action.growth", 0.0)),
        )
        out["scene"] = SpriteScene(sprites, action, seed=int(raw.get("seed", -1)))
        tracks = []
        for i in range(n):
            key = f"trajectory.{i}"
            if key not in raw:
                break
            tracks.append([tuple(float(u) for u in p.split(",")) for p in raw[key].split(";")])
        if tracks:
            out["trajectory"] = np.asarray(tracks)
    return out


def write_clip(clip_dir: str | Path, video: torch.Tensor, caption: str | None = None,
               scene: SpriteScene | None = None, trajectory: np.ndarray | None = None):
    """Export an (L, H, W, C) video to the clip-folder layout."""
    clip_dir = Path(clip_dir)
    clip_dir.mkdir(parents=True, exist_ok=True)
    u8 = video_to_uint8(video)
    for t in range(u8.shape[0]):
        Image.fromarray(u8[t]).save(clip_dir / FRAME_PATTERN.format(t))
    if caption is not None:
        (clip_dir / "caption.txt").write_text(caption.strip() + "\n")
    if scene is not None:
        write_meta(clip_dir / "meta.txt", scene, trajectory)


def read_clip(clip_dir: str | Path, expect_frames: int | None = None,
              expect_hw: tuple[int, int] | None = None):
    """Read a clip folder back into (video, caption, meta).

    Raises ClipReadError on missing frames, non-contiguous numbering, or
    inconsistent resolutions.
    """
    clip_dir = Path(clip_dir)
    names = sorted(f for f in os.listdir(clip_dir)
                   if f.startswith("frame_") and f.endswith(".png"))
    if not names:
        raise ClipReadError(f"{clip_dir}: no frames found")
    for t, name in enumerate(names):
        if name != FRAME_PATTERN.format(t):
            raise ClipReadError(f"{clip_dir}: frame files not contiguous at {name}")
    if expect_frames is not None and len(names) != expect_frames:
        raise ClipReadError(f"{clip_dir}: has {len(names)} frames, expected {expect_frames}")
    frames = []
    for name in names:
        arr = np.asarray(Image.open(clip_dir / name).convert("RGB"))
        if frames and arr.shape != frames[0].shape:
            raise ClipReadError(f"{clip_dir}/{name}: resolution {arr.shape[:2]} differs "
                                f"from first frame {frames[0].shape[:2]}")
        frames.append(arr)
    if expect_hw is not None and frames[0].shape[:2] != tuple(expect_hw):
        raise ClipReadError(f"{clip_dir}: resolution {frames[0].shape[:2]} does not match "
                            f"configured {tuple(expect_hw)}")
    video = video_from_uint8(np.stack(frames))
    caption = None
    cap_path = clip_dir / "caption.txt"
    if cap_path.exists():
        caption = cap_path.read_text().strip()
    meta = None
    meta_path = clip_dir / "meta.txt"
    if meta_path.exists():
        meta = parse_meta(meta_path)
    return video, caption, meta
