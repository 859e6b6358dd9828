"""Clip sources for training and evaluation.

SyntheticSpriteCorpus derives every clip deterministically from a seed, so
the train/test split is stable across runs and machines; clips are cached
as uint8 after first render. FrameFolderSource ingests the on-disk clip
layout (synthetic exports or real frame-folder datasets) with per-clip
validation errors collected rather than raised.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from ..tensors import video_from_uint8, video_to_uint8
from .captions import encode_caption
from .clipio import ClipReadError, read_clip, write_clip
from .sprites import CaptionedClip, generate_scene, render_clip

TEST_SEED_BASE = 10_000_000
PAIR_SEED_BASE = 20_000_000


@dataclass
class ClipRecord:
    video: torch.Tensor            # (L, H, W, C)
    caption: str | None
    caption_ids: tuple[int, ...] | None
    meta: dict | None = None


class SyntheticSpriteCorpus:
    """Deterministic moving-sprites corpus with a seed-range train/test split."""

    def __init__(self, train_clips: int = 4096, test_clips: int = 512,
                 clip_length: int = 16, height: int = 64, width: int = 64,
                 cache: bool = True):
        self.train_clips = train_clips
        self.test_clips = test_clips
        self.clip_length = clip_length
        self.height = height
        self.width = width
        self._cache: dict[int, tuple[np.ndarray, str]] = {} if cache else None

    def seed_for(self, split: str, index: int) -> int:
        if split == "train":
            if not 0 <= index < self.train_clips:
                raise IndexError(index)
            return index
        if split == "test":
            if not 0 <= index < self.test_clips:
                raise IndexError(index)
            return TEST_SEED_BASE + index
        raise ValueError(f"unknown split {split!r}")

    def size(self, split: str) -> int:
        return self.train_clips if split == "train" else self.test_clips

    def clip(self, split: str, index: int) -> CaptionedClip:
        seed = self.seed_for(split, index)
        if self._cache is not None and seed in self._cache:
            u8, caption = self._cache[seed]
            scene = generate_scene(seed, self.clip_length, self.height, self.width)
            from .sprites import scene_trajectory
            return CaptionedClip(
                video=video_from_uint8(u8), caption=caption,
                caption_ids=tuple(encode_caption(caption)),
                trajectory=scene_trajectory(scene, self.clip_length), scene=scene,
            )
        scene = generate_scene(seed, self.clip_length, self.height, self.width)
        clip = render_clip(scene, self.clip_length, self.height, self.width)
        if self._cache is not None:
            self._cache[seed] = (video_to_uint8(clip.video), clip.caption)
        return clip

    def record(self, split: str, index: int) -> ClipRecord:
        c = self.clip(split, index)
        return ClipRecord(video=c.video, caption=c.caption, caption_ids=c.caption_ids,
                          meta={"scene": c.scene, "trajectory": c.trajectory})

    def export(self, out_dir: str | Path, split: str, limit: int | None = None):
        out_dir = Path(out_dir)
        n = self.size(split) if limit is None else min(limit, self.size(split))
        for i in range(n):
            c = self.clip(split, i)
            write_clip(out_dir / f"clip_{i:06d}", c.video, c.caption,
                       c.scene, c.trajectory)
        return n


@dataclass
class IngestReport:
    clips: list[Path]
    errors: list[tuple[Path, str]]


class FrameFolderSource:
    """Validated directory-of-clips dataset (the clipio layout)."""

    def __init__(self, root: str | Path, clip_length: int, height: int, width: int):
        self.root = Path(root)
        self.clip_length = clip_length
        self.height = height
        self.width = width
        self.report = self._scan()
        self.clip_dirs = self.report.clips

    def _scan(self) -> IngestReport:
        if not self.root.is_dir():
            raise FileNotFoundError(f"dataset root {self.root} is not a directory")
        ok, errors = [], []
        for name in sorted(os.listdir(self.root)):
            d = self.root / name
            if not d.is_dir():
                continue
            try:
                video, caption, _ = read_clip(d, expect_frames=self.clip_length,
                                              expect_hw=(self.height, self.width))
                if caption is not None:
                    encode_caption(caption)
                _ = video
                ok.append(d)
            except (ClipReadError, ValueError) as e:
                errors.append((d, str(e)))
        if not ok and not errors:
            raise FileNotFoundError(f"no clip directories under {self.root}")
        return IngestReport(clips=ok, errors=errors)

    def size(self) -> int:
        return len(self.clip_dirs)

    def record(self, index: int) -> ClipRecord:
        video, caption, meta = read_clip(self.clip_dirs[index],
                                         expect_frames=self.clip_length,
                                         expect_hw=(self.height, self.width))
        ids = tuple(encode_caption(caption)) if caption else None
        return ClipRecord(video=video, caption=caption, caption_ids=ids, meta=meta)
