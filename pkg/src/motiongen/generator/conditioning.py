"""Condition construction: flattened content tokens plus optional caption tokens.

Content features from the frozen autoencoder are flattened to h*w tokens and
linearly projected to the conditioning width (with a learned grid positional
embedding so the noise predictor can bind attention spatially). Captions go
through a learned embedding table, positional encodings, and a small
transformer trained jointly with the noise predictor. Dropped or padded text
positions are excluded from cross-attention entirely, so a fully masked
caption is *exactly* image-only conditioning.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from ..data.captions import PAD_ID, vocab_size


@dataclass
class ConditionBundle:
    """Single-sample conditioning tokens (spec-level view)."""

    content_tokens: torch.Tensor            # (h*w, cond_dim)
    text_tokens: torch.Tensor | None        # (n_text, cond_dim) or None
    combined: torch.Tensor                  # concatenation along the token axis


class ConditionEncoder(nn.Module):
    def __init__(self, content_channels: int, grid_hw: tuple[int, int],
                 cond_dim: int = 128, text_layers: int = 2, max_caption_len: int = 8,
                 heads: int = 4):
        super().__init__()
        self.grid_hw = grid_hw
        self.cond_dim = cond_dim
        self.max_caption_len = max_caption_len
        n_grid = grid_hw[0] * grid_hw[1]
        self.content_proj = nn.Linear(content_channels, cond_dim)
        self.content_pos = nn.Parameter(torch.zeros(n_grid, cond_dim))
        nn.init.normal_(self.content_pos, std=0.02)
        self.token_embedding = nn.Embedding(vocab_size(), cond_dim, padding_idx=PAD_ID)
        self.text_pos = nn.Parameter(torch.zeros(max_caption_len, cond_dim))
        nn.init.normal_(self.text_pos, std=0.02)
        layer = nn.TransformerEncoderLayer(
            d_model=cond_dim, nhead=heads, dim_feedforward=2 * cond_dim,
            batch_first=True, dropout=0.0, norm_first=True, activation="gelu",
        )
        self.text_transformer = nn.TransformerEncoder(layer, num_layers=text_layers,
                                                      enable_nested_tensor=False)

    @property
    def n_content_tokens(self) -> int:
        return self.grid_hw[0] * self.grid_hw[1]

    def content_tokens(self, deepest: torch.Tensor) -> torch.Tensor:
        """(B, C, h, w) content features -> (B, h*w, cond_dim) tokens."""
        b, c, h, w = deepest.shape
        if (h, w) != self.grid_hw:
            raise ValueError(f"content grid {(h, w)} != configured {self.grid_hw}")
        tokens = deepest.flatten(2).transpose(1, 2)
        return self.content_proj(tokens) + self.content_pos[None]

    def pad_captions(self, captions: list[tuple[int, ...] | None],
                     device=None) -> tuple[torch.Tensor, torch.Tensor]:
        """Token-id batch (B, max_len) plus a True-means-ignore pad mask.

        None entries (image-only samples) become all-pad, fully masked rows.
        """
        b = len(captions)
        ids = torch.full((b, self.max_caption_len), PAD_ID, dtype=torch.long, device=device)
        for i, cap in enumerate(captions):
            if cap is None:
                continue
            if len(cap) > self.max_caption_len:
                raise ValueError(f"caption length {len(cap)} exceeds max {self.max_caption_len}")
            for tok in cap:
                if not 0 <= tok < vocab_size():
                    raise ValueError(f"token id {tok} outside vocabulary")
            ids[i, : len(cap)] = torch.tensor(cap, dtype=torch.long, device=device)
        return ids, ids.eq(PAD_ID)

    def text_tokens(self, ids: torch.Tensor, pad_mask: torch.Tensor) -> torch.Tensor:
        """(B, n) ids -> (B, n, cond_dim); pad positions carry no usable signal."""
        x = self.token_embedding(ids) + self.text_pos[None, : ids.shape[1]]
        # rows with no real tokens would make the transformer attention NaN;
        # run them unmasked (their output is discarded by the cross-attn mask)
        safe_mask = pad_mask & ~pad_mask.all(dim=1, keepdim=True)
        return self.text_transformer(x, src_key_padding_mask=safe_mask)

    def encode_batch(self, deepest: torch.Tensor,
                     captions: list[tuple[int, ...] | None] | None,
                     ) -> tuple[torch.Tensor, torch.Tensor | None]:
        """Batched conditioning: (tokens (B, N, D), mask (B, N) True=ignore or None).

        With captions=None the result is content tokens only (image-to-video
        mode); otherwise text tokens are appended and masked per sample.
        """
        content = self.content_tokens(deepest)
        if captions is None:
            return content, None
        ids, pad_mask = self.pad_captions(captions, device=deepest.device)
        text = self.text_tokens(ids, pad_mask)
        tokens = torch.cat([content, text], dim=1)
        mask = torch.cat(
            [torch.zeros(content.shape[:2], dtype=torch.bool, device=content.device),
             pad_mask], dim=1,
        )
        return tokens, mask

    def build(self, deepest: torch.Tensor,
              caption_ids: tuple[int, ...] | None) -> ConditionBundle:
        """Spec-level single-sample bundle from (h, w, C) content features."""
        d = deepest.movedim(-1, 0).unsqueeze(0)
        content = self.content_tokens(d)[0]
        if caption_ids is None or len(caption_ids) == 0:
            return ConditionBundle(content_tokens=content, text_tokens=None, combined=content)
        ids, pad_mask = self.pad_captions([tuple(caption_ids)], device=deepest.device)
        text_all = self.text_tokens(ids, pad_mask)[0]
        text = text_all[: len(caption_ids)]
        return ConditionBundle(content_tokens=content, text_tokens=text,
                               combined=torch.cat([content, text], dim=0))
