"""Checkpoint archives.

A checkpoint is a single torch.save archive holding:

    format_version   int (currently 1)
    stage            "vae" | "dmg"
    params           dict of named parameter/buffer tensors
    optimizers       dict of optimizer state dicts
    config           the fully resolved experiment config (dict)
    step             global training step counter
    epoch            completed epochs
    torch_rng        torch global RNG state at save time
    extra            stage-specific payload (e.g. caption vocabulary)

Parameter names are hierarchical. The vae stage uses the prefixes
"autoencoder.image_encoder.", "autoencoder.motion_encoder.",
"autoencoder.decoder." and "discriminator."; the dmg stage uses "eps_net."
and "condition_encoder.". The dmg stage loads the frozen video autoencoder
from a vae checkpoint via the "autoencoder." subtree.
"""

from __future__ import annotations

from pathlib import Path

import torch

FORMAT_VERSION = 1


def save_checkpoint(path: str | Path, *, stage: str, params: dict, optimizers: dict,
                    config: dict, step: int, epoch: int, extra: dict | None = None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format_version": FORMAT_VERSION,
        "stage": stage,
        "params": params,
        "optimizers": optimizers,
        "config": config,
        "step": step,
        "epoch": epoch,
        "torch_rng": torch.get_rng_state(),
        "extra": extra or {},
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(payload, tmp)
    tmp.replace(path)


def load_checkpoint(path: str | Path, expect_stage: str | None = None) -> dict:
    payload = torch.load(Path(path), map_location="cpu", weights_only=False)
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"checkpoint {path} has format_version {version}, "
                         f"expected {FORMAT_VERSION}")
    if expect_stage is not None and payload.get("stage") != expect_stage:
        raise ValueError(f"checkpoint {path} is stage {payload.get('stage')!r}, "
                         f"expected {expect_stage!r}")
    return payload


def split_by_prefix(params: dict, prefix: str) -> dict:
    """Sub-state-dict under a hierarchical prefix, with the prefix stripped."""
    out = {k[len(prefix):]: v for k, v in params.items() if k.startswith(prefix)}
    if not out:
        raise KeyError(f"no parameters under prefix {prefix!r}")
    return out


def add_prefix(state: dict, prefix: str) -> dict:
    return {prefix + k: v for k, v in state.items()}
