"""Pipeline harness: wires config, data, models, training loops, and evaluation.

Every training run owns an output directory containing the resolved config,
an append-only JSONL loss log, and epoch checkpoints. Artifacts written by
sampling/evaluation commands carry a copy of the resolved config so the
audit command can verify provenance.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from pathlib import Path

import numpy as np
import torch
import yaml

from .autoencoder import (
    AutoencoderConfig,
    LatentMotion,
    MotionContentAutoencoder,
    VaeTrainer,
    normalize_latent,
)
from .checkpoint import add_prefix, load_checkpoint, save_checkpoint, split_by_prefix
from .config import ExperimentConfig, save_config
from .data import vocab_size
from .data.captions import VOCAB_VERSION, VOCABULARY
from .data.corpus import FrameFolderSource, SyntheticSpriteCorpus
from .diffusion import make_linear_schedule, make_subsequence
from .generator import (
    ConditionEncoder,
    DiffusionTrainer,
    EpsNetConfig,
    NoiseUNet,
    sample_motion_batch,
)
from .metrics import extract_stats, frechet_distance, psnr, ssim
from .tensors import to_channels_first, to_frames_last


# ---------------------------------------------------------------- builders

def autoencoder_config(cfg: ExperimentConfig) -> AutoencoderConfig:
    return AutoencoderConfig(
        clip_length=cfg.dataset.clip_length,
        frame_height=cfg.dataset.height,
        frame_width=cfg.dataset.width,
        latent_channels=cfg.vae.latent_channels,
        image_base=cfg.vae.image_base,
        motion_base=cfg.vae.motion_base,
        decoder_base=cfg.vae.decoder_base,
        channel_mult=tuple(cfg.vae.channel_mult),
        blocks_per_res=cfg.vae.blocks_per_res,
    )


def epsnet_config(cfg: ExperimentConfig) -> EpsNetConfig:
    return EpsNetConfig(
        latent_channels=cfg.vae.latent_channels,
        base_channels=cfg.dmg.base_channels,
        channel_multipliers=tuple(cfg.dmg.channel_mult),
        blocks_per_resolution=cfg.dmg.blocks_per_res,
        attention_levels=tuple(cfg.dmg.attention_levels),
        cond_dim=cfg.dmg.cond_dim,
    )


def build_sources(cfg: ExperimentConfig):
    ds = cfg.dataset
    if ds.source == "synthetic":
        corpus = SyntheticSpriteCorpus(ds.train_clips, ds.test_clips,
                                       ds.clip_length, ds.height, ds.width)
        return _SyntheticSplit(corpus, "train"), _SyntheticSplit(corpus, "test")
    if not ds.path:
        raise ValueError("frame_folder source requires dataset.path")
    train = FrameFolderSource(ds.path, ds.clip_length, ds.height, ds.width)
    test = FrameFolderSource(ds.test_path or ds.path, ds.clip_length, ds.height, ds.width)
    return train, test


class _SyntheticSplit:
    """Adapter giving the synthetic corpus the same surface as FrameFolderSource."""

    def __init__(self, corpus: SyntheticSpriteCorpus, split: str):
        self.corpus = corpus
        self.split = split

    def size(self) -> int:
        return self.corpus.size(self.split)

    def record(self, index: int):
        return self.corpus.record(self.split, index)


def _stack_batch(source, indices) -> tuple[torch.Tensor, list]:
    records = [source.record(int(i)) for i in indices]
    videos = torch.stack([to_channels_first(r.video) for r in records])
    return videos, records


def config_digest(cfg_dict: dict) -> str:
    blob = yaml.safe_dump(cfg_dict, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def write_provenance(out_dir: Path, cfg: ExperimentConfig):
    out_dir.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out_dir / "config.yaml")


class JsonlLogger:
    def __init__(self, path: Path):
        path.parent.mkdir(parents=True, exist_ok=True)
        self.path = path

    def write(self, record: dict):
        with open(self.path, "a") as f:
            f.write(json.dumps(record) + "\n")


# ---------------------------------------------------------------- VAE stage

def train_vae(cfg: ExperimentConfig, out_dir: str | Path | None = None,
              resume: str | Path | None = None,
              max_steps: int | None = None) -> Path:
    """Full autoencoder training run; returns the final checkpoint path."""
    out_dir = Path(out_dir or cfg.run.output_dir) / "vae"
    write_provenance(out_dir, cfg)
    log = JsonlLogger(out_dir / "train_log.jsonl")
    train_src, test_src = build_sources(cfg)

    torch.manual_seed(cfg.training.seed)
    model = MotionContentAutoencoder(autoencoder_config(cfg))
    n = train_src.size()
    steps_per_epoch = math.ceil(n / cfg.training.vae_batch_size)
    total_steps = steps_per_epoch * cfg.training.vae_epochs
    trainer = VaeTrainer(
        model,
        beta=cfg.vae.beta,
        perceptual_weight=cfg.vae.perceptual_weight,
        perceptual_backend=cfg.vae.perceptual_backend,
        lr=cfg.training.vae_lr,
        disc_lr=cfg.training.vae_disc_lr,
        warmup_steps=int(cfg.vae.warmup_fraction * total_steps),
        seed=cfg.training.seed,
        disc_base=cfg.vae.disc_base,
        lambda_clip=cfg.vae.lambda_clip,
    )
    start_epoch, step = 0, 0
    if resume is not None:
        payload = load_checkpoint(resume, expect_stage="vae")
        model.load_state_dict(split_by_prefix(payload["params"], "autoencoder."))
        trainer.discriminator.load_state_dict(split_by_prefix(payload["params"], "discriminator."))
        trainer.opt_g.load_state_dict(payload["optimizers"]["generator"])
        trainer.opt_d.load_state_dict(payload["optimizers"]["discriminator"])
        start_epoch, step = payload["epoch"], payload["step"]
        trainer.step_count = step

    ckpt_path = out_dir / "vae_last.pt"

    def save(epoch: int):
        params = {}
        params.update(add_prefix(model.state_dict(), "autoencoder."))
        params.update(add_prefix(trainer.discriminator.state_dict(), "discriminator."))
        save_checkpoint(
            ckpt_path, stage="vae", params=params,
            optimizers={"generator": trainer.opt_g.state_dict(),
                        "discriminator": trainer.opt_d.state_dict()},
            config=cfg.to_dict(), step=step, epoch=epoch,
        )

    rng = np.random.default_rng(cfg.training.seed)
    for epoch in range(start_epoch, cfg.training.vae_epochs):
        order = np.random.default_rng((cfg.training.seed, epoch)).permutation(n)
        # skip batches already consumed when resuming mid-epoch
        done_in_epoch = step - epoch * steps_per_epoch
        t_epoch = time.time()
        for b in range(done_in_epoch, steps_per_epoch):
            idx = order[b * cfg.training.vae_batch_size:(b + 1) * cfg.training.vae_batch_size]
            videos, _ = _stack_batch(train_src, idx)
            breakdown = trainer.train_step(videos, step)
            step += 1
            if step % cfg.run.log_every_steps == 0:
                log.write({"stage": "vae", "epoch": epoch, "step": step,
                           **breakdown.as_dict()})
            if max_steps is not None and step >= max_steps:
                save(epoch)
                return ckpt_path
        scores = evaluate_reconstruction(model, test_src,
                                         limit=cfg.run.eval_clips_per_epoch)
        log.write({"stage": "vae", "epoch": epoch, "step": step,
                   "epoch_seconds": round(time.time() - t_epoch, 1), **scores})
        save(epoch + 1)
        if (cfg.run.early_stop_psnr is not None
                and scores["psnr"] >= cfg.run.early_stop_psnr):
            break
    _ = rng
    return ckpt_path


def load_vae(path: str | Path) -> tuple[MotionContentAutoencoder, ExperimentConfig]:
    from .config import config_from_dict
    payload = load_checkpoint(path, expect_stage="vae")
    cfg = config_from_dict(payload["config"])
    model = MotionContentAutoencoder(autoencoder_config(cfg))
    model.load_state_dict(split_by_prefix(payload["params"], "autoencoder."))
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    return model, cfg


@torch.no_grad()
def evaluate_reconstruction(model: MotionContentAutoencoder, source,
                            limit: int | None = None) -> dict:
    model.eval()
    n = source.size() if limit is None else min(limit, source.size())
    ps, ss = [], []
    for i in range(n):
        video = source.record(i).video
        batch = to_channels_first(video).unsqueeze(0)
        recon = model.reconstruct_batch(batch, sample=False)[0]
        recon_v = to_frames_last(recon[0])
        ps.append(psnr(video, recon_v))
        ss.append(ssim(video, recon_v))
    return {"psnr": float(np.mean(ps)), "ssim": float(np.mean(ss)), "clips": n}


# ---------------------------------------------------------------- DMG stage

def vae_param_digest(model: MotionContentAutoencoder) -> str:
    h = hashlib.sha256()
    for name, p in sorted(model.state_dict().items()):
        h.update(name.encode())
        h.update(p.detach().cpu().numpy().tobytes())
    return h.hexdigest()


@torch.no_grad()
def precompute_latents(model: MotionContentAutoencoder, source, batch: int = 8,
                       ) -> tuple[torch.Tensor, torch.Tensor, list]:
    """Frozen-encoder pass: normalized mu-mode latents, deepest content, captions."""
    model.eval()
    n = source.size()
    zs, deeps, caps = [], [], []
    for b0 in range(0, n, batch):
        idx = range(b0, min(b0 + batch, n))
        videos, records = _stack_batch(source, idx)
        _, _, z = model.encode_motion_batch(videos, sample=False)
        deepest, _ = model.encode_content_batch(videos[:, :, 0])
        zs.append(z)
        deeps.append(deepest.half())
        caps.extend(r.caption_ids for r in records)
    return torch.cat(zs), torch.cat(deeps), caps


def train_dmg(cfg: ExperimentConfig, vae_checkpoint: str | Path,
              out_dir: str | Path | None = None,
              resume: str | Path | None = None,
              max_steps: int | None = None) -> Path:
    out_dir = Path(out_dir or cfg.run.output_dir) / "dmg"
    write_provenance(out_dir, cfg)
    log = JsonlLogger(out_dir / "train_log.jsonl")
    vae, vae_cfg = load_vae(vae_checkpoint)
    if vae.training:
        raise RuntimeError("the video autoencoder must be frozen (eval mode) for this stage")
    if vae_cfg.vae.latent_channels != cfg.vae.latent_channels:
        raise RuntimeError("latent channel mismatch between vae checkpoint and config")
    expect_hw = autoencoder_config(cfg).latent_hw
    got_hw = autoencoder_config(vae_cfg).latent_hw
    if expect_hw != got_hw:
        raise RuntimeError(f"latent grid mismatch: checkpoint {got_hw}, config {expect_hw}")
    freeze_digest = vae_param_digest(vae)

    train_src, _ = build_sources(cfg)
    t0 = time.time()
    z_all, deep_all, caps_all = precompute_latents(vae, train_src)
    log.write({"stage": "dmg", "event": "latents_ready",
               "clips": int(z_all.shape[0]), "seconds": round(time.time() - t0, 1)})

    torch.manual_seed(cfg.training.seed + 1)
    eps_net = NoiseUNet(epsnet_config(cfg))
    cond_enc = ConditionEncoder(
        content_channels=autoencoder_config(cfg).content_channels,
        grid_hw=expect_hw, cond_dim=cfg.dmg.cond_dim,
        text_layers=cfg.dmg.text_layers, max_caption_len=cfg.dmg.max_caption_len,
    )
    sched = make_linear_schedule(cfg.dmg.diffusion_steps, cfg.dmg.beta_start,
                                 cfg.dmg.beta_end)
    trainer = DiffusionTrainer(eps_net, cond_enc, sched, lr=cfg.training.dmg_lr,
                               seed=cfg.training.seed + 1)
    start_epoch, step = 0, 0
    if resume is not None:
        payload = load_checkpoint(resume, expect_stage="dmg")
        eps_net.load_state_dict(split_by_prefix(payload["params"], "eps_net."))
        cond_enc.load_state_dict(split_by_prefix(payload["params"], "condition_encoder."))
        trainer.optimizer.load_state_dict(payload["optimizers"]["dmg"])
        start_epoch, step = payload["epoch"], payload["step"]
        trainer.step_count = step

    n = z_all.shape[0]
    bs = cfg.training.dmg_batch_size
    steps_per_epoch = math.ceil(n / bs)
    ckpt_path = out_dir / "dmg_last.pt"

    def save(epoch: int):
        params = {}
        params.update(add_prefix(eps_net.state_dict(), "eps_net."))
        params.update(add_prefix(cond_enc.state_dict(), "condition_encoder."))
        save_checkpoint(
            ckpt_path, stage="dmg", params=params,
            optimizers={"dmg": trainer.optimizer.state_dict()},
            config=cfg.to_dict(), step=step, epoch=epoch,
            extra={"vae_checkpoint": str(vae_checkpoint),
                   "vae_digest": freeze_digest,
                   "vocabulary": list(VOCABULARY),
                   "vocab_version": VOCAB_VERSION},
        )

    for epoch in range(start_epoch, cfg.training.dmg_epochs):
        order = np.random.default_rng((cfg.training.seed + 1, epoch)).permutation(n)
        done_in_epoch = step - epoch * steps_per_epoch
        losses = []
        for b in range(done_in_epoch, steps_per_epoch):
            idx = torch.from_numpy(order[b * bs:(b + 1) * bs].copy())
            z0 = z_all[idx]
            deepest = deep_all[idx].float()
            caps: list | None = None
            if cfg.dmg.use_captions:
                drop_rng = np.random.default_rng((cfg.training.seed + 1, 0xD509, step))
                caps = [
                    None if drop_rng.random() < cfg.dmg.caption_dropout else caps_all[int(i)]
                    for i in idx
                ]
            loss = trainer.train_step(z0, deepest, caps, step)
            losses.append(loss)
            step += 1
            if step % cfg.run.log_every_steps == 0:
                log.write({"stage": "dmg", "epoch": epoch, "step": step,
                           "loss": float(np.mean(losses[-cfg.run.log_every_steps:]))})
            if max_steps is not None and step >= max_steps:
                save(epoch)
                return ckpt_path
        log.write({"stage": "dmg", "epoch": epoch, "step": step,
                   "epoch_loss": float(np.mean(losses))})
        save(epoch + 1)

    if vae_param_digest(vae) != freeze_digest:
        raise RuntimeError("frozen autoencoder parameters changed during this stage")
    return ckpt_path


def load_dmg(path: str | Path) -> tuple[NoiseUNet, ConditionEncoder, ExperimentConfig, dict]:
    from .config import config_from_dict
    payload = load_checkpoint(path, expect_stage="dmg")
    cfg = config_from_dict(payload["config"])
    extra = payload["extra"]
    if extra.get("vocab_version") != VOCAB_VERSION:
        raise ValueError(f"checkpoint vocabulary version {extra.get('vocab_version')} "
                         f"does not match build version {VOCAB_VERSION}")
    if extra.get("vocabulary") != list(VOCABULARY):
        raise ValueError("checkpoint vocabulary differs from the build vocabulary")
    eps_net = NoiseUNet(epsnet_config(cfg))
    eps_net.load_state_dict(split_by_prefix(payload["params"], "eps_net."))
    eps_net.eval()
    cond_enc = ConditionEncoder(
        content_channels=autoencoder_config(cfg).content_channels,
        grid_hw=autoencoder_config(cfg).latent_hw, cond_dim=cfg.dmg.cond_dim,
        text_layers=cfg.dmg.text_layers, max_caption_len=cfg.dmg.max_caption_len,
    )
    cond_enc.load_state_dict(split_by_prefix(payload["params"], "condition_encoder."))
    cond_enc.eval()
    for p in list(eps_net.parameters()) + list(cond_enc.parameters()):
        p.requires_grad_(False)
    _ = vocab_size()
    return eps_net, cond_enc, cfg, extra


# ---------------------------------------------------------------- sampling

@torch.no_grad()
def generate_videos(vae: MotionContentAutoencoder, eps_net: NoiseUNet,
                    cond_enc: ConditionEncoder, cfg: ExperimentConfig,
                    first_frames: torch.Tensor,
                    captions: list[tuple[int, ...] | None] | None,
                    seed: int, emit_at: list[int] | None = None,
                    eps_fn=None, renormalize: bool = True,
                    ) -> tuple[torch.Tensor, dict[int, torch.Tensor]]:
    """first_frames (B, H, W, C) -> generated clips (B, L, H, W, C).

    When emit_at is given, also decodes the intermediate latents at those
    timesteps: the extra return maps timestep -> (B, L, H, W, C).
    """
    vae.eval(); eps_net.eval(); cond_enc.eval()
    frames = first_frames.movedim(-1, 1)
    deepest, pyramid = vae.encode_content_batch(frames)
    tokens, mask = cond_enc.encode_batch(deepest, captions)
    sched = make_linear_schedule(cfg.dmg.diffusion_steps, cfg.dmg.beta_start, cfg.dmg.beta_end)
    subseq = make_subsequence(sched.T, cfg.dmg.sampling_steps)
    d = cfg.vae.latent_channels
    h, w = autoencoder_config(cfg).latent_hw
    z, inter = sample_motion_batch(
        eps_fn or eps_net, tokens, mask, (d, h, w), sched, subseq, seed,
        sigma_rule=cfg.dmg.sigma_rule, emit_at=emit_at,
    )

    def decode(latents: torch.Tensor) -> torch.Tensor:
        zz = normalize_latent(latents) if renormalize else latents
        out = vae.decode_batch(zz, deepest, pyramid)
        return torch.stack([to_frames_last(v) for v in out])

    videos = decode(z)
    inter_videos = {t: decode(lat) for t, lat in inter.items()}
    return videos, inter_videos


@torch.no_grad()
def transfer_motion(vae: MotionContentAutoencoder, content_video: torch.Tensor,
                    motion_video: torch.Tensor) -> torch.Tensor:
    """Decode the motion latent of one clip with the content of another."""
    content = vae.encode_content(content_video[0])
    _, z = vae.encode_motion(motion_video, sample=False)
    return vae.decode(LatentMotion(z=z.z, normalized=True), content)
