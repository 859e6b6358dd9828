"""Evaluation protocols for the trained two-stage pipeline.

These functions implement the quantitative probes behind the acceptance
targets: reconstruction quality, motion-transfer decomposition, conditional
generation quality against a noise baseline, and caption controllability.
All randomness is seed-controlled.
"""

from __future__ import annotations

import numpy as np
import torch

from .autoencoder import MotionContentAutoencoder
from .config import ExperimentConfig
from .data import classify_trajectory, encode_caption, measure_trajectory
from .data.corpus import PAIR_SEED_BASE, SyntheticSpriteCorpus
from .data.sprites import generate_transfer_pair, render_clip
from .generator import CallCounter, ConditionEncoder, NoiseUNet
from .harness import autoencoder_config, generate_videos, transfer_motion
from .metrics import extract_stats, frechet_distance, psnr, ssim
from .tensors import to_channels_first, to_frames_last


@torch.no_grad()
def reconstruction_metrics(vae: MotionContentAutoencoder, cfg: ExperimentConfig,
                           n_clips: int = 128, batch: int = 8) -> dict:
    """Held-out PSNR/SSIM plus Frechet distances between real and reconstructed."""
    ds = cfg.dataset
    corpus = SyntheticSpriteCorpus(ds.train_clips, ds.test_clips, ds.clip_length,
                                   ds.height, ds.width, cache=False)
    n = min(n_clips, corpus.size("test"))
    vae.eval()
    ps, ss, real, recon = [], [], [], []
    for b0 in range(0, n, batch):
        idx = range(b0, min(b0 + batch, n))
        videos = torch.stack([to_channels_first(corpus.clip("test", i).video) for i in idx])
        out = vae.reconstruct_batch(videos, sample=False)[0]
        for k in range(videos.shape[0]):
            x = to_frames_last(videos[k])
            y = to_frames_last(out[k])
            ps.append(psnr(x, y))
            ss.append(ssim(x, y))
            real.append(x)
            recon.append(y)
    fd_frame = frechet_distance(extract_stats(real, "frame_features"),
                                extract_stats(recon, "frame_features"))
    fd_clip = frechet_distance(extract_stats(real, "clip_features"),
                               extract_stats(recon, "clip_features"))
    return {"psnr": float(np.mean(ps)), "ssim": float(np.mean(ss)),
            "frechet_frame": fd_frame, "frechet_clip": fd_clip, "clips": n}


@torch.no_grad()
def transfer_metrics(vae: MotionContentAutoencoder, cfg: ExperimentConfig,
                     n_pairs: int = 128) -> dict:
    """Motion-transfer decomposition probe over held-out layout-matched pairs.

    For each pair (content scene A, motion scene B): decode(z_B, content_A)
    and classify the acting sprite's measured trajectory. Success = label
    matches B's action; appearance leak = label matches A's action; centroid
    error is against B's analytic trajectory.
    """
    ds = cfg.dataset
    vae.eval()
    match_motion = match_appearance = 0
    centroid_errors, valid = [], 0
    for k in range(n_pairs):
        scene_a, scene_b = generate_transfer_pair(
            PAIR_SEED_BASE + k, ds.clip_length, ds.height, ds.width)
        clip_a = render_clip(scene_a, ds.clip_length, ds.height, ds.width)
        clip_b = render_clip(scene_b, ds.clip_length, ds.height, ds.width)
        hybrid = transfer_motion(vae, clip_a.video, clip_b.video)
        idx = scene_a.action.sprite_index
        track = measure_trajectory(hybrid, scene_a)[idx]
        points = [p for p in track if p is not None]
        if len(points) < 2:
            continue
        valid += 1
        label = classify_trajectory(track)
        match_motion += label == scene_b.action.kind
        match_appearance += label == scene_a.action.kind
        want = clip_b.trajectory[idx]
        errs = [np.hypot(p[0] - want[t, 0], p[1] - want[t, 1])
                for t, p in enumerate(track) if p is not None]
        centroid_errors.append(float(np.mean(errs)))
    if valid == 0:
        raise RuntimeError("no transfer pair produced a measurable acting sprite")
    return {
        "pairs": n_pairs,
        "valid": valid,
        "motion_match_rate": match_motion / n_pairs,
        "appearance_match_rate": match_appearance / n_pairs,
        "mean_centroid_error_px": float(np.mean(centroid_errors)),
    }


def _noise_videos(n: int, cfg: ExperimentConfig, seed: int) -> list[torch.Tensor]:
    gen = torch.Generator().manual_seed(seed)
    ds = cfg.dataset
    return [torch.rand((ds.clip_length, ds.height, ds.width, 3), generator=gen) * 2 - 1
            for _ in range(n)]


@torch.no_grad()
def generation_metrics(vae: MotionContentAutoencoder, eps_net: NoiseUNet,
                       cond_enc: ConditionEncoder, cfg: ExperimentConfig,
                       n_clips: int = 256, batch: int = 32, seed: int = 0) -> dict:
    """Image-conditioned generation vs held-out clips and a noise baseline.

    Also verifies the per-clip sampler call count and measures two-seed
    diversity on the first condition batch.
    """
    ds = cfg.dataset
    corpus = SyntheticSpriteCorpus(ds.train_clips, ds.test_clips, ds.clip_length,
                                   ds.height, ds.width, cache=False)
    n = min(n_clips, corpus.size("test"))
    real, generated = [], []
    eps_calls_per_clip = None
    for b0 in range(0, n, batch):
        idx = list(range(b0, min(b0 + batch, n)))
        clips = [corpus.clip("test", i) for i in idx]
        frames = torch.stack([c.video[0] for c in clips])
        counter = CallCounter(eps_net)
        videos, _ = generate_videos(vae, eps_net, cond_enc, cfg, frames, None,
                                    seed=seed + b0, eps_fn=counter)
        eps_calls_per_clip = counter.calls  # batched: calls == K regardless of B
        real.extend(c.video for c in clips)
        generated.extend(videos[k] for k in range(videos.shape[0]))

    stats_real = extract_stats(real, "clip_features")
    fd_gen = frechet_distance(stats_real, extract_stats(generated, "clip_features"))
    noise = _noise_videos(n, cfg, seed=seed + 999)
    fd_noise = frechet_distance(stats_real, extract_stats(noise, "clip_features"))

    # diversity: same condition, two seeds, on a small probe batch
    probe = torch.stack([corpus.clip("test", i).video[0]
                         for i in range(min(8, corpus.size("test")))])
    vid_a, _ = generate_videos(vae, eps_net, cond_enc, cfg, probe, None, seed=1234)
    vid_b, _ = generate_videos(vae, eps_net, cond_enc, cfg, probe, None, seed=5678)
    diversity = float((vid_a - vid_b).abs().mean().item())

    # deterministic reconstruction is a pure function: its two-run diversity is 0
    clip0 = corpus.clip("test", 0)
    b0v = to_channels_first(clip0.video).unsqueeze(0)
    r1 = vae.reconstruct_batch(b0v, sample=False)[0]
    r2 = vae.reconstruct_batch(b0v, sample=False)[0]
    recon_diversity = float((r1 - r2).abs().mean().item())

    return {
        "clips": n,
        "frechet_generated": fd_gen,
        "frechet_noise_baseline": fd_noise,
        "frechet_ratio": fd_gen / fd_noise if fd_noise > 0 else float("inf"),
        "eps_calls_per_clip": eps_calls_per_clip,
        "diversity_two_seeds": diversity,
        "diversity_reconstruction_baseline": recon_diversity,
    }


@torch.no_grad()
def controllability_metrics(vae: MotionContentAutoencoder, eps_net: NoiseUNet,
                            cond_enc: ConditionEncoder, cfg: ExperimentConfig,
                            n_clips: int = 128, batch: int = 32, seed: int = 0,
                            emit_at: list[int] | None = None) -> dict:
    """Caption-conditioned generation: does the decoded clip perform the
    captioned action on the captioned sprite?

    With emit_at, also reports the match rate of clips decoded from
    intermediate latents at each requested timestep.
    """
    ds = cfg.dataset
    corpus = SyntheticSpriteCorpus(ds.train_clips, ds.test_clips, ds.clip_length,
                                   ds.height, ds.width, cache=False)
    n = min(n_clips, corpus.size("test"))
    matches = 0
    timestep_matches: dict[int, int] = {t: 0 for t in (emit_at or [])}
    for b0 in range(0, n, batch):
        idx = list(range(b0, min(b0 + batch, n)))
        clips = [corpus.clip("test", i) for i in idx]
        frames = torch.stack([c.video[0] for c in clips])
        captions = [tuple(encode_caption(c.caption)) for c in clips]
        videos, inter = generate_videos(vae, eps_net, cond_enc, cfg, frames, captions,
                                        seed=seed + b0, emit_at=emit_at)

        def count_matches(batch_videos) -> int:
            got = 0
            for k, clip in enumerate(clips):
                scene = clip.scene
                track = measure_trajectory(batch_videos[k], scene)[scene.action.sprite_index]
                try:
                    got += classify_trajectory(track) == scene.action.kind
                except ValueError:
                    pass
            return got

        matches += count_matches(videos)
        for t, vids in inter.items():
            timestep_matches[t] += count_matches(vids)
    out = {"clips": n, "caption_match_rate": matches / n}
    for t, m in sorted(timestep_matches.items()):
        out[f"match_rate_t{t}"] = m / n
    return out


def evaluation_report(vae, cfg: ExperimentConfig, dmg=None, recon_clips: int = 128,
                      gen_clips: int = 64, seed: int = 0) -> dict:
    """Flat metric dict for the evaluate command."""
    report = {}
    for k, v in reconstruction_metrics(vae, cfg, n_clips=recon_clips).items():
        report[f"reconstruction_{k}"] = v
    try:
        for k, v in transfer_metrics(vae, cfg, n_pairs=min(recon_clips, 128)).items():
            report[f"transfer_{k}"] = v
    except RuntimeError as e:
        # frame geometry too small for the pair generator, or nothing measurable
        report["transfer_error"] = str(e)
    if dmg is not None:
        eps_net, cond_enc, dmg_cfg, _ = dmg
        for k, v in generation_metrics(vae, eps_net, cond_enc, dmg_cfg,
                                       n_clips=gen_clips, seed=seed).items():
            report[f"generation_{k}"] = v
        if dmg_cfg.dmg.use_captions:
            for k, v in controllability_metrics(vae, eps_net, cond_enc, dmg_cfg,
                                                n_clips=gen_clips, seed=seed).items():
                report[f"controllability_{k}"] = v
    return report
