"""Command-line surface.

Commands: make-data, train-vae, train-dmg, sample, reconstruct,
transfer-motion, decode-timesteps, evaluate, flops, audit.

Exit codes: 0 success, 1 usage/config error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
import torch

from .config import ExperimentConfig, apply_overrides, load_config, make_preset


def _resolve_config(args) -> ExperimentConfig:
    if getattr(args, "config", None):
        cfg = load_config(args.config)
    else:
        cfg = make_preset(getattr(args, "preset", "desk"))
    overrides = getattr(args, "set", None) or []
    return apply_overrides(cfg, overrides)


def _load_image(path: str) -> torch.Tensor:
    from PIL import Image

    from .tensors import video_from_uint8
    arr = np.asarray(Image.open(path).convert("RGB"))
    return video_from_uint8(arr[None])[0]


def _write_frames(out_dir: Path, video: torch.Tensor, caption: str | None = None):
    from .data.clipio import write_clip
    write_clip(out_dir, video, caption)


def cmd_make_data(args) -> int:
    from .data.corpus import SyntheticSpriteCorpus
    cfg = _resolve_config(args)
    ds = cfg.dataset
    corpus = SyntheticSpriteCorpus(ds.train_clips, ds.test_clips, ds.clip_length,
                                   ds.height, ds.width, cache=False)
    out = Path(args.out)
    for split in (["train", "test"] if args.split == "both" else [args.split]):
        n = corpus.export(out / split, split, limit=args.limit)
        print(f"wrote {n} {split} clips under {out / split}")
    from .harness import write_provenance
    write_provenance(out, cfg)
    return 0


def cmd_train_vae(args) -> int:
    from .harness import train_vae
    cfg = _resolve_config(args)
    ckpt = train_vae(cfg, resume=args.resume, max_steps=args.max_steps)
    print(f"checkpoint: {ckpt}")
    return 0


def cmd_train_dmg(args) -> int:
    from .harness import train_dmg
    cfg = _resolve_config(args)
    ckpt = train_dmg(cfg, args.vae_checkpoint, resume=args.resume,
                     max_steps=args.max_steps)
    print(f"checkpoint: {ckpt}")
    return 0


def _load_stage_pair(args):
    from .harness import load_dmg, load_vae
    vae, _ = load_vae(args.vae_checkpoint)
    eps_net, cond_enc, cfg, extra = load_dmg(args.dmg_checkpoint)
    return vae, eps_net, cond_enc, cfg, extra


def _first_frame_from_args(args, cfg) -> torch.Tensor:
    if args.image:
        frame = _load_image(args.image)
    else:
        from .data.corpus import SyntheticSpriteCorpus
        ds = cfg.dataset
        corpus = SyntheticSpriteCorpus(ds.train_clips, ds.test_clips, ds.clip_length,
                                       ds.height, ds.width, cache=False)
        frame = corpus.clip("test", args.test_index).video[0]
    f = 2 ** (len(cfg.vae.channel_mult) - 1)
    if frame.shape[0] % f or frame.shape[1] % f:
        raise ValueError(f"image size {tuple(frame.shape[:2])} not divisible by f_s={f}")
    if (frame.shape[0], frame.shape[1]) != (cfg.dataset.height, cfg.dataset.width):
        raise ValueError(
            f"image size {tuple(frame.shape[:2])} does not match checkpoint config "
            f"{(cfg.dataset.height, cfg.dataset.width)}"
        )
    return frame


def cmd_sample(args) -> int:
    from .data import encode_caption
    from .harness import generate_videos, write_provenance
    vae, eps_net, cond_enc, cfg, _ = _load_stage_pair(args)
    frame = _first_frame_from_args(args, cfg)
    captions = None
    if args.caption:
        captions = [tuple(encode_caption(args.caption))]
    videos, _ = generate_videos(vae, eps_net, cond_enc, cfg, frame[None],
                                captions, seed=args.seed)
    out = Path(args.out)
    _write_frames(out / "sample_000", videos[0], args.caption)
    write_provenance(out, cfg)
    print(f"wrote {out / 'sample_000'}")
    return 0


def cmd_reconstruct(args) -> int:
    from .data.clipio import read_clip
    from .harness import load_vae, write_provenance
    from .tensors import to_channels_first, to_frames_last
    vae, cfg = load_vae(args.vae_checkpoint)
    if args.clip:
        video, caption, _ = read_clip(args.clip, expect_frames=cfg.dataset.clip_length)
    else:
        from .data.corpus import SyntheticSpriteCorpus
        ds = cfg.dataset
        corpus = SyntheticSpriteCorpus(ds.train_clips, ds.test_clips, ds.clip_length,
                                       ds.height, ds.width, cache=False)
        c = corpus.clip("test", args.test_index)
        video, caption = c.video, c.caption
    recon = vae.reconstruct_batch(to_channels_first(video).unsqueeze(0))[0]
    out = Path(args.out)
    _write_frames(out / "original", video, caption)
    _write_frames(out / "reconstruction", to_frames_last(recon[0]), caption)
    write_provenance(out, cfg)
    print(f"wrote {out}")
    return 0


def cmd_transfer_motion(args) -> int:
    from .data.clipio import read_clip
    from .harness import load_vae, transfer_motion, write_provenance
    vae, cfg = load_vae(args.vae_checkpoint)
    content, _, _ = read_clip(args.content_clip, expect_frames=cfg.dataset.clip_length)
    motion, _, _ = read_clip(args.motion_clip, expect_frames=cfg.dataset.clip_length)
    hybrid = transfer_motion(vae, content, motion)
    out = Path(args.out)
    _write_frames(out / "hybrid", hybrid)
    write_provenance(out, cfg)
    print(f"wrote {out / 'hybrid'}")
    return 0


def cmd_decode_timesteps(args) -> int:
    from .data import encode_caption
    from .harness import generate_videos, write_provenance
    vae, eps_net, cond_enc, cfg, _ = _load_stage_pair(args)
    frame = _first_frame_from_args(args, cfg)
    captions = [tuple(encode_caption(args.caption))] if args.caption else None
    emit = args.timesteps or cfg.dmg.intermediate_timesteps
    _, inter = generate_videos(vae, eps_net, cond_enc, cfg, frame[None], captions,
                               seed=args.seed, emit_at=list(emit))
    out = Path(args.out)
    for t, vids in sorted(inter.items()):
        _write_frames(out / f"t_{t:04d}", vids[0], args.caption)
    write_provenance(out, cfg)
    print(f"wrote {len(inter)} timestep decodes under {out}")
    return 0


def cmd_evaluate(args) -> int:
    from .evaluation import evaluation_report
    from .harness import load_vae, write_provenance
    vae, cfg = load_vae(args.vae_checkpoint)
    dmg = None
    if args.dmg_checkpoint:
        from .harness import load_dmg
        dmg = load_dmg(args.dmg_checkpoint)
    report = evaluation_report(vae, cfg, dmg, recon_clips=args.clips,
                               gen_clips=args.samples, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = [f"{k}: {v}" for k, v in report.items()]
    (out / "metrics.txt").write_text("\n".join(lines) + "\n")
    with open(out / "metrics.csv", "w") as f:
        f.write("metric,value\n")
        for k, v in report.items():
            f.write(f"{k},{v}\n")
    write_provenance(out, cfg)
    for line in lines:
        print(line)
    return 0


def cmd_flops(args) -> int:
    from .complexity import comparison_table
    cfg = _resolve_config(args)
    table, rows = comparison_table(
        L=cfg.dataset.clip_length, H=cfg.dataset.height, W=cfg.dataset.width,
        f_s=cfg.vae.spatial_factor, f_t=cfg.dataset.clip_length,
        K=cfg.dmg.sampling_steps,
    )
    print(table)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "complexity.txt").write_text(table + "\n")
        with open(out / "complexity.csv", "w") as f:
            f.write("paradigm,per_step_cost,total_cost,speedup_vs_pixel\n")
            for r in rows:
                f.write(f"{r['paradigm']},{r['per_step']},{r['total']},{r['speedup']}\n")
    return 0


def cmd_audit(args) -> int:
    from .harness import config_digest
    root = Path(args.run_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"{root} is not a directory")
    digests = {}
    for cfg_path in sorted(root.rglob("config.yaml")):
        import yaml
        with open(cfg_path) as f:
            digests[str(cfg_path)] = config_digest(yaml.safe_load(f))
    from .checkpoint import load_checkpoint
    for ckpt_path in sorted(root.rglob("*.pt")):
        try:
            payload = load_checkpoint(ckpt_path)
        except Exception as e:  # unreadable checkpoints are an audit failure
            print(f"FAIL {ckpt_path}: {e}")
            return 2
        digests[str(ckpt_path)] = config_digest(payload["config"])
    if not digests:
        print(f"no artifacts found under {root}")
        return 2
    unique = sorted(set(digests.values()))
    for path, dig in digests.items():
        print(f"{dig[:12]}  {path}")
    if len(unique) > 1:
        print(f"AUDIT FAIL: {len(unique)} distinct configs in one run directory")
        return 2
    print(f"AUDIT OK: {len(digests)} artifacts share config {unique[0][:12]}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="motiongen",
                                description="Two-stage motion-latent video generation")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", help="YAML config file")
            sp.add_argument("--preset", default="desk",
                            help="named preset when no config file is given")
            sp.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                            help="config override (repeatable)")

    sp = sub.add_parser("make-data", help="export the synthetic corpus as clip folders")
    common(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--split", choices=["train", "test", "both"], default="both")
    sp.add_argument("--limit", type=int, default=None)
    sp.set_defaults(fn=cmd_make_data)

    sp = sub.add_parser("train-vae", help="train the video autoencoder")
    common(sp)
    sp.add_argument("--resume")
    sp.add_argument("--max-steps", type=int, default=None)
    sp.set_defaults(fn=cmd_train_vae)

    sp = sub.add_parser("train-dmg", help="train the diffusion motion generator")
    common(sp)
    sp.add_argument("--vae-checkpoint", required=True)
    sp.add_argument("--resume")
    sp.add_argument("--max-steps", type=int, default=None)
    sp.set_defaults(fn=cmd_train_dmg)

    sp = sub.add_parser("sample", help="image(+caption)-conditioned video generation")
    sp.add_argument("--vae-checkpoint", required=True)
    sp.add_argument("--dmg-checkpoint", required=True)
    sp.add_argument("--image", help="first-frame image (PNG)")
    sp.add_argument("--test-index", type=int, default=0,
                    help="use a held-out synthetic first frame instead of --image")
    sp.add_argument("--caption")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_sample)

    sp = sub.add_parser("reconstruct", help="round-trip a clip through the autoencoder")
    sp.add_argument("--vae-checkpoint", required=True)
    sp.add_argument("--clip", help="clip folder; defaults to a held-out synthetic clip")
    sp.add_argument("--test-index", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_reconstruct)

    sp = sub.add_parser("transfer-motion", help="decode one clip's motion with another's content")
    sp.add_argument("--vae-checkpoint", required=True)
    sp.add_argument("--content-clip", required=True)
    sp.add_argument("--motion-clip", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_transfer_motion)

    sp = sub.add_parser("decode-timesteps", help="decode intermediate sampling states")
    sp.add_argument("--vae-checkpoint", required=True)
    sp.add_argument("--dmg-checkpoint", required=True)
    sp.add_argument("--image")
    sp.add_argument("--test-index", type=int, default=0)
    sp.add_argument("--caption")
    sp.add_argument("--timesteps", type=int, nargs="*", default=None)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_decode_timesteps)

    sp = sub.add_parser("evaluate", help="reconstruction/generation metrics report")
    sp.add_argument("--vae-checkpoint", required=True)
    sp.add_argument("--dmg-checkpoint")
    sp.add_argument("--clips", type=int, default=128,
                    help="held-out clips for reconstruction metrics")
    sp.add_argument("--samples", type=int, default=64,
                    help="generated clips for the distribution metrics")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_evaluate)

    sp = sub.add_parser("flops", help="analytic sampling-cost comparison")
    common(sp)
    sp.add_argument("--out")
    sp.set_defaults(fn=cmd_flops)

    sp = sub.add_parser("audit", help="verify artifact provenance in a run directory")
    sp.add_argument("--run-dir", required=True)
    sp.set_defaults(fn=cmd_audit)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 1 if e.code not in (0, None) else 0
    try:
        cfg_err = (ValueError, FileNotFoundError, KeyError)
        try:
            return args.fn(args)
        except cfg_err as e:
            print(f"error: {e}", file=sys.stderr)
            return 1
    except Exception as e:  # runtime failure
        print(f"runtime failure: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
