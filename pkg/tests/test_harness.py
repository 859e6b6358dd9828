import json
import subprocess
import sys

import numpy as np
import pytest
import torch
import yaml

from motiongen.checkpoint import add_prefix, load_checkpoint, save_checkpoint, split_by_prefix
from motiongen.config import (
    ExperimentConfig,
    apply_overrides,
    config_from_dict,
    load_config,
    make_preset,
    save_config,
)
from motiongen.data.clipio import ClipReadError, read_clip, write_clip
from motiongen.data.corpus import FrameFolderSource, SyntheticSpriteCorpus
from motiongen.tensors import video_from_uint8, video_to_uint8

TINY_OVERRIDES = [
    "dataset.train_clips=6", "dataset.test_clips=3", "dataset.clip_length=4",
    "dataset.height=16", "dataset.width=16",
    "vae.image_base=8", "vae.motion_base=8", "vae.decoder_base=8", "vae.disc_base=8",
    "vae.latent_channels=2", "vae.channel_mult=[1,2]", "vae.spatial_factor=2",
    "training.vae_batch_size=3", "training.vae_epochs=1",
    "run.eval_clips_per_epoch=2", "run.early_stop_psnr=null",
]


def tiny_config(tmp_path, extra=()):
    cfg = make_preset("desk")
    return apply_overrides(cfg, TINY_OVERRIDES +
                           [f"run.output_dir={tmp_path}/run"] + list(extra))


class TestConfig:
    def test_yaml_round_trip(self, tmp_path):
        cfg = make_preset("desk")
        cfg.training.seed = 77
        save_config(cfg, tmp_path / "c.yaml")
        again = load_config(tmp_path / "c.yaml")
        assert again.to_dict() == cfg.to_dict()

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError, match="unknown config key"):
            config_from_dict({"vae": {"betta": 0.1}})
        with pytest.raises(ValueError, match="unknown config section"):
            config_from_dict({"vaee": {}})

    def test_override_precedence_and_validation(self):
        cfg = make_preset("desk")
        apply_overrides(cfg, ["training.seed=9", "dmg.sampling_steps=50"])
        assert cfg.training.seed == 9
        assert cfg.dmg.sampling_steps == 50
        with pytest.raises(ValueError):
            apply_overrides(cfg, ["training.nope=1"])
        with pytest.raises(ValueError):
            apply_overrides(cfg, ["dmg.sampling_steps=100000"])

    def test_spatial_factor_consistency_enforced(self):
        cfg = make_preset("desk")
        cfg.vae.spatial_factor = 8
        with pytest.raises(ValueError):
            cfg.validate()

    def test_presets_mirror_published_rows(self):
        bair = make_preset("bair")
        assert bair.vae.latent_channels == 3 and bair.vae.beta == 1e-2
        assert bair.dmg.base_channels == 192 and bair.dmg.diffusion_steps == 1000
        assert bair.dmg.sampling_steps == 200
        land = make_preset("landscape")
        assert land.dataset.clip_length == 32 and land.vae.beta == 1e-5
        assert land.dmg.channel_mult == [1, 2, 4, 4]
        cater = make_preset("cater_gen_v1")
        assert cater.vae.latent_channels == 1 and cater.dmg.use_captions


class TestCheckpoint:
    def test_round_trip_and_prefixes(self, tmp_path):
        params = {"autoencoder.a.weight": torch.randn(3, 3),
                  "discriminator.b.bias": torch.randn(2)}
        save_checkpoint(tmp_path / "c.pt", stage="vae", params=params,
                        optimizers={"generator": {"lr": 1}}, config={"x": 1},
                        step=5, epoch=1)
        payload = load_checkpoint(tmp_path / "c.pt", expect_stage="vae")
        assert payload["step"] == 5 and payload["config"] == {"x": 1}
        sub = split_by_prefix(payload["params"], "autoencoder.")
        assert torch.equal(sub["a.weight"], params["autoencoder.a.weight"])
        assert add_prefix(sub, "autoencoder.").keys() == {"autoencoder.a.weight"}

    def test_stage_and_version_checked(self, tmp_path):
        save_checkpoint(tmp_path / "c.pt", stage="vae", params={}, optimizers={},
                        config={}, step=0, epoch=0)
        with pytest.raises(ValueError):
            load_checkpoint(tmp_path / "c.pt", expect_stage="dmg")
        blob = torch.load(tmp_path / "c.pt", weights_only=False)
        blob["format_version"] = 99
        torch.save(blob, tmp_path / "bad.pt")
        with pytest.raises(ValueError):
            load_checkpoint(tmp_path / "bad.pt")


class TestUint8Conversion:
    def test_round_half_away_from_zero(self):
        # 0.5/255 boundaries: value mapping is floor(unit*255 + 0.5)
        unit = np.array([0.0, 0.4999 / 255, 0.5 / 255, 1.0 - 1e-9, 1.0])
        video = torch.from_numpy((unit * 2 - 1).astype(np.float32)).view(1, 1, -1, 1)
        u8 = video_to_uint8(video)
        assert u8.flatten().tolist() == [0, 0, 1, 255, 255]

    def test_quantized_videos_round_trip_exactly(self):
        rng = np.random.default_rng(0)
        u8 = rng.integers(0, 256, size=(2, 4, 4, 3), dtype=np.uint8)
        video = video_from_uint8(u8)
        assert np.array_equal(video_to_uint8(video), u8)


class TestClipIo:
    def test_export_ingest_bit_exact(self, tmp_path):
        corpus = SyntheticSpriteCorpus(4, 2, 4, 16, 16, cache=False)
        corpus.export(tmp_path / "clips", "train")
        src = FrameFolderSource(tmp_path / "clips", 4, 16, 16)
        assert src.size() == 4
        assert not src.report.errors
        for i in range(4):
            rec = src.record(i)
            orig = corpus.clip("train", i)
            assert torch.equal(rec.video, orig.video)
            assert rec.caption == orig.caption
            assert rec.meta["scene"] == orig.scene

    def test_short_clip_reported_not_raised(self, tmp_path):
        corpus = SyntheticSpriteCorpus(3, 1, 4, 16, 16, cache=False)
        corpus.export(tmp_path / "clips", "train")
        victim = tmp_path / "clips" / "clip_000001" / "frame_00003.png"
        victim.unlink()
        src = FrameFolderSource(tmp_path / "clips", 4, 16, 16)
        assert src.size() == 2
        assert len(src.report.errors) == 1
        assert "clip_000001" in str(src.report.errors[0][0])

    def test_mixed_resolution_rejected_per_clip(self, tmp_path):
        corpus = SyntheticSpriteCorpus(2, 1, 4, 16, 16, cache=False)
        corpus.export(tmp_path / "clips", "train")
        from PIL import Image
        bad = tmp_path / "clips" / "clip_000000" / "frame_00002.png"
        Image.new("RGB", (8, 8)).save(bad)
        src = FrameFolderSource(tmp_path / "clips", 4, 16, 16)
        assert src.size() == 1
        assert any("resolution" in msg for _, msg in src.report.errors)

    def test_unknown_caption_word_reported(self, tmp_path):
        corpus = SyntheticSpriteCorpus(2, 1, 4, 16, 16, cache=False)
        corpus.export(tmp_path / "clips", "train")
        (tmp_path / "clips" / "clip_000000" / "caption.txt").write_text("weird words\n")
        src = FrameFolderSource(tmp_path / "clips", 4, 16, 16)
        assert len(src.report.errors) == 1

    def test_read_clip_errors(self, tmp_path):
        (tmp_path / "empty").mkdir()
        with pytest.raises(ClipReadError):
            read_clip(tmp_path / "empty")
        video = torch.zeros(2, 8, 8, 3)
        write_clip(tmp_path / "c", video)
        with pytest.raises(ClipReadError):
            read_clip(tmp_path / "c", expect_frames=4)


class TestTrainingHarness:
    def test_vae_resume_bit_exact(self, tmp_path):
        # one uninterrupted run vs save/load mid-run: the next step must agree
        from motiongen.harness import train_vae

        cfg = tiny_config(tmp_path)
        torch.manual_seed(0)
        ckpt = train_vae(cfg, out_dir=tmp_path / "a", max_steps=1)
        cfg2 = tiny_config(tmp_path)
        torch.manual_seed(0)
        ckpt2 = train_vae(cfg2, out_dir=tmp_path / "b", resume=ckpt, max_steps=2)
        cfg3 = tiny_config(tmp_path)
        torch.manual_seed(0)
        ckpt3 = train_vae(cfg3, out_dir=tmp_path / "c", max_steps=2)
        pa = load_checkpoint(ckpt2)["params"]
        pb = load_checkpoint(ckpt3)["params"]
        assert pa.keys() == pb.keys()
        for k in pa:
            assert torch.equal(pa[k], pb[k]), f"parameter {k} diverged after resume"

    def test_dmg_stage_runs_and_freezes_vae(self, tmp_path):
        from motiongen.harness import load_vae, train_dmg, train_vae, vae_param_digest

        cfg = tiny_config(tmp_path, extra=[
            "dmg.base_channels=8", "dmg.channel_mult=[1,2]", "dmg.attention_levels=[2]",
            "dmg.cond_dim=16", "dmg.max_caption_len=8", "dmg.diffusion_steps=20",
            "dmg.sampling_steps=5", "training.dmg_batch_size=3", "training.dmg_epochs=1",
        ])
        vae_ckpt = train_vae(cfg, out_dir=tmp_path / "r", max_steps=1)
        before = vae_param_digest(load_vae(vae_ckpt)[0])
        dmg_ckpt = train_dmg(cfg, vae_ckpt, out_dir=tmp_path / "r")
        after = vae_param_digest(load_vae(vae_ckpt)[0])
        assert before == after
        payload = load_checkpoint(dmg_ckpt, expect_stage="dmg")
        assert payload["extra"]["vae_digest"] == before
        assert payload["extra"]["vocab_version"] == 1

    def test_dmg_rejects_mismatched_vae(self, tmp_path):
        from motiongen.harness import train_dmg, train_vae

        cfg = tiny_config(tmp_path)
        vae_ckpt = train_vae(cfg, out_dir=tmp_path / "r", max_steps=1)
        cfg_bad = tiny_config(tmp_path, extra=["vae.latent_channels=3"])
        with pytest.raises(RuntimeError, match="latent channel"):
            train_dmg(cfg_bad, vae_ckpt, out_dir=tmp_path / "bad")


class TestCli:
    def run_cli(self, *args):
        return subprocess.run([sys.executable, "-m", "motiongen.cli", *args],
                              capture_output=True, text=True)

    def test_flops_command(self, tmp_path):
        res = self.run_cli("flops", "--out", str(tmp_path / "f"))
        assert res.returncode == 0, res.stderr
        assert "latent_motion_2d" in res.stdout
        rows = (tmp_path / "f" / "complexity.csv").read_text().splitlines()
        assert rows[0] == "paradigm,per_step_cost,total_cost,speedup_vs_pixel"
        assert len(rows) == 4

    def test_make_data_and_audit(self, tmp_path):
        res = self.run_cli(
            "make-data", "--out", str(tmp_path / "d"), "--split", "test", "--limit", "2",
            "--set", "dataset.clip_length=4", "--set", "dataset.height=16",
            "--set", "dataset.width=16",
        )
        assert res.returncode == 0, res.stderr
        assert (tmp_path / "d" / "test" / "clip_000000" / "frame_00000.png").exists()
        res = self.run_cli("audit", "--run-dir", str(tmp_path / "d"))
        assert res.returncode == 0, res.stdout + res.stderr
        assert "AUDIT OK" in res.stdout

    def test_audit_detects_mismatch(self, tmp_path):
        (tmp_path / "x").mkdir()
        save_config(make_preset("desk"), tmp_path / "x" / "config.yaml")
        other = make_preset("desk")
        other.training.seed = 999
        (tmp_path / "x" / "sub").mkdir()
        save_config(other, tmp_path / "x" / "sub" / "config.yaml")
        res = self.run_cli("audit", "--run-dir", str(tmp_path / "x"))
        assert res.returncode == 2
        assert "AUDIT FAIL" in res.stdout

    def test_usage_error_exit_code(self):
        res = self.run_cli("train-vae", "--set", "vae.not_a_key=1")
        assert res.returncode == 1

    def test_missing_checkpoint_is_config_error(self, tmp_path):
        res = self.run_cli("reconstruct", "--vae-checkpoint",
                           str(tmp_path / "nope.pt"), "--out", str(tmp_path / "o"))
        assert res.returncode in (1, 2)
        assert res.stdout == "" or "error" in res.stderr.lower()
