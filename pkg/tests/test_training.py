import dataclasses

import numpy as np
import pytest
import torch

from panelforge.models.generator import build_model
from panelforge.training.checkpoint import CheckpointArchive, CheckpointError
from panelforge.training.config import ConfigError, TrainConfig, load_train_config, save_train_config, train_config_from_flat
from panelforge.training.harness import STAGE1_SECTIONS, train_stage1, train_stage2
from conftest import tiny_pipeline_config


def tiny_train_config(stage=1, **overrides):
    defaults = dict(
        learning_rate=2e-3, steps=6, batch_max=4, log_every=0,
        model=tiny_pipeline_config(),
    )
    defaults.update(overrides)
    return TrainConfig.for_stage(stage, **defaults)


class TestTrainConfig:
    def test_stage_defaults(self):
        c1 = TrainConfig.for_stage(1)
        assert c1.learning_rate == pytest.approx(1e-5)
        c2 = TrainConfig.for_stage(2)
        assert c2.learning_rate == pytest.approx(1e-4)
        assert (c2.lambda_lm, c2.lambda_mse, c2.lambda_diff) == (1.0, 6.0, 1.0)
        assert c2.self_rate == 0.5

    def test_no_adapter_refuses_stage2(self):
        with pytest.raises(ConfigError):
            TrainConfig.for_stage(2, no_adapter=True)

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError) as err:
            train_config_from_flat({"stage": 1, "nonsense_key": 3})
        assert "nonsense_key" in str(err.value)

    def test_unknown_model_key_rejected(self):
        with pytest.raises(ConfigError):
            train_config_from_flat({"stage": 1, "model.nonsense": 3})

    def test_flat_round_trip(self, tmp_path):
        cfg = tiny_train_config(steps=42, self_rate=0.25)
        path = tmp_path / "cfg.yaml"
        save_train_config(cfg, path)
        loaded = load_train_config(path)
        assert loaded.steps == 42
        assert loaded.self_rate == 0.25
        assert loaded.model == cfg.model

    def test_every_field_addressable(self, tmp_path):
        cfg = tiny_train_config()
        flat = cfg.flat_dict()
        import dataclasses as dc

        train_fields = {f.name for f in dc.fields(TrainConfig) if f.name != "model"}
        model_fields = {f"model.{f.name}" for f in dc.fields(type(cfg.model))}
        assert set(flat) == train_fields | model_fields

    def test_type_errors_name_key(self):
        with pytest.raises(ConfigError) as err:
            train_config_from_flat({"stage": 1, "steps": "many"})
        assert "steps" in str(err.value)

    def test_bad_bucket_rejected(self):
        with pytest.raises(ConfigError):
            tiny_train_config(model=tiny_pipeline_config(buckets=((60, 64),)))


class TestCheckpointArchive:
    def test_save_load_round_trip_bytes(self, tmp_path):
        model = build_model(tiny_pipeline_config())
        archive = CheckpointArchive.from_model(model, {"stage": 1}, step=3, config_hash="abc")
        p1 = tmp_path / "a.pfckpt"
        p2 = tmp_path / "b.pfckpt"
        archive.save(p1)
        CheckpointArchive.load(p1).save(p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_sections_present(self):
        model = build_model(tiny_pipeline_config())
        archive = CheckpointArchive.from_model(model, {}, step=0)
        assert set(archive.sections) == {
            "denoiser", "dialog-embedding", "encoders", "resampler", "text-encoder", "adapter",
        }
        assert archive.section_meta["adapter"]["lora_rank"] == 4

    def test_hash_detects_corruption(self, tmp_path):
        model = build_model(tiny_pipeline_config())
        archive = CheckpointArchive.from_model(model, {}, step=0)
        path = tmp_path / "c.pfckpt"
        archive.save(path)
        raw = bytearray(path.read_bytes())
        raw[-1] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError):
            CheckpointArchive.load(path)

    def test_apply_restores_weights(self, tmp_path):
        cfg = tiny_pipeline_config()
        model_a = build_model(cfg)
        archive = CheckpointArchive.from_model(model_a, {}, step=0)
        model_b = build_model(dataclasses.replace(cfg, seed=99))
        assert not torch.equal(
            next(model_a.unet.parameters()), next(model_b.unet.parameters())
        )
        archive.apply_to_model(model_b)
        for pa, pb in zip(model_a.parameters(), model_b.parameters()):
            assert torch.equal(pa, pb)


class TestStage1:
    def test_zero_steps_returns_initial_model(self, small_corpus):
        cfg = tiny_train_config(steps=0)
        archive, model, log = train_stage1(small_corpus, cfg)
        fresh = build_model(cfg.effective_model())
        ref = CheckpointArchive.from_model(fresh, {}, 0)
        for name in STAGE1_SECTIONS:
            assert archive.section_hash(name) == ref.section_hash(name)
        assert archive.step == 0 and log.rows == []

    def test_same_seed_identical_loss_curves(self, small_corpus):
        a = train_stage1(small_corpus, tiny_train_config(seed=5))[2]
        b = train_stage1(small_corpus, tiny_train_config(seed=5))[2]
        assert a.column("loss") == b.column("loss")

    def test_different_seed_differs(self, small_corpus):
        a = train_stage1(small_corpus, tiny_train_config(seed=5))[2]
        b = train_stage1(small_corpus, tiny_train_config(seed=6))[2]
        assert a.column("loss") != b.column("loss")

    def test_writes_log_and_figure(self, small_corpus, tmp_path):
        out = tmp_path / "run"
        train_stage1(small_corpus, tiny_train_config(), out_dir=out)
        assert (out / "checkpoint_final.pfckpt").exists()
        assert (out / "loss_log.csv").exists()
        assert (out / "loss_curve.png").exists()
        header = (out / "loss_log.csv").read_text().splitlines()[0]
        assert header == "step,loss,smoothed,lr"

    def test_resume_config_hash_mismatch(self, small_corpus):
        cfg = tiny_train_config(steps=2)
        archive, _, _ = train_stage1(small_corpus, cfg)
        other = tiny_train_config(steps=2, model=tiny_pipeline_config(base_channels=24))
        with pytest.raises(CheckpointError):
            train_stage1(small_corpus, other, resume=archive)

    def test_warmup_runs(self, small_corpus):
        cfg = tiny_train_config(steps=4, warmup_steps=2)
        _, _, log = train_stage1(small_corpus, cfg)
        assert len(log.rows) == 4

    @pytest.mark.parametrize("flag", ["fourier_dialog", "fourier_character", "no_global_encoder"])
    def test_ablation_arms_train(self, small_corpus, flag):
        cfg = tiny_train_config(steps=3, **{flag: True})
        archive, _, log = train_stage1(small_corpus, cfg)
        assert len(log.rows) == 3
        assert all(np.isfinite(row["loss"]) for row in log.rows)


class TestStage2:
    def test_stage1_sections_frozen(self, small_corpus):
        s1, _, _ = train_stage1(small_corpus, tiny_train_config(steps=3))
        cfg2 = tiny_train_config(stage=2, steps=4)
        s2, _, log = train_stage2(small_corpus, s1, cfg2)
        for name in STAGE1_SECTIONS:
            assert s2.section_hash(name) == s1.section_hash(name), name
        assert s2.section_hash("adapter") != s1.section_hash("adapter")
        assert len(log.rows) == 4

    def test_no_adapter_flag_refused(self, small_corpus):
        s1, _, _ = train_stage1(small_corpus, tiny_train_config(steps=1))
        cfg = tiny_train_config(stage=2, steps=1)
        cfg.no_adapter = True
        with pytest.raises(ConfigError):
            train_stage2(small_corpus, s1, cfg)

    def test_stage_mismatch(self, small_corpus):
        s1, _, _ = train_stage1(small_corpus, tiny_train_config(steps=1))
        with pytest.raises(ValueError):
            train_stage2(small_corpus, s1, tiny_train_config(stage=1))

    def test_components_logged(self, small_corpus, tmp_path):
        s1, _, _ = train_stage1(small_corpus, tiny_train_config(steps=2))
        out = tmp_path / "s2"
        _, _, log = train_stage2(small_corpus, s1, tiny_train_config(stage=2, steps=2), out_dir=out)
        assert set(log.rows[0]) >= {"step", "loss", "lm", "mse", "diff"}
        assert (out / "loss_log.csv").exists()
        assert (out / "loss_curve.png").exists()
