"""Config file format, defaults, and the checkpoint container."""

import importlib.resources

import numpy as np
import pytest

from memtrack3d.checkpoint import load_checkpoint, save_checkpoint
from memtrack3d.config import ConfigError, RunConfig, dump_config, load_config, parse_config


class TestParsing:
    def test_empty_text_gives_defaults(self):
        cfg = parse_config("")
        assert cfg.n_seeds == 64
        assert cfg.feature_dim == 128
        assert cfg.attn_dim == 128  # resolves to feature_dim

    def test_roundtrip(self):
        cfg = RunConfig(n_seeds=32, lambda_center=5.0, backbone_widths=(16, 24))
        text = dump_config(cfg)
        back = parse_config(text)
        assert back.n_seeds == 32
        assert back.lambda_center == 5.0
        assert back.backbone_widths == (16, 24)

    def test_comments_and_blanks(self):
        cfg = parse_config("# a comment\n\nn_seeds = 16  # trailing\n")
        assert cfg.n_seeds == 16

    def test_unknown_key_named_in_error(self):
        with pytest.raises(ConfigError, match="not_a_key"):
            parse_config("not_a_key = 3\n")

    def test_duplicate_key_rejected(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config("n_seeds = 2\nn_seeds = 3\n")

    def test_bad_value_rejected(self):
        with pytest.raises(ConfigError, match="n_seeds"):
            parse_config("n_seeds = banana\n")

    def test_bool_forms(self):
        assert parse_config("augment_flip = no\n").augment_flip is False
        assert parse_config("augment_flip = 1\n").augment_flip is True
        with pytest.raises(ConfigError):
            parse_config("augment_flip = maybe\n")

    def test_validation(self):
        with pytest.raises(ConfigError):
            RunConfig(crop_size=8, n_seeds=16)
        with pytest.raises(ConfigError):
            RunConfig(precision_beyond_range="ignore")

    def test_load_with_overrides(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("n_seeds = 16\ncrop_size = 32\n")
        cfg = load_config(path, {"seed": "9"})
        assert cfg.n_seeds == 16
        assert cfg.seed == 9


class TestShippedDefaults:
    def test_default_cfg_parses_to_defaults(self):
        text = (
            importlib.resources.files("memtrack3d").joinpath("default.cfg").read_text()
        )
        cfg = parse_config(text)
        assert cfg == RunConfig()

    def test_reference_values_present(self):
        cfg = parse_config(
            importlib.resources.files("memtrack3d").joinpath("default.cfg").read_text()
        )
        assert (cfg.lambda_mask, cfg.lambda_center) == (0.2, 10.0)
        assert (cfg.lambda_quality, cfg.lambda_score) == (1.0, 1.0)
        assert cfg.n_layers == 2
        assert (cfg.memory_train, cfg.memory_test) == (2, 3)
        assert cfg.lost_threshold == 0.2
        assert cfg.positive_radius == 0.3
        assert cfg.sample_len == 8


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        params = {
            "a.w": rng.normal(size=(3, 4)),
            "a.b": rng.normal(size=4),
            "scalar": np.array(2.5),
        }
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, params, "n_seeds = 16\n")
        loaded, cfg_text = load_checkpoint(path)
        assert cfg_text == "n_seeds = 16\n"
        assert set(loaded) == set(params)
        for key in params:
            np.testing.assert_array_equal(loaded[key], params[key])

    def test_byte_determinism(self, tmp_path):
        params = {"w": np.arange(6, dtype=float).reshape(2, 3)}
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(p1, params, "x")
        save_checkpoint(p2, params, "x")
        assert p1.read_bytes() == p2.read_bytes()

    def test_rejects_garbage(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"not a checkpoint")
        with pytest.raises(ValueError):
            load_checkpoint(path)

    def test_rejects_truncation(self, tmp_path):
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, {"w": np.ones((4, 4))}, "cfg")
        blob = path.read_bytes()
        path.write_bytes(blob[:-8])
        with pytest.raises(ValueError):
            load_checkpoint(path)
