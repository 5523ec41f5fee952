"""Run configuration: a flat, diff-able ``key = value`` text format.

Every tunable of the pipeline lives here.  Parsing is strict: unknown keys
and malformed values are rejected with the offending key in the message.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # model dimensions
    n_seeds: int = 64  # seed points per frame (N)
    feature_dim: int = 128  # feature channels (C)
    attn_dim: int = 0  # attention dim (d); 0 means same as feature_dim
    n_layers: int = 2  # propagation layers
    n_heads: int = 1
    ffn_hidden: int = 0  # 0 means same as feature_dim
    backbone_widths: tuple[int, ...] = (32, 64)
    backbone_k: int = 8

    # localization
    grid_nx: int = 4
    grid_ny: int = 4
    grid_nz: int = 4
    n_proposals: int = 16
    ref_k: int = 8
    vote_hidden: tuple[int, ...] = ()
    cnn_channels: tuple[int, ...] = ()  # empty means (C, C)
    head_hidden: tuple[int, ...] = ()
    include_coords_in_vote: bool = False

    # tracker
    crop_size: int = 128
    margin: float = 2.0
    memory_train: int = 2  # past frames kept while training
    memory_test: int = 3  # past frames kept at test time
    lost_threshold: float = 0.2  # declare the target lost below this mask peak

    # losses
    lambda_mask: float = 0.2
    lambda_center: float = 10.0
    lambda_quality: float = 1.0
    lambda_score: float = 1.0
    positive_radius: float = 0.3  # meters; strict < for the positive label
    smooth_l1_beta: float = 1.0
    positive_fraction: float = 0.5
    positive_sigma: float = 0.075

    # training
    lr: float = 1e-3
    epochs: int = 60
    batch_size: int = 1
    sample_len: int = 8  # consecutive frames per training sample
    window_stride: int = 1
    augment_flip: bool = True
    augment_shift: float = 0.08  # crop-reference jitter std, meters
    augment_yaw: float = 0.03  # crop-reference jitter std, radians
    seed: int = 0

    # behaviour switches
    mask_self_value_tied: bool = False
    memory_write_from_input: bool = False
    gt_memory_masks: bool = False

    # evaluation
    precision_beyond_range: str = "clip"  # clip | drop
    include_first_frame: bool = False
    auc_step: float = 0.0  # 0 = closed form, else threshold step

    # paths
    data_root: str = ""

    def __post_init__(self):
        if self.attn_dim == 0:
            self.attn_dim = self.feature_dim
        if self.ffn_hidden == 0:
            self.ffn_hidden = self.feature_dim
        if not self.cnn_channels:
            self.cnn_channels = (self.feature_dim, self.feature_dim)
        if self.precision_beyond_range not in ("clip", "drop"):
            raise ConfigError(
                f"precision_beyond_range must be clip or drop, got "
                f"{self.precision_beyond_range!r}"
            )
        for key in (
            "n_seeds",
            "feature_dim",
            "n_layers",
            "n_heads",
            "crop_size",
            "memory_train",
            "memory_test",
            "n_proposals",
            "grid_nx",
            "grid_ny",
            "grid_nz",
            "sample_len",
            "batch_size",
        ):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be >= 1")
        if self.crop_size < self.n_seeds:
            raise ConfigError("crop_size must be >= n_seeds")

    @property
    def grid(self) -> tuple[int, int, int]:
        return (self.grid_nx, self.grid_ny, self.grid_nz)


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _parse_value(key: str, text: str):
    f = _FIELDS[key]
    base = f.type
    try:
        if base == "bool":
            low = text.strip().lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if base == "int":
            return int(text)
        if base == "float":
            return float(text)
        if base.startswith("tuple"):
            text = text.strip()
            if not text:
                return ()
            return tuple(int(v) for v in text.replace(",", " ").split())
        return text.strip()
    except ValueError as exc:
        raise ConfigError(f"invalid value for {key!r}: {exc}") from exc


def _parse_text(text: str) -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key: {key!r}")
        if key in values:
            raise ConfigError(f"duplicate config key: {key!r}")
        values[key] = _parse_value(key, val)
    return values


def _build(values: dict) -> RunConfig:
    try:
        return RunConfig(**values)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def parse_config(text: str) -> RunConfig:
    return _build(_parse_text(text))


def load_config(path: str | Path | None, overrides: dict | None = None) -> RunConfig:
    values = {} if path is None else _parse_text(Path(path).read_text())
    for key, value in (overrides or {}).items():
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key: {key!r}")
        values[key] = _parse_value(key, str(value))
    return _build(values)


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for f in dataclasses.fields(RunConfig):
        value = getattr(cfg, f.name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"
