"""Training configuration: stage defaults, validation, and the flat
key-value config file the CLI consumes.

Config files are flat YAML mappings. Bare keys address TrainConfig
fields; `model.<field>` keys address the generation-stack fields, e.g.

    stage: 1
    learning_rate: 1.0e-3
    steps: 400
    model.base_channels: 16
    model.channel_mult: [1, 2]

Unknown keys and wrong types are rejected with the offending key named.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from panelforge.models.generator import PipelineConfig


class ConfigError(ValueError):
    pass


STAGE1_DEFAULT_LR = 1e-5
STAGE2_DEFAULT_LR = 1e-4
DEFAULT_LAMBDAS = (1.0, 6.0, 1.0)


@dataclass
class TrainConfig:
    stage: int = 1
    learning_rate: float = STAGE1_DEFAULT_LR
    steps: int = 2000
    lambda_lm: float = 1.0
    lambda_mse: float = 6.0
    lambda_diff: float = 1.0
    self_rate: float = 0.5
    alpha: float = 1.0  # character-branch weight during training
    caption_dropout: float = 0.1
    batch_min: int = 1
    batch_max: int = 8
    seed: int = 0
    warmup_steps: int = 0  # text-to-image-only steps before full conditioning
    checkpoint_every: int = 0  # 0: only final
    log_every: int = 10
    # ablation arms
    fourier_dialog: bool = False
    fourier_character: bool = False
    no_global_encoder: bool = False
    no_adapter: bool = False
    model: PipelineConfig = field(default_factory=PipelineConfig)

    @classmethod
    def for_stage(cls, stage: int, **overrides) -> "TrainConfig":
        """Stage defaults: stage 1 lr 1e-5; stage 2 lr 1e-4, no caption dropout."""
        base: dict = {"stage": stage}
        if stage == 2:
            base.update(learning_rate=STAGE2_DEFAULT_LR, steps=500, caption_dropout=0.0)
        base.update(overrides)
        cfg = cls(**base)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.stage not in (1, 2):
            raise ConfigError(f"stage must be 1 or 2, got {self.stage}")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.steps < 0:
            raise ConfigError("steps must be >= 0")
        for name in ("lambda_lm", "lambda_mse", "lambda_diff"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if not 0.0 <= self.self_rate <= 1.0:
            raise ConfigError("self_rate must be in [0, 1]")
        if not 0.0 <= self.caption_dropout <= 1.0:
            raise ConfigError("caption_dropout must be in [0, 1]")
        if not 1 <= self.batch_min <= self.batch_max:
            raise ConfigError("need 1 <= batch_min <= batch_max")
        if self.stage == 2 and self.no_adapter:
            raise ConfigError("stage 2 requires the adapter; no_adapter is set")
        for bw, bh in self.model.buckets:
            if bw % self.model.downsample_factor or bh % self.model.downsample_factor:
                raise ConfigError(
                    f"bucket {bw}x{bh} not a multiple of downsample factor {self.model.downsample_factor}"
                )

    def effective_model(self) -> PipelineConfig:
        """Pipeline config with the ablation flags folded in."""
        return dataclasses.replace(
            self.model,
            fourier_dialog=self.fourier_dialog,
            fourier_character=self.fourier_character,
            use_global_encoder=not self.no_global_encoder,
            with_adapter=not self.no_adapter,
            alpha_train=self.alpha,
        )

    def flat_dict(self) -> dict:
        out = {}
        for f in fields(self):
            if f.name == "model":
                continue
            out[f.name] = getattr(self, f.name)
        for f in fields(PipelineConfig):
            value = getattr(self.model, f.name)
            out[f"model.{f.name}"] = list(map(list, value)) if f.name == "buckets" else (
                list(value) if isinstance(value, tuple) else value
            )
        return out


_TRAIN_FIELDS = {f.name: f for f in fields(TrainConfig) if f.name != "model"}
_MODEL_FIELDS = {f.name: f for f in fields(PipelineConfig)}


def _coerce(key: str, value, target_type) -> object:
    if target_type is float and isinstance(value, (int, float)):
        return float(value)
    if target_type is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected integer, got {value!r}")
        return value
    if target_type is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected boolean, got {value!r}")
        return value
    return value


def train_config_from_flat(doc: dict) -> TrainConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a flat mapping")
    stage = doc.get("stage", 1)
    if stage not in (1, 2):
        raise ConfigError(f"stage must be 1 or 2, got {stage!r}")
    cfg = TrainConfig.for_stage(stage)
    model_kwargs: dict = {}
    for key, value in doc.items():
        if key == "stage":
            continue
        if key.startswith("model."):
            name = key[len("model.") :]
            if name not in _MODEL_FIELDS:
                raise ConfigError(f"unknown model config key: {key}")
            if name in ("channel_mult", "buckets"):
                if name == "buckets":
                    value = tuple(tuple(int(x) for x in b) for b in value)
                else:
                    value = tuple(int(x) for x in value)
            else:
                value = _coerce(key, value, type(getattr(cfg.model, name)))
            model_kwargs[name] = value
        else:
            if key not in _TRAIN_FIELDS:
                raise ConfigError(f"unknown config key: {key}")
            setattr(cfg, key, _coerce(key, value, type(getattr(cfg, key))))
    if model_kwargs:
        cfg.model = dataclasses.replace(cfg.model, **model_kwargs)
    cfg.validate()
    return cfg


def load_train_config(path: str | Path) -> TrainConfig:
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid config file {path}: {exc}") from exc
    return train_config_from_flat(doc or {})


def save_train_config(cfg: TrainConfig, path: str | Path) -> None:
    doc = {"stage": cfg.stage, **{k: v for k, v in cfg.flat_dict().items() if k != "stage"}}
    Path(path).write_text(yaml.safe_dump(doc, sort_keys=True))
