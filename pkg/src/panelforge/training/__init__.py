from panelforge.training.checkpoint import CheckpointArchive, CheckpointError
from panelforge.training.config import ConfigError, TrainConfig, load_train_config, save_train_config, train_config_from_flat
from panelforge.training.harness import STAGE1_SECTIONS, LossLog, build_adapter_batch, train_stage1, train_stage2

__all__ = [
    "CheckpointArchive",
    "CheckpointError",
    "ConfigError",
    "TrainConfig",
    "load_train_config",
    "save_train_config",
    "train_config_from_flat",
    "STAGE1_SECTIONS",
    "LossLog",
    "build_adapter_batch",
    "train_stage1",
    "train_stage2",
]
