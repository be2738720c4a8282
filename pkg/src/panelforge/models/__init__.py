from panelforge.models.adapter import (
    AdapterBatch,
    AdapterConfig,
    CharacterFeatureAdapter,
    adapter_loss,
    blend_features,
    masked_feature_mse,
    special_token_loss,
)
from panelforge.models.codec import LatentCodec, pil_to_tensor, tensor_to_pil
from panelforge.models.denoiser import DenoiserConfig, ToyUNet
from panelforge.models.dialog_layout import DialogEmbedding, DialogMask, build_dialog_mask, inject_dialog
from panelforge.models.encoders import (
    CharacterTokens,
    EncoderConfig,
    FeatureExtractor,
    ImageEncoderOutput,
)
from panelforge.models.generator import Condition, PanelGeneratorModel, PipelineConfig, build_model
from panelforge.models.layout_attention import (
    NEG_INF,
    LayoutAttentionMask,
    MaskedDualCrossAttention,
    build_attention_mask,
    masked_dual_attention,
)
from panelforge.models.schedule import CosineSchedule, timestep_embedding
from panelforge.models.text_encoder import HashTokenizer, TextEncoder

__all__ = [
    "AdapterBatch",
    "AdapterConfig",
    "CharacterFeatureAdapter",
    "adapter_loss",
    "blend_features",
    "masked_feature_mse",
    "special_token_loss",
    "LatentCodec",
    "pil_to_tensor",
    "tensor_to_pil",
    "DenoiserConfig",
    "ToyUNet",
    "DialogEmbedding",
    "DialogMask",
    "build_dialog_mask",
    "inject_dialog",
    "CharacterTokens",
    "EncoderConfig",
    "FeatureExtractor",
    "ImageEncoderOutput",
    "Condition",
    "PanelGeneratorModel",
    "PipelineConfig",
    "build_model",
    "NEG_INF",
    "LayoutAttentionMask",
    "MaskedDualCrossAttention",
    "build_attention_mask",
    "masked_dual_attention",
    "CosineSchedule",
    "timestep_embedding",
    "HashTokenizer",
    "TextEncoder",
]
