"""The assembled panel generator: text encoder, character feature
extractor, layout-gated denoiser, codec, sampler, and optional feature
adapter, with the conditioning plumbing between them.

Weights are immutable during inference and safe to share: `generate`
touches no global RNG (all draws come from a local seeded generator), so
concurrent generations with distinct specs are race-free and a repeated
(spec, seed) pair is bitwise reproducible.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass

import torch
from torch import nn
from PIL import Image

from panelforge.geometry import BBox
from panelforge.models.adapter import AdapterConfig, CharacterFeatureAdapter, blend_features
from panelforge.models.codec import LatentCodec, pil_to_tensor, tensor_to_pil
from panelforge.models.denoiser import DenoiserConfig, ToyUNet
from panelforge.models.dialog_layout import build_dialog_mask
from panelforge.models.encoders import CharacterTokens, EncoderConfig, FeatureExtractor
from panelforge.models.layout_attention import NEG_INF, LayoutAttentionMask, build_attention_mask
from panelforge.models.schedule import CosineSchedule
from panelforge.models.text_encoder import TextEncoder
from panelforge.specs import PanelSpec


@dataclass(frozen=True)
class PipelineConfig:
    """One flat configuration for the whole generation stack."""

    # conditioning widths
    cond_dim: int = 64
    key_dim: int = 64
    # denoiser
    base_channels: int = 32
    channel_mult: tuple[int, ...] = (1, 2)
    conv_kernel: int = 3
    attend_down: bool = True
    attend_up: bool = True
    time_dim: int = 64
    # character feature extraction
    n_c_cap: int = 4
    n_q: int = 4
    crop_size: int = 64
    patch_size: int = 16
    local_dim: int = 48
    local_layers: int = 2
    global_dim: int = 32
    resampler_depth: int = 2
    # text
    vocab_size: int = 512
    text_len: int = 16
    # diffusion
    t_max: int = 1000
    downsample_factor: int = 8
    buckets: tuple[tuple[int, int], ...] = ((128, 128), (128, 192), (192, 128), (256, 256))
    # adapter
    with_adapter: bool = True
    adapter_inner_dim: int = 64
    adapter_layers: int = 4
    adapter_heads: int = 4
    lora_rank: int = 8
    # inference defaults
    alpha_infer: float = 0.6
    beta: float = 0.4
    steps: int = 50
    guidance_scale: float = 1.0  # classifier-free guidance on the text branch
    # training-time attention weight
    alpha_train: float = 1.0
    # ablation arms
    fourier_dialog: bool = False
    fourier_character: bool = False
    use_global_encoder: bool = True
    # init
    seed: int = 0

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            crop_size=self.crop_size,
            patch_size=self.patch_size,
            local_dim=self.local_dim,
            local_layers=self.local_layers,
            global_dim=self.global_dim,
            token_dim=self.cond_dim,
            n_q=self.n_q,
            n_c_cap=self.n_c_cap,
            resampler_depth=self.resampler_depth,
            use_global_encoder=self.use_global_encoder,
        )

    def denoiser_config(self) -> DenoiserConfig:
        return DenoiserConfig(
            base_channels=self.base_channels,
            channel_mult=tuple(self.channel_mult),
            cond_dim=self.cond_dim,
            key_dim=self.key_dim,
            time_dim=self.time_dim,
            conv_kernel=self.conv_kernel,
            attend_down=self.attend_down,
            attend_up=self.attend_up,
            alpha_train=self.alpha_train,
        )

    def adapter_config(self) -> AdapterConfig:
        return AdapterConfig(
            feature_dim=self.cond_dim,
            inner_dim=self.adapter_inner_dim,
            n_layers=self.adapter_layers,
            n_heads=self.adapter_heads,
            lora_rank=self.lora_rank,
            vocab_size=self.vocab_size,
            max_caption_len=self.text_len,
        )

    def config_hash(self) -> str:
        return hashlib.sha256(
            json.dumps(asdict(self), sort_keys=True).encode("utf-8")
        ).hexdigest()[:16]


@dataclass
class Condition:
    """Everything the denoiser consumes besides the latent and timestep."""

    text_tokens: torch.Tensor
    char_tokens: CharacterTokens
    masks: dict[tuple[int, int], torch.Tensor]
    dialog_mask: torch.Tensor | None
    fourier_dialog_emb: torch.Tensor | None = None


def open_slot_mask(n_valid: int, n_c_cap: int, query_tokens: int) -> LayoutAttentionMask:
    """Ungated mask: valid slots and void open everywhere, padded blocked.

    Used by the fourier-character ablation arm where box information
    enters through the features instead of attention gating.
    """
    values = torch.full((query_tokens, n_c_cap + 1), NEG_INF)
    values[:, :n_valid] = 0.0
    values[:, n_c_cap] = 0.0
    return LayoutAttentionMask(values=values, resolution=(1, query_tokens))


class PanelGeneratorModel(nn.Module):
    def __init__(self, config: PipelineConfig):
        super().__init__()
        self.config = config
        self.text_encoder = TextEncoder(
            vocab_size=config.vocab_size, dim=config.cond_dim, max_len=config.text_len
        )
        self.extractor = FeatureExtractor(config.encoder_config())
        self.unet = ToyUNet(config.denoiser_config())
        self.adapter: CharacterFeatureAdapter | None = (
            CharacterFeatureAdapter(config.adapter_config()) if config.with_adapter else None
        )
        self.codec = LatentCodec(config.downsample_factor)
        self.schedule = CosineSchedule(config.t_max)

    # -- conditioning ------------------------------------------------------

    def prepare_reference(self, image: Image.Image) -> torch.Tensor:
        """Square-pad a reference crop with white and resize to the encoder input."""
        img = image.convert("L") if image.mode != "L" else image
        side = max(img.size)
        padded = Image.new("L", (side, side), color=255)
        padded.paste(img, ((side - img.width) // 2, (side - img.height) // 2))
        return pil_to_tensor(padded, (self.config.crop_size, self.config.crop_size))

    def layout_masks(
        self, char_boxes: list[BBox], panel_size: tuple[int, int], latent_hw: tuple[int, int]
    ) -> dict[tuple[int, int], LayoutAttentionMask]:
        cfg = self.config
        if cfg.fourier_character:
            return {
                res: open_slot_mask(len(char_boxes), cfg.n_c_cap, res[0] * res[1])
                for res in self.unet.config.attention_resolutions(latent_hw)
            }
        return {
            res: build_attention_mask(char_boxes, panel_size, res, cfg.n_c_cap)
            for res in self.unet.config.attention_resolutions(latent_hw)
        }

    def normalized_boxes(self, boxes: list[BBox], panel_size: tuple[int, int], n_slots: int) -> torch.Tensor:
        """(1, n_slots, 4) coordinates in [0, 1]; missing slots zeroed."""
        out = torch.zeros(1, n_slots, 4)
        w, h = panel_size
        for i, box in enumerate(boxes[:n_slots]):
            out[0, i] = torch.tensor([box.x0 / w, box.y0 / h, box.x1 / w, box.y1 / h])
        return out

    def build_condition(
        self,
        caption: str,
        char_crops: list[torch.Tensor],
        char_boxes: list[BBox],
        dialog_boxes: list[BBox],
        panel_size: tuple[int, int],
        beta: float | None = None,
    ) -> Condition:
        cfg = self.config
        latent_hw = self.codec.latent_size(panel_size)
        tokens = self.extractor.extract(char_crops)
        caption_ids = self.text_encoder.tokenizer.encode_batch([caption])
        beta = cfg.beta if beta is None else beta
        if self.adapter is not None and beta > 0.0:
            adapted = self.adapter.adapt(caption_ids, tokens)
            tokens = CharacterTokens(
                tokens=blend_features(tokens.tokens, adapted.tokens, beta),
                validity=tokens.validity,
                n_q=tokens.n_q,
            )
        if cfg.fourier_character:
            boxes_norm = self.normalized_boxes(char_boxes, panel_size, cfg.n_c_cap + 1)
            slot_emb = self.unet.character_fourier_embedding(boxes_norm)  # (1, slots, cond)
            tokens = CharacterTokens(
                tokens=tokens.tokens + torch.repeat_interleave(slot_emb, cfg.n_q, dim=1),
                validity=tokens.validity,
                n_q=tokens.n_q,
            )
        masks = {
            res: m.values.unsqueeze(0)
            for res, m in self.layout_masks(char_boxes, panel_size, latent_hw).items()
        }
        fourier_dialog_emb = None
        dialog_mask: torch.Tensor | None
        if cfg.fourier_dialog:
            dialog_mask = None
            boxes_norm = self.normalized_boxes(dialog_boxes, panel_size, max(len(dialog_boxes), 1))
            if not dialog_boxes:
                boxes_norm = boxes_norm[:, :0]
            fourier_dialog_emb = self.unet.dialog_fourier_embedding(boxes_norm)
        else:
            dialog_mask = build_dialog_mask(dialog_boxes, panel_size, latent_hw).values.unsqueeze(0)
        return Condition(
            text_tokens=self.text_encoder(caption_ids),
            char_tokens=tokens,
            masks=masks,
            dialog_mask=dialog_mask,
            fourier_dialog_emb=fourier_dialog_emb,
        )

    # -- denoising ---------------------------------------------------------

    def denoise_step(
        self, z_t: torch.Tensor, t: torch.Tensor, cond: Condition, alpha: float | None = None
    ) -> torch.Tensor:
        return self.unet(
            z_t,
            t,
            cond.text_tokens,
            cond.char_tokens.tokens,
            cond.masks,
            cond.dialog_mask,
            alpha=alpha,
            fourier_dialog_emb=cond.fourier_dialog_emb,
        )

    # -- generation --------------------------------------------------------

    def generate(self, spec: PanelSpec) -> Image.Image:
        cfg = self.config
        if len(spec.characters) > cfg.n_c_cap:
            raise ValueError(f"{len(spec.characters)} characters exceed the capacity {cfg.n_c_cap}")
        if tuple(spec.size) not in {tuple(b) for b in cfg.buckets}:
            raise ValueError(f"size {spec.size} is not a configured bucket; buckets: {list(cfg.buckets)}")
        for _, box in spec.characters:
            if not box.inside(*spec.size):
                raise ValueError(f"character box {box.as_list()} outside the {spec.size} canvas")
        for box in spec.dialogs:
            if not box.inside(*spec.size):
                raise ValueError(f"dialog box {box.as_list()} outside the {spec.size} canvas")

        was_training = self.training
        self.eval()
        try:
            with torch.no_grad():
                crops = [self.prepare_reference(img) for img, _ in spec.characters]
                boxes = [box for _, box in spec.characters]
                cond = self.build_condition(
                    spec.caption, crops, boxes, list(spec.dialogs), spec.size, beta=spec.beta
                )
                guidance = cfg.guidance_scale
                uncond = None
                if guidance != 1.0:
                    # text-branch guidance: the unconditional pass drops the
                    # caption but keeps character and dialog conditioning
                    uncond = self.build_condition(
                        "", crops, boxes, list(spec.dialogs), spec.size, beta=spec.beta
                    )

                def eps_fn(zt, t):
                    eps = self.denoise_step(zt, t, cond, alpha=spec.alpha)
                    if uncond is None:
                        return eps
                    eps_u = self.denoise_step(zt, t, uncond, alpha=spec.alpha)
                    return eps_u + guidance * (eps - eps_u)

                latent_hw = self.codec.latent_size(spec.size)
                gen = torch.Generator().manual_seed(spec.seed)
                z = torch.randn(1, 1, *latent_hw, generator=gen)
                z0 = self.schedule.sample(eps_fn, z, spec.steps)
                return tensor_to_pil(self.codec.decode(z0)[0])
        finally:
            if was_training:
                self.train()

    # -- persistence sections ----------------------------------------------

    def checkpoint_sections(self) -> dict[str, nn.Module | dict]:
        """Named state groups for the archive; see training.checkpoint."""
        unet_state = self.unet.state_dict()
        denoiser = {k: v for k, v in unet_state.items() if not k.startswith("dialog_embedding.")}
        dialog = {k: v for k, v in unet_state.items() if k.startswith("dialog_embedding.")}
        ext_state = self.extractor.state_dict()
        enc_prefixes = ("patch_encoder.", "global_encoder.")
        encoders = {k: v for k, v in ext_state.items() if k.startswith(enc_prefixes)}
        resampler = {k: v for k, v in ext_state.items() if not k.startswith(enc_prefixes)}
        sections: dict = {
            "denoiser": denoiser,
            "dialog-embedding": dialog,
            "encoders": encoders,
            "resampler": resampler,
            "text-encoder": self.text_encoder.state_dict(),
        }
        if self.adapter is not None:
            sections["adapter"] = self.adapter.state_dict()
        return sections

    def load_checkpoint_sections(self, sections: dict[str, dict[str, torch.Tensor]]) -> None:
        unet_state = dict(sections["denoiser"])
        unet_state.update(sections["dialog-embedding"])
        self.unet.load_state_dict(unet_state)
        ext_state = dict(sections["encoders"])
        ext_state.update(sections["resampler"])
        self.extractor.load_state_dict(ext_state)
        self.text_encoder.load_state_dict(sections["text-encoder"])
        if self.adapter is not None and "adapter" in sections:
            self.adapter.load_state_dict(sections["adapter"])

    def stage1_parameters(self) -> list[nn.Parameter]:
        """Everything trained in stage 1: denoiser, extractor, text encoder."""
        return [
            *self.unet.parameters(),
            *self.extractor.parameters(),
            *self.text_encoder.parameters(),
        ]


def build_model(config: PipelineConfig) -> PanelGeneratorModel:
    """Construct with a fixed seed so init is reproducible across runs."""
    torch.manual_seed(config.seed)
    return PanelGeneratorModel(config)
