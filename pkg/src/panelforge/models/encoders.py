"""Character feature extraction: two image encoders plus a query resampler.

A square character crop runs through a patch-token encoder (local grid
features) and a strided conv encoder (one global vector). The resampler
cross-attends a per-character block of learned query tokens over the
fused features; a separate learned void query block attends to a learned
null context and fills the extra slot that query positions outside every
character box route to. Output is always capacity+1 slots of n_q tokens,
padded slots zeroed, so downstream shapes never depend on how many
characters a panel actually has.

Slots are independent by construction: character k's crop can only
influence slot k, and the void slot sees no crop at all.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from panelforge.models.text_encoder import TransformerBlock


@dataclass(frozen=True)
class EncoderConfig:
    crop_size: int = 64
    patch_size: int = 16
    local_dim: int = 48
    local_layers: int = 2
    global_dim: int = 32
    token_dim: int = 64  # C: cross-attention width of the denoiser
    n_q: int = 4
    n_c_cap: int = 4
    resampler_depth: int = 2
    n_heads: int = 4
    use_global_encoder: bool = True  # ablation arm drops the conv encoder


@dataclass
class ImageEncoderOutput:
    local_tokens: torch.Tensor  # (tokens, local_dim)
    global_vector: torch.Tensor  # (global_dim,)


@dataclass
class CharacterTokens:
    """Slot-major token block: slots 0..cap-1 are characters, slot cap is void."""

    tokens: torch.Tensor  # (batch, (cap+1) * n_q, token_dim)
    validity: torch.Tensor  # (batch, cap+1) bool; void slot always True
    n_q: int

    @property
    def n_slots(self) -> int:
        return self.validity.shape[-1]

    def slot(self, index: int) -> torch.Tensor:
        return self.tokens[:, index * self.n_q : (index + 1) * self.n_q]


class PatchTokenEncoder(nn.Module):
    """Patch embedding + small transformer; local grid tokens."""

    def __init__(self, config: EncoderConfig):
        super().__init__()
        if config.crop_size % config.patch_size:
            raise ValueError("crop_size must be a multiple of patch_size")
        side = config.crop_size // config.patch_size
        self.patch = nn.Conv2d(1, config.local_dim, config.patch_size, stride=config.patch_size)
        self.pos = nn.Parameter(torch.zeros(side * side, config.local_dim))
        self.blocks = nn.ModuleList(
            TransformerBlock(config.local_dim, config.n_heads) for _ in range(config.local_layers)
        )
        self.norm = nn.LayerNorm(config.local_dim)

    def forward(self, crops: torch.Tensor) -> torch.Tensor:
        x = self.patch(crops).flatten(2).transpose(1, 2) + self.pos
        for block in self.blocks:
            x = block(x)
        return self.norm(x)


class GlobalConvEncoder(nn.Module):
    """Three strided convs + global average pool; one vector per crop."""

    def __init__(self, config: EncoderConfig):
        super().__init__()
        c = config.global_dim
        self.net = nn.Sequential(
            nn.Conv2d(1, c // 2, 3, stride=2, padding=1), nn.SiLU(),
            nn.Conv2d(c // 2, c, 3, stride=2, padding=1), nn.SiLU(),
            nn.Conv2d(c, c, 3, stride=2, padding=1), nn.SiLU(),
            nn.AdaptiveAvgPool2d(1),
        )

    def forward(self, crops: torch.Tensor) -> torch.Tensor:
        return self.net(crops).flatten(1)


class ResamplerBlock(nn.Module):
    """Pre-norm cross-attention + feed-forward over a fixed query block."""

    def __init__(self, dim: int, n_heads: int):
        super().__init__()
        self.norm_q = nn.LayerNorm(dim)
        self.norm_ctx = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, n_heads, batch_first=True)
        self.norm_ff = nn.LayerNorm(dim)
        self.ff = nn.Sequential(nn.Linear(dim, dim * 2), nn.GELU(), nn.Linear(dim * 2, dim))

    def forward(self, queries: torch.Tensor, context: torch.Tensor) -> torch.Tensor:
        ctx = self.norm_ctx(context)
        h, _ = self.attn(self.norm_q(queries), ctx, ctx, need_weights=False)
        queries = queries + h
        return queries + self.ff(self.norm_ff(queries))


class FeatureExtractor(nn.Module):
    """Two encoders + resampler producing the character token block."""

    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.config = config
        self.patch_encoder = PatchTokenEncoder(config)
        self.global_encoder = GlobalConvEncoder(config)
        self.global_proj = nn.Linear(config.global_dim, config.local_dim)
        self.context_proj = nn.Linear(config.local_dim, config.token_dim)
        self.queries = nn.Parameter(torch.randn(config.n_q, config.token_dim) * 0.02)
        self.void_queries = nn.Parameter(torch.randn(config.n_q, config.token_dim) * 0.02)
        self.null_context = nn.Parameter(torch.randn(1, config.token_dim) * 0.02)
        self.blocks = nn.ModuleList(
            ResamplerBlock(config.token_dim, config.n_heads) for _ in range(config.resampler_depth)
        )
        self.out_norm = nn.LayerNorm(config.token_dim)

    def encode_character(self, crop: torch.Tensor) -> ImageEncoderOutput:
        """`crop` is (1, H, W) or (B, 1, H, W) with H == W == crop_size."""
        squeeze = crop.dim() == 3
        x = crop.unsqueeze(0) if squeeze else crop
        if x.shape[-1] != x.shape[-2]:
            raise ValueError(f"character crop must be square, got {tuple(x.shape[-2:])}")
        if x.shape[-1] == 0:
            raise ValueError("character crop has zero area")
        if x.shape[-1] != self.config.crop_size:
            raise ValueError(f"crop size {x.shape[-1]} != configured {self.config.crop_size}")
        local = self.patch_encoder(x)
        glob = self.global_encoder(x)
        if squeeze:
            return ImageEncoderOutput(local_tokens=local[0], global_vector=glob[0])
        return ImageEncoderOutput(local_tokens=local, global_vector=glob)

    def _resample_block(self, queries: torch.Tensor, context: torch.Tensor) -> torch.Tensor:
        for block in self.blocks:
            queries = block(queries, context)
        return self.out_norm(queries)

    def _character_slot(self, encoded: ImageEncoderOutput) -> torch.Tensor:
        local = encoded.local_tokens
        fused = local
        if self.config.use_global_encoder:
            fused = torch.cat([local, self.global_proj(encoded.global_vector).unsqueeze(0)], dim=0)
        context = self.context_proj(fused).unsqueeze(0)
        return self._resample_block(self.queries.unsqueeze(0), context)[0]

    def void_slot(self) -> torch.Tensor:
        """(n_q, token_dim); independent of every crop."""
        return self._resample_block(self.void_queries.unsqueeze(0), self.null_context.unsqueeze(0))[0]

    def resample_characters(self, encoded: list[ImageEncoderOutput], n_c_cap: int | None = None) -> CharacterTokens:
        cfg = self.config
        cap = cfg.n_c_cap if n_c_cap is None else n_c_cap
        if len(encoded) > cap:
            raise ValueError(f"{len(encoded)} characters exceed the slot capacity {cap}; truncate upstream")
        ref = self.queries
        slots = []
        validity = []
        for enc in encoded:
            slots.append(self._character_slot(enc))
            validity.append(True)
        while len(slots) < cap:
            slots.append(torch.zeros(cfg.n_q, cfg.token_dim, dtype=ref.dtype, device=ref.device))
            validity.append(False)
        slots.append(self.void_slot())
        validity.append(True)
        tokens = torch.cat(slots, dim=0).unsqueeze(0)
        return CharacterTokens(
            tokens=tokens,
            validity=torch.tensor([validity], dtype=torch.bool, device=ref.device),
            n_q=cfg.n_q,
        )

    def extract(self, crops: list[torch.Tensor], n_c_cap: int | None = None) -> CharacterTokens:
        """Encode + resample a single panel's character crops (batch of 1)."""
        return self.resample_characters([self.encode_character(c) for c in crops], n_c_cap)

    def extract_batch(self, crop_lists: list[list[torch.Tensor]], n_c_cap: int | None = None) -> CharacterTokens:
        singles = [self.extract(crops, n_c_cap) for crops in crop_lists]
        return CharacterTokens(
            tokens=torch.cat([s.tokens for s in singles], dim=0),
            validity=torch.cat([s.validity for s in singles], dim=0),
            n_q=self.config.n_q,
        )
