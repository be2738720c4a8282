"""Toy latent U-Net with dual text/character cross-attention per stage.

Forward order: first convolution, dialog-region injection, then the
down/mid/up stages. Attention sites are pre-norm with a per-token
LayerNorm, so in a single-attention-layer configuration with 1x1
convolutions the network has no spatial mixing other than the gated
attention itself (useful for locality checks; real configs use 3x3).

Fourier-embedding ablation arms live here: dialog boxes can feed the
timestep embedding instead of the latent injection, and character boxes
can be added to the character tokens instead of gating attention.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from panelforge.models.dialog_layout import DialogEmbedding, DialogMask
from panelforge.models.layout_attention import LayoutAttentionMask, MaskedDualCrossAttention
from panelforge.models.schedule import timestep_embedding


@dataclass(frozen=True)
class DenoiserConfig:
    in_channels: int = 1
    base_channels: int = 32
    channel_mult: tuple[int, ...] = (1, 2)
    cond_dim: int = 64  # width of text and character tokens
    key_dim: int = 64
    time_dim: int = 64
    conv_kernel: int = 3  # 1 disables conv spatial mixing
    attend_down: bool = True
    attend_up: bool = True
    groupnorm_groups: int = 8
    alpha_train: float = 1.0

    def stage_channels(self) -> list[int]:
        return [self.base_channels * m for m in self.channel_mult]

    def attention_resolutions(self, latent_hw: tuple[int, int]) -> list[tuple[int, int]]:
        h, w = latent_hw
        out = []
        for s in range(len(self.channel_mult)):
            if h % (1 << s) or w % (1 << s):
                raise ValueError(f"latent {h}x{w} not divisible across {len(self.channel_mult)} stages")
            out.append((h >> s, w >> s))
        return out


def _norm(channels: int, groups: int) -> nn.GroupNorm:
    return nn.GroupNorm(min(groups, channels), channels)


class ResBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, time_dim: int, kernel: int, groups: int):
        super().__init__()
        pad = (kernel - 1) // 2
        self.norm1 = _norm(in_ch, groups)
        self.conv1 = nn.Conv2d(in_ch, out_ch, kernel, padding=pad)
        self.time_proj = nn.Linear(time_dim, out_ch)
        self.norm2 = _norm(out_ch, groups)
        self.conv2 = nn.Conv2d(out_ch, out_ch, kernel, padding=pad)
        self.skip = nn.Conv2d(in_ch, out_ch, 1) if in_ch != out_ch else nn.Identity()

    def forward(self, x: torch.Tensor, t_emb: torch.Tensor) -> torch.Tensor:
        h = self.conv1(nn.functional.silu(self.norm1(x)))
        h = h + self.time_proj(nn.functional.silu(t_emb))[:, :, None, None]
        h = self.conv2(nn.functional.silu(self.norm2(h)))
        return self.skip(x) + h


class AttentionSite(nn.Module):
    """Flatten -> per-token LayerNorm -> dual cross-attention -> residual."""

    def __init__(self, channels: int, cond_dim: int, key_dim: int, alpha: float):
        super().__init__()
        self.norm = nn.LayerNorm(channels)
        self.attn = MaskedDualCrossAttention(channels, cond_dim, key_dim, alpha=alpha)

    def forward(
        self,
        x: torch.Tensor,
        text_tokens: torch.Tensor,
        char_tokens: torch.Tensor,
        mask: LayoutAttentionMask | torch.Tensor,
        alpha: float | None = None,
    ) -> torch.Tensor:
        b, c, h, w = x.shape
        tokens = x.flatten(2).transpose(1, 2)
        out = self.attn(self.norm(tokens), text_tokens, char_tokens, mask, alpha=alpha)
        return x + out.transpose(1, 2).reshape(b, c, h, w)


def fourier_box_features(boxes_normalized: torch.Tensor, n_freqs: int = 4) -> torch.Tensor:
    """Sin/cos features of normalized box coordinates; (..., 4) -> (..., 8*n_freqs)."""
    freqs = (2.0 ** torch.arange(n_freqs, device=boxes_normalized.device)) * torch.pi
    args = boxes_normalized.unsqueeze(-1) * freqs
    return torch.cat([args.sin(), args.cos()], dim=-1).flatten(-2)


class ToyUNet(nn.Module):
    def __init__(self, config: DenoiserConfig):
        super().__init__()
        self.config = config
        chans = config.stage_channels()
        k, pad = config.conv_kernel, (config.conv_kernel - 1) // 2
        g = config.groupnorm_groups

        self.conv_in = nn.Conv2d(config.in_channels, chans[0], k, padding=pad)
        self.dialog_embedding = DialogEmbedding(chans[0])

        self.time_mlp = nn.Sequential(
            nn.Linear(config.time_dim, config.time_dim * 2), nn.SiLU(),
            nn.Linear(config.time_dim * 2, config.time_dim),
        )
        # ablation arm: dialog boxes as fourier features into the timestep embedding
        self.dialog_fourier_proj = nn.Linear(32, config.time_dim)
        # ablation arm: character boxes as fourier features added to character tokens
        self.char_fourier_proj = nn.Linear(32, config.cond_dim)

        self.down_res = nn.ModuleList()
        self.downsample = nn.ModuleList()
        prev = chans[0]
        for s, ch in enumerate(chans):
            self.down_res.append(ResBlock(prev, ch, config.time_dim, k, g))
            if s < len(chans) - 1:
                self.downsample.append(nn.Conv2d(ch, ch, k, stride=2, padding=pad))
            prev = ch
        self.down_attn = (
            nn.ModuleList(
                AttentionSite(ch, config.cond_dim, config.key_dim, config.alpha_train) for ch in chans
            )
            if config.attend_down else None
        )

        self.mid_res = ResBlock(chans[-1], chans[-1], config.time_dim, k, g)

        # entering up stage s the feature map has chans[s] channels and is
        # concatenated with the stage-s skip, so every up block sees 2x
        self.up_res = nn.ModuleList(
            ResBlock(2 * chans[s], chans[s], config.time_dim, k, g) for s in range(len(chans))
        )
        self.up_attn = (
            nn.ModuleList(
                AttentionSite(ch, config.cond_dim, config.key_dim, config.alpha_train) for ch in chans
            )
            if config.attend_up else None
        )
        self.upsample = nn.ModuleList(
            nn.Conv2d(chans[s], chans[s - 1], k, padding=pad) for s in range(1, len(chans))
        )

        self.conv_out = nn.Conv2d(chans[0], config.in_channels, k, padding=pad)

    def forward(
        self,
        z_t: torch.Tensor,
        t: torch.Tensor,
        text_tokens: torch.Tensor,
        char_tokens: torch.Tensor,
        masks: dict[tuple[int, int], LayoutAttentionMask | torch.Tensor],
        dialog_mask: DialogMask | torch.Tensor | None,
        alpha: float | None = None,
        fourier_dialog_emb: torch.Tensor | None = None,
    ) -> torch.Tensor:
        cfg = self.config
        chans = cfg.stage_channels()
        resolutions = cfg.attention_resolutions(z_t.shape[-2:])

        t_emb = self.time_mlp(timestep_embedding(t, cfg.time_dim, dtype=z_t.dtype))
        if fourier_dialog_emb is not None:
            t_emb = t_emb + fourier_dialog_emb

        h = self.conv_in(z_t)
        if dialog_mask is not None:
            h = self.dialog_embedding(h, dialog_mask)

        def attend(sites: nn.ModuleList | None, x: torch.Tensor, stage: int, name: str) -> torch.Tensor:
            if sites is None:
                return x
            res = resolutions[stage]
            if res not in masks:
                raise AssertionError(f"{name}: no layout mask provided for attention resolution {res}")
            if tuple(x.shape[-2:]) != res:
                raise AssertionError(f"{name}: feature map {tuple(x.shape[-2:])} != expected {res}")
            return sites[stage](x, text_tokens, char_tokens, masks[res], alpha=alpha)

        skips = []
        for s in range(len(chans)):
            h = self.down_res[s](h, t_emb)
            h = attend(self.down_attn, h, s, f"down[{s}]")
            skips.append(h)
            if s < len(chans) - 1:
                h = self.downsample[s](h)

        h = self.mid_res(h, t_emb)

        for s in range(len(chans) - 1, -1, -1):
            h = torch.cat([h, skips[s]], dim=1)
            h = self.up_res[s](h, t_emb)
            h = attend(self.up_attn, h, s, f"up[{s}]")
            if s > 0:
                h = nn.functional.interpolate(h, scale_factor=2, mode="nearest")
                h = self.upsample[s - 1](h)

        return self.conv_out(nn.functional.silu(h))

    def dialog_fourier_embedding(self, dialog_boxes_normalized: torch.Tensor) -> torch.Tensor:
        """Pooled fourier embedding of (B, n_boxes, 4) normalized dialog boxes."""
        if dialog_boxes_normalized.shape[1] == 0:
            b = dialog_boxes_normalized.shape[0]
            return torch.zeros(b, self.config.time_dim, device=dialog_boxes_normalized.device)
        feats = fourier_box_features(dialog_boxes_normalized)
        return self.dialog_fourier_proj(feats).mean(dim=1)

    def character_fourier_embedding(self, char_boxes_normalized: torch.Tensor) -> torch.Tensor:
        """Per-slot fourier embedding of (B, n_slots, 4) normalized boxes."""
        return self.char_fourier_proj(fourier_box_features(char_boxes_normalized))
