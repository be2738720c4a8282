"""Dialog-region conditioning: one trainable channel vector added inside
dialog boxes right after the denoiser's first convolution.

The region mask is binary at latent resolution, rasterized with the same
cell-center rule as the character layout masks; overlapping boxes union,
so the embedding is added exactly once per covered cell.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from panelforge.geometry import BBox, cell_in_box


@dataclass(frozen=True)
class DialogMask:
    values: torch.Tensor  # (h_l, w_l) float in {0, 1}
    resolution: tuple[int, int]


def build_dialog_mask(
    dialog_boxes: list[BBox] | tuple[BBox, ...],
    panel_size: tuple[int, int],
    latent_resolution: tuple[int, int],
) -> DialogMask:
    h_l, w_l = latent_resolution
    pw, ph = panel_size
    values = torch.zeros(h_l, w_l)
    for box in dialog_boxes:
        if not box.inside(pw, ph):
            raise ValueError(f"dialog box {box.as_list()} outside panel {pw}x{ph}")
        for r in range(h_l):
            for c in range(w_l):
                if cell_in_box(r, c, (h_l, w_l), panel_size, box):
                    values[r, c] = 1.0
    return DialogMask(values=values, resolution=(h_l, w_l))


def stack_dialog_masks(masks: list[DialogMask]) -> torch.Tensor:
    res = masks[0].resolution
    if any(m.resolution != res for m in masks):
        raise ValueError("cannot stack dialog masks of different resolutions")
    return torch.stack([m.values for m in masks])


class DialogEmbedding(nn.Module):
    """Single shared channel vector, zero-initialized so an untrained
    model is dialog-agnostic."""

    def __init__(self, channels: int):
        super().__init__()
        self.vector = nn.Parameter(torch.zeros(channels))

    @property
    def channels(self) -> int:
        return self.vector.shape[0]

    def forward(self, z_conv: torch.Tensor, mask: "DialogMask | torch.Tensor") -> torch.Tensor:
        return inject_dialog(z_conv, self.vector, mask)


def inject_dialog(z_conv: torch.Tensor, e_d: torch.Tensor, mask: "DialogMask | torch.Tensor") -> torch.Tensor:
    """out[..., c, y, x] = z_conv[..., c, y, x] + e_d[c] * mask[y, x].

    `z_conv` is (C, H, W) or (B, C, H, W); `mask` a DialogMask or tensor
    of shape (H, W) or (B, H, W).
    """
    values = mask.values if isinstance(mask, DialogMask) else mask
    squeeze = z_conv.dim() == 3
    z = z_conv.unsqueeze(0) if squeeze else z_conv
    if values.dim() == 2:
        values = values.unsqueeze(0)
    if values.shape[-2:] != z.shape[-2:]:
        raise ValueError(f"dialog mask {tuple(values.shape[-2:])} does not match latent {tuple(z.shape[-2:])}")
    if e_d.shape[0] != z.shape[1]:
        raise ValueError(f"dialog embedding width {e_d.shape[0]} != channel count {z.shape[1]}")
    out = z + e_d.view(1, -1, 1, 1) * values.to(z.dtype).unsqueeze(1)
    return out.squeeze(0) if squeeze else out
