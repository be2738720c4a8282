"""Per-character layout gating for the dual text/character cross-attention.

The gate is a dense additive mask M of shape (query_tokens, n_slots) with
n_slots = character capacity + 1; the last slot is the void slot. Entry
M[i, j] is 0 where query cell i may attend character slot j and a large
negative constant elsewhere:

  * slot j < cap backed by a real box: 0 exactly on grid cells whose
    centers fall in that box (boxes covering no cell center grow to the
    single nearest cell, so a real character never vanishes);
  * padded slots (no character): blocked everywhere;
  * void slot: 0 exactly on cells covered by no character box.

Every row therefore has at least one open entry. Attention output is

    softmax(Q K_t^T / sqrt(d)) V_t + alpha * softmax(Q K_c^T / sqrt(d) + M~) V_c

with M~ broadcasting each slot column over that slot's query tokens. All
functions here are pure with respect to their inputs and safe to call
concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

from panelforge.geometry import BBox, rasterize_box

NEG_INF = -1e9  # additive "minus infinity" kept finite for stable arithmetic


@dataclass(frozen=True)
class LayoutAttentionMask:
    values: torch.Tensor  # (query_tokens, n_slots), entries in {0, NEG_INF}
    resolution: tuple[int, int]  # (h_r, w_r) token grid it was rasterized for

    @property
    def n_slots(self) -> int:
        return self.values.shape[-1]

    def open_rows(self) -> torch.Tensor:
        """Boolean (query_tokens,) - True where the row has an open entry."""
        return (self.values == 0).any(dim=-1)


def build_attention_mask(
    char_boxes: list[BBox] | tuple[BBox, ...],
    panel_size: tuple[int, int],
    attn_resolution: tuple[int, int],
    n_c_cap: int,
) -> LayoutAttentionMask:
    """Rasterize character boxes (panel coordinates) onto a token grid.

    `attn_resolution` is (h_r, w_r); rows of the returned mask follow
    row-major token order. Boxes beyond `n_c_cap` are an error: the
    caller owns the truncation policy.
    """
    if len(char_boxes) > n_c_cap:
        raise ValueError(f"{len(char_boxes)} character boxes exceed the capacity {n_c_cap}")
    h_r, w_r = attn_resolution
    pw, ph = panel_size
    for box in char_boxes:
        if not box.inside(pw, ph):
            raise ValueError(f"character box {box.as_list()} outside panel {pw}x{ph}")

    n_slots = n_c_cap + 1
    values = torch.full((h_r * w_r, n_slots), NEG_INF)
    covered = torch.zeros(h_r * w_r, dtype=torch.bool)
    for j, box in enumerate(char_boxes):
        for r, c in rasterize_box(box, panel_size, (h_r, w_r)):
            idx = r * w_r + c
            values[idx, j] = 0.0
            covered[idx] = True
    values[~covered, n_c_cap] = 0.0
    return LayoutAttentionMask(values=values, resolution=(h_r, w_r))


def stack_masks(masks: list[LayoutAttentionMask]) -> torch.Tensor:
    """Batch per-sample masks into a (B, query_tokens, n_slots) tensor."""
    res = masks[0].resolution
    if any(m.resolution != res for m in masks):
        raise ValueError("cannot stack masks built for different resolutions")
    return torch.stack([m.values for m in masks])


def expand_mask(values: torch.Tensor, n_q: int) -> torch.Tensor:
    """Broadcast each slot column over that slot's n_q key tokens."""
    return torch.repeat_interleave(values, n_q, dim=-1)


class MaskedDualCrossAttention(nn.Module):
    """Single-head dual cross-attention: text branch plus gated character branch.

    The character-branch key/value projections start as exact copies of
    the text-branch ones. `alpha` scales the character branch; the
    constructor default is the training-time value and callers may
    override per forward pass.
    """

    def __init__(self, query_dim: int, context_dim: int, key_dim: int | None = None, alpha: float = 1.0):
        super().__init__()
        key_dim = key_dim or query_dim
        self.to_q = nn.Linear(query_dim, key_dim, bias=False)
        self.to_k_text = nn.Linear(context_dim, key_dim, bias=False)
        self.to_v_text = nn.Linear(context_dim, query_dim, bias=False)
        self.to_k_char = nn.Linear(context_dim, key_dim, bias=False)
        self.to_v_char = nn.Linear(context_dim, query_dim, bias=False)
        with torch.no_grad():
            self.to_k_char.weight.copy_(self.to_k_text.weight)
            self.to_v_char.weight.copy_(self.to_v_text.weight)
        self.key_dim = key_dim
        self.alpha = alpha

    def forward(
        self,
        z: torch.Tensor,
        text_tokens: torch.Tensor,
        char_tokens: torch.Tensor,
        mask: "LayoutAttentionMask | torch.Tensor",
        alpha: float | None = None,
    ) -> torch.Tensor:
        return masked_dual_attention(z, text_tokens, char_tokens, mask, self, alpha=alpha)


def masked_dual_attention(
    z: torch.Tensor,
    text_tokens: torch.Tensor,
    char_tokens: torch.Tensor,
    mask: "LayoutAttentionMask | torch.Tensor",
    weights: MaskedDualCrossAttention,
    alpha: float | None = None,
) -> torch.Tensor:
    """Output shape equals z's shape: (B, query_tokens, query_dim).

    `char_tokens` holds n_slots blocks of n_q tokens each; `mask` is a
    LayoutAttentionMask or a pre-stacked (B, query_tokens, n_slots)
    tensor whose slot columns are expanded over each block.
    """
    if alpha is None:
        alpha = weights.alpha
    if isinstance(mask, LayoutAttentionMask):
        if mask.resolution[0] * mask.resolution[1] != z.shape[1]:
            raise ValueError(
                f"mask was built for {mask.resolution} = {mask.resolution[0] * mask.resolution[1]} query "
                f"tokens but z has {z.shape[1]}"
            )
        mask_values = mask.values
    else:
        mask_values = mask
        if mask_values.shape[-2] != z.shape[1]:
            raise ValueError(f"mask rows {mask_values.shape[-2]} != query tokens {z.shape[1]}")

    n_slots = mask_values.shape[-1]
    if char_tokens.shape[1] % n_slots != 0:
        raise ValueError(f"character token count {char_tokens.shape[1]} is not a multiple of {n_slots} slots")
    n_q = char_tokens.shape[1] // n_slots

    expanded = expand_mask(mask_values.to(z.dtype), n_q)
    if not (expanded == 0).any(dim=-1).all():
        raise AssertionError("attention mask has a fully blocked query row")

    q = weights.to_q(z)
    scale = 1.0 / math.sqrt(weights.key_dim)

    k_t = weights.to_k_text(text_tokens)
    v_t = weights.to_v_text(text_tokens)
    attn_t = torch.softmax(q @ k_t.transpose(-1, -2) * scale, dim=-1)
    out = attn_t @ v_t

    k_c = weights.to_k_char(char_tokens)
    v_c = weights.to_v_char(char_tokens)
    logits_c = q @ k_c.transpose(-1, -2) * scale + expanded
    out = out + alpha * (torch.softmax(logits_c, dim=-1) @ v_c)
    return out


def character_attention_probs(
    z: torch.Tensor,
    char_tokens: torch.Tensor,
    mask: "LayoutAttentionMask | torch.Tensor",
    weights: MaskedDualCrossAttention,
) -> torch.Tensor:
    """Character-branch attention distribution, (B, query_tokens, n_slots * n_q)."""
    mask_values = mask.values if isinstance(mask, LayoutAttentionMask) else mask
    n_q = char_tokens.shape[1] // mask_values.shape[-1]
    q = weights.to_q(z)
    k_c = weights.to_k_char(char_tokens)
    logits = q @ k_c.transpose(-1, -2) / math.sqrt(weights.key_dim) + expand_mask(mask_values.to(z.dtype), n_q)
    return torch.softmax(logits, dim=-1)
