"""Caption-conditioned character feature adapter.

A frozen random causal transformer reads [BOS, caption, <IMG>, feature
tokens, </IMG>] and the hidden states at the feature positions are mapped
back to the outer feature width. Trainable pieces are exactly: low-rank
deltas on the backbone's attention projections, the input/output
resamplers, and the two special-token embeddings (tied into the LM
head). The output projection is zero-initialized and the source features
pass through residually, so an untrained adapter is a no-op and stage 2
starts from the frozen generator's behavior.

Losses: cross-entropy on the two special-token template positions, masked
MSE between adapted and target features over non-padded slots, and the
denoising loss of the frozen generator fed the adapted features.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn
from torch.nn import functional as F

from panelforge.models.encoders import CharacterTokens
from panelforge.models.text_encoder import BOS_ID, IMG_END_ID, IMG_ID

assert IMG_END_ID == IMG_ID + 1, "adapter embedding splice relies on adjacent special ids"


@dataclass(frozen=True)
class AdapterConfig:
    feature_dim: int = 64  # outer width C (generator cross-attention)
    inner_dim: int = 64
    n_layers: int = 4
    n_heads: int = 4
    lora_rank: int = 8  # full-scale configs use 64
    vocab_size: int = 512
    max_caption_len: int = 16


class LoRALinear(nn.Module):
    """Frozen base projection plus trainable low-rank delta (B @ A)."""

    def __init__(self, in_features: int, out_features: int, rank: int):
        super().__init__()
        self.base = nn.Linear(in_features, out_features, bias=False)
        self.base.weight.requires_grad_(False)
        self.lora_a = nn.Parameter(torch.randn(rank, in_features) * 0.02)
        self.lora_b = nn.Parameter(torch.zeros(out_features, rank))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return F.linear(x, self.base.weight) + F.linear(F.linear(x, self.lora_a), self.lora_b)


class CausalLoRABlock(nn.Module):
    def __init__(self, dim: int, n_heads: int, rank: int):
        super().__init__()
        self.n_heads = n_heads
        self.norm1 = nn.LayerNorm(dim)
        self.to_q = LoRALinear(dim, dim, rank)
        self.to_k = LoRALinear(dim, dim, rank)
        self.to_v = LoRALinear(dim, dim, rank)
        self.to_out = LoRALinear(dim, dim, rank)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(nn.Linear(dim, dim * 2), nn.GELU(), nn.Linear(dim * 2, dim))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, n, d = x.shape
        hd = d // self.n_heads
        h = self.norm1(x)
        q, k, v = (
            proj(h).view(b, n, self.n_heads, hd).transpose(1, 2)
            for proj in (self.to_q, self.to_k, self.to_v)
        )
        logits = q @ k.transpose(-1, -2) / hd**0.5
        causal = torch.full((n, n), float("-inf"), device=x.device, dtype=x.dtype).triu(1)
        attn = torch.softmax(logits + causal, dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, n, d)
        x = x + self.to_out(out)
        return x + self.mlp(self.norm2(x))


class FeatureResampler(nn.Module):
    """One self-attention block over the feature tokens plus a width change."""

    def __init__(self, in_dim: int, out_dim: int, n_heads: int, zero_init_out: bool = False):
        super().__init__()
        self.proj_in = nn.Linear(in_dim, out_dim)
        self.norm = nn.LayerNorm(out_dim)
        self.attn = nn.MultiheadAttention(out_dim, n_heads, batch_first=True)
        self.norm_ff = nn.LayerNorm(out_dim)
        self.ff = nn.Sequential(nn.Linear(out_dim, out_dim * 2), nn.GELU(), nn.Linear(out_dim * 2, out_dim))
        self.proj_out = nn.Linear(out_dim, out_dim)
        if zero_init_out:
            nn.init.zeros_(self.proj_out.weight)
            nn.init.zeros_(self.proj_out.bias)

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        x = self.proj_in(tokens)
        h = self.norm(x)
        h, _ = self.attn(h, h, h, need_weights=False)
        x = x + h
        x = x + self.ff(self.norm_ff(x))
        return self.proj_out(x)


class CharacterFeatureAdapter(nn.Module):
    def __init__(self, config: AdapterConfig):
        super().__init__()
        self.config = config
        d = config.inner_dim
        self.embed = nn.Embedding(config.vocab_size, d)
        self.pos = nn.Parameter(torch.randn(config.max_caption_len + 64, d) * 0.02)
        self.blocks = nn.ModuleList(
            CausalLoRABlock(d, config.n_heads, config.lora_rank) for _ in range(config.n_layers)
        )
        self.final_norm = nn.LayerNorm(d)
        self.special_embed = nn.Parameter(torch.randn(2, d) * 0.02)  # <IMG>, </IMG>
        self.resampler_in = FeatureResampler(config.feature_dim, d, config.n_heads)
        self.resampler_out = FeatureResampler(d, config.feature_dim, config.n_heads, zero_init_out=True)
        self._freeze_backbone()

    def _freeze_backbone(self) -> None:
        """Freeze everything except the deltas, resamplers, and special tokens."""
        trainable_ids = {id(p) for p in self.trainable_parameters()}
        for p in self.parameters():
            if id(p) not in trainable_ids:
                p.requires_grad_(False)

    def trainable_parameters(self) -> list[nn.Parameter]:
        params: list[nn.Parameter] = [self.special_embed]
        params.extend(self.resampler_in.parameters())
        params.extend(self.resampler_out.parameters())
        for block in self.blocks:
            for proj in (block.to_q, block.to_k, block.to_v, block.to_out):
                params.extend([proj.lora_a, proj.lora_b])
        return params

    def _effective_embedding(self) -> torch.Tensor:
        base = self.embed.weight.detach()
        return torch.cat([base[:IMG_ID], self.special_embed, base[IMG_END_ID + 1 :]], dim=0)

    def forward(self, caption_ids: torch.Tensor, source_features: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """(B, L) caption ids + (B, F, C) source features ->
        (special-token logits (B, 2, vocab), adapted features (B, F, C))."""
        cfg = self.config
        b, n_feat = source_features.shape[0], source_features.shape[1]
        if caption_ids.shape[1] > cfg.max_caption_len:
            raise ValueError(f"caption length {caption_ids.shape[1]} exceeds {cfg.max_caption_len}")
        embed = self._effective_embedding()
        bos = embed[BOS_ID].expand(b, 1, -1)
        cap = embed[caption_ids]
        img_open = embed[IMG_ID].expand(b, 1, -1)
        img_close = embed[IMG_END_ID].expand(b, 1, -1)
        feats_inner = self.resampler_in(source_features)
        seq = torch.cat([bos, cap, img_open, feats_inner, img_close], dim=1)
        if seq.shape[1] > self.pos.shape[0]:
            raise ValueError(f"sequence length {seq.shape[1]} exceeds positional table {self.pos.shape[0]}")
        h = seq + self.pos[: seq.shape[1]]
        for block in self.blocks:
            h = block(h)
        h = self.final_norm(h)

        n_cap = caption_ids.shape[1]
        open_pos = n_cap  # position of the last pre-<IMG> token (BOS at 0)
        close_pos = n_cap + 1 + n_feat
        logits = h @ embed.transpose(0, 1)
        special_logits = torch.stack([logits[:, open_pos], logits[:, close_pos]], dim=1)

        feat_hidden = h[:, n_cap + 2 : n_cap + 2 + n_feat]
        adapted = source_features + self.resampler_out(feat_hidden)
        return special_logits, adapted

    def adapt(self, caption_ids: torch.Tensor, tokens: CharacterTokens) -> CharacterTokens:
        _, adapted = self(caption_ids, tokens.tokens)
        return CharacterTokens(tokens=adapted, validity=tokens.validity, n_q=tokens.n_q)


def special_token_loss(special_logits: torch.Tensor) -> torch.Tensor:
    """Cross-entropy of the two template positions against <IMG>, </IMG>."""
    b = special_logits.shape[0]
    targets = torch.tensor([IMG_ID, IMG_END_ID], device=special_logits.device).expand(b, 2)
    return F.cross_entropy(special_logits.reshape(b * 2, -1), targets.reshape(b * 2))


def masked_feature_mse(
    predicted: torch.Tensor, target: torch.Tensor, validity: torch.Tensor, n_q: int
) -> torch.Tensor:
    """MSE over valid slots only; padded slots contribute exactly zero."""
    if predicted.shape != target.shape:
        raise ValueError(f"feature shape mismatch: {tuple(predicted.shape)} vs {tuple(target.shape)}")
    keep = torch.repeat_interleave(validity.to(predicted.dtype), n_q, dim=1).unsqueeze(-1)
    diff2 = (predicted - target) ** 2 * keep
    denom = keep.sum() * predicted.shape[-1]
    return diff2.sum() / denom.clamp(min=1.0)


def blend_features(source: torch.Tensor, adapted: torch.Tensor, beta: float) -> torch.Tensor:
    """Convex blend (1 - beta) * source + beta * adapted."""
    if source.shape != adapted.shape:
        raise ValueError(f"blend shape mismatch: {tuple(source.shape)} vs {tuple(adapted.shape)}")
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must be in [0, 1], got {beta}")
    if beta == 0.0:
        return source.clone()
    if beta == 1.0:
        return adapted.clone()
    return (1.0 - beta) * source + beta * adapted


@dataclass
class AdapterBatch:
    """One adaptation training mini-batch, condition tensors prebuilt.

    Target features come from the feature extractor run on the target
    panel's own crops for the same page-local character ids as the
    source; both token blocks share slot layout and validity.
    """

    caption_ids: torch.Tensor  # (B, L)
    source_tokens: CharacterTokens
    target_tokens: CharacterTokens
    z0: torch.Tensor  # (B, 1, h, w) target panel latent
    masks: dict[tuple[int, int], torch.Tensor]
    dialog_mask: torch.Tensor | None
    fourier_dialog_emb: torch.Tensor | None = None


def adapter_loss(
    batch: AdapterBatch,
    adapter: CharacterFeatureAdapter,
    generator,
    lambdas: tuple[float, float, float] = (1.0, 6.0, 1.0),
    t: torch.Tensor | None = None,
    noise: torch.Tensor | None = None,
    rng: torch.Generator | None = None,
) -> tuple[torch.Tensor, dict[str, torch.Tensor]]:
    """Total = l_lm * LM + l_mse * MSE + l_diff * denoising.

    `generator` is the frozen trained generation stack; only adapter
    trainables may receive gradients, which is asserted up front. Fixed
    `t`/`noise` make the loss a deterministic function of the parameters
    (used by finite-difference checks); otherwise they are drawn from
    `rng`.
    """
    frozen = [p for p in generator.stage1_parameters() if p.requires_grad]
    if frozen:
        raise AssertionError(
            f"generator is not frozen: {len(frozen)} stage-1 parameters still require grad"
        )
    l_lm, l_mse, l_diff = lambdas

    special_logits, adapted = adapter(batch.caption_ids, batch.source_tokens.tokens)
    loss_lm = special_token_loss(special_logits)
    if not torch.equal(batch.source_tokens.validity, batch.target_tokens.validity):
        raise ValueError("source/target slot validity differs; pairs must share character ids")
    loss_mse = masked_feature_mse(
        adapted, batch.target_tokens.tokens, batch.source_tokens.validity, batch.source_tokens.n_q
    )

    b = batch.z0.shape[0]
    t_max = generator.schedule.t_max
    if t is None:
        t = torch.randint(0, t_max, (b,), generator=rng)
    if noise is None:
        noise = torch.randn(batch.z0.shape, generator=rng, dtype=batch.z0.dtype)
    z_t = generator.schedule.q_sample(batch.z0, t, noise)
    with torch.no_grad():
        text_tokens = generator.text_encoder(batch.caption_ids)
    eps_hat = generator.unet(
        z_t,
        t,
        text_tokens,
        adapted,
        batch.masks,
        batch.dialog_mask,
        alpha=generator.config.alpha_train,
        fourier_dialog_emb=batch.fourier_dialog_emb,
    )
    loss_diff = F.mse_loss(eps_hat, noise)

    total = l_lm * loss_lm + l_mse * loss_mse + l_diff * loss_diff
    return total, {"lm": loss_lm.detach(), "mse": loss_mse.detach(), "diff": loss_diff.detach()}
