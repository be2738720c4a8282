"""Hash tokenizer and a tiny trainable caption encoder.

The tokenizer maps lowercased alphanumeric words to stable ids via md5,
so token ids never depend on interpreter hash randomization or corpus
order. Reserved ids 0..3 are pad / bos / feature-block open / close; the
last two are only used by the feature adapter's sequence template.
"""

from __future__ import annotations

import hashlib
import re

import torch
from torch import nn

PAD_ID = 0
BOS_ID = 1
IMG_ID = 2  # opens an embedded feature block
IMG_END_ID = 3  # closes an embedded feature block
N_RESERVED = 4

_WORD_RE = re.compile(r"[a-z0-9]+")


class HashTokenizer:
    def __init__(self, vocab_size: int = 512, max_len: int = 16):
        if vocab_size <= N_RESERVED:
            raise ValueError(f"vocab_size must exceed {N_RESERVED}")
        self.vocab_size = vocab_size
        self.max_len = max_len

    def word_id(self, word: str) -> int:
        digest = hashlib.md5(word.encode("utf-8")).digest()
        return N_RESERVED + int.from_bytes(digest[:8], "big") % (self.vocab_size - N_RESERVED)

    def encode(self, text: str, pad: bool = True) -> list[int]:
        ids = [self.word_id(w) for w in _WORD_RE.findall(text.lower())]
        ids = ids[: self.max_len]
        if pad:
            ids = ids + [PAD_ID] * (self.max_len - len(ids))
        return ids

    def encode_batch(self, texts: list[str]) -> torch.Tensor:
        return torch.tensor([self.encode(t) for t in texts], dtype=torch.long)


class TransformerBlock(nn.Module):
    """Pre-norm self-attention + feed-forward, dropout-free for determinism."""

    def __init__(self, dim: int, n_heads: int = 4, ff_mult: int = 2, causal: bool = False):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, n_heads, batch_first=True)
        self.norm2 = nn.LayerNorm(dim)
        self.ff = nn.Sequential(nn.Linear(dim, dim * ff_mult), nn.GELU(), nn.Linear(dim * ff_mult, dim))
        self.causal = causal

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        attn_mask = None
        if self.causal:
            n = x.shape[1]
            attn_mask = torch.full((n, n), float("-inf"), device=x.device, dtype=x.dtype).triu(1)
        h = self.norm1(x)
        h, _ = self.attn(h, h, h, attn_mask=attn_mask, need_weights=False)
        x = x + h
        return x + self.ff(self.norm2(x))


class TextEncoder(nn.Module):
    """Token embedding + learned positions + 2 transformer blocks."""

    def __init__(self, vocab_size: int = 512, dim: int = 64, max_len: int = 16, n_layers: int = 2, n_heads: int = 4):
        super().__init__()
        self.tokenizer = HashTokenizer(vocab_size, max_len)
        self.embed = nn.Embedding(vocab_size, dim)
        self.pos = nn.Parameter(torch.zeros(max_len, dim))
        self.blocks = nn.ModuleList(TransformerBlock(dim, n_heads) for _ in range(n_layers))
        self.norm = nn.LayerNorm(dim)
        self.dim = dim

    def forward(self, token_ids: torch.Tensor) -> torch.Tensor:
        x = self.embed(token_ids) + self.pos[: token_ids.shape[1]]
        for block in self.blocks:
            x = block(x)
        return self.norm(x)

    def encode_text(self, texts: list[str]) -> torch.Tensor:
        ids = self.tokenizer.encode_batch(texts).to(self.embed.weight.device)
        return self(ids)
