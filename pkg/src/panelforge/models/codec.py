"""Fixed pixel<->latent codec and image/tensor conversion.

The latent space is the grayscale image average-pooled by a fixed factor,
values in [-1, 1]; decoding is nearest-neighbor unpooling. No learned
parameters, so encode/decode is exactly reproducible and the decoded
image is the blockwise-constant best estimate of the source.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image


def pil_to_tensor(img: Image.Image, size: tuple[int, int] | None = None) -> torch.Tensor:
    """Grayscale (1, H, W) float32 tensor in [-1, 1]."""
    if img.mode != "L":
        img = img.convert("L")
    if size is not None and img.size != size:
        img = img.resize(size, Image.BILINEAR)
    arr = np.asarray(img, dtype=np.float32) / 255.0
    return torch.from_numpy(arr * 2.0 - 1.0).unsqueeze(0)


def tensor_to_pil(x: torch.Tensor) -> Image.Image:
    """Inverse of pil_to_tensor for a (1, H, W) or (H, W) tensor."""
    if x.dim() == 3:
        x = x.squeeze(0)
    arr = ((x.clamp(-1.0, 1.0) + 1.0) * 0.5 * 255.0).round().to(torch.uint8).cpu().numpy()
    return Image.fromarray(arr, mode="L")


class LatentCodec:
    """Average-pool encoder / nearest-unpool decoder at a fixed factor."""

    def __init__(self, factor: int = 8):
        if factor < 1:
            raise ValueError("downsample factor must be >= 1")
        self.factor = factor

    def latent_size(self, image_wh: tuple[int, int]) -> tuple[int, int]:
        w, h = image_wh
        if w % self.factor or h % self.factor:
            raise ValueError(f"image size {w}x{h} is not a multiple of the codec factor {self.factor}")
        return (h // self.factor, w // self.factor)

    def encode(self, images: torch.Tensor) -> torch.Tensor:
        """(B, 1, H, W) pixels in [-1, 1] -> (B, 1, H/f, W/f) latents."""
        if images.shape[-1] % self.factor or images.shape[-2] % self.factor:
            raise ValueError(f"image shape {tuple(images.shape)} not divisible by factor {self.factor}")
        return F.avg_pool2d(images, self.factor)

    def decode(self, latents: torch.Tensor) -> torch.Tensor:
        return F.interpolate(latents, scale_factor=self.factor, mode="nearest").clamp(-1.0, 1.0)
