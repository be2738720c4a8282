"""panelforge: layout-controlled multi-character manga panel generation.

A desk-scale pipeline: annotation corpus handling, a toy latent-diffusion
generator with per-character masked cross-attention and dialog-region
embedding, a caption-conditioned character feature adapter, training
harness, evaluation metrics, an HTTP generation service, and a CLI.
"""

__version__ = "0.1.0"
