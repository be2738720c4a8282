from panelforge.evaluation.embedders import (
    DialogDetector,
    Embedder,
    FixedSeedAlignmentScorer,
    FixedSeedEmbedder,
    TextImageScorer,
    TruthDialogDetector,
)
from panelforge.evaluation.metrics import (
    character_similarity,
    cosine_similarity,
    dialog_f1,
    frechet_distance,
)
from panelforge.evaluation.report import EvalOracles, MetricReport, run_eval

__all__ = [
    "DialogDetector",
    "Embedder",
    "FixedSeedAlignmentScorer",
    "FixedSeedEmbedder",
    "TextImageScorer",
    "TruthDialogDetector",
    "character_similarity",
    "cosine_similarity",
    "dialog_f1",
    "frechet_distance",
    "EvalOracles",
    "MetricReport",
    "run_eval",
]
