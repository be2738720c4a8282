from panelforge.data.annotations import (
    AnnotationError,
    CharacterInstance,
    Corpus,
    CorpusStats,
    PageAnnotation,
    PanelAnnotation,
    load_corpus,
    save_corpus,
)
from panelforge.data.bucketing import DEFAULT_BUCKETS, assign_bucket, bucket_batches
from panelforge.data.sampling import SourceCrop, TrainingSample, cap_characters, crop_character, sample_training_pair
from panelforge.data.splits import SplitError, make_split

__all__ = [
    "AnnotationError",
    "CharacterInstance",
    "Corpus",
    "CorpusStats",
    "PageAnnotation",
    "PanelAnnotation",
    "load_corpus",
    "save_corpus",
    "DEFAULT_BUCKETS",
    "assign_bucket",
    "bucket_batches",
    "SourceCrop",
    "TrainingSample",
    "cap_characters",
    "crop_character",
    "sample_training_pair",
    "SplitError",
    "make_split",
]
