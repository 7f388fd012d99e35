"""Question difficulty prediction guided by Bloom's taxonomy levels."""

from .data import (
    BLOOM_LABELS,
    DIFFICULTY_LABELS,
    Dataset,
    QuestionRecord,
    SyntheticConfig,
    generate_synthetic,
    load_jsonl,
    save_jsonl,
)
from .encoder import EncoderConfig
from .model import QDiffModel, TrainConfig, Variant, predict, train

__version__ = "0.1.0"

__all__ = [
    "BLOOM_LABELS",
    "DIFFICULTY_LABELS",
    "Dataset",
    "EncoderConfig",
    "QDiffModel",
    "QuestionRecord",
    "SyntheticConfig",
    "TrainConfig",
    "Variant",
    "generate_synthetic",
    "load_jsonl",
    "predict",
    "save_jsonl",
    "train",
]
