"""Object-oriented video captioning: temporal graphs, detail enhancement and an attention decoder."""

from ._core import (
    Checkpoint,
    DivergenceError,
    Error,
    IoError,
    ParseError,
    TrainConfig,
    ValidationError,
    Vocabulary,
    bleu,
    caption,
    cider_d,
    evaluate,
    load_checkpoint,
    meteor_lite,
    rouge_l,
    sample_frames,
    score,
    synthesize,
    tokenize,
    train,
)

__all__ = [
    "Checkpoint",
    "DivergenceError",
    "Error",
    "IoError",
    "ParseError",
    "TrainConfig",
    "ValidationError",
    "Vocabulary",
    "bleu",
    "caption",
    "cider_d",
    "evaluate",
    "load_checkpoint",
    "meteor_lite",
    "rouge_l",
    "sample_frames",
    "score",
    "synthesize",
    "tokenize",
    "train",
]
