"""pxrec: prompt-based explainable recommendation.

User/item ID embeddings double as continuous prompts to a small
decoder-only language model (explanation generation) and as matrix
factorization factors (rating prediction), trained jointly under an
uncertainty-weighted multi-task loss with a positivity correction.
"""

from .corpus import (DatasetSplit, InteractionRecord, Vocabulary,
                     generate_synthetic_corpus, load_corpus, split_dataset)
from .estimator import ExplainableRecommender
from .lm import LmConfig
from .metrics import EvaluationReport, evaluate
from .trainer import (Checkpoint, TrainConfig, load_checkpoint,
                      save_checkpoint, train)

__all__ = [
    "Checkpoint",
    "DatasetSplit",
    "EvaluationReport",
    "ExplainableRecommender",
    "InteractionRecord",
    "LmConfig",
    "TrainConfig",
    "Vocabulary",
    "evaluate",
    "generate_synthetic_corpus",
    "load_corpus",
    "save_checkpoint",
    "load_checkpoint",
    "split_dataset",
    "train",
]

__version__ = "0.1.0"
