"""Context-conditioned word-level LSTM text generation toolkit.

Train a word-level LSTM whose inputs carry a per-sentence context vector
(top tf-idf word, or bag-of-words over embedding clusters), generate one
sentence per user-supplied context word, and score how semantically close
the generated text stays to each context.
"""

from .corpus import (
    ContextVector,
    Sentence,
    TrainingInstance,
    Vocabulary,
    build_vocabulary,
    encode_sentences,
    make_instances,
    one_hot,
    preprocess,
    preprocess_with_caps,
)
from .embedding import EmbeddingSpace, accumulate, cosine, train_skipgram
from .cluster_context import ClusterModel, kmeans, nearest_center
from .tfidf_context import TfidfModel, fit as fit_tfidf, top_word
from .lm import Checkpoint, LmConfig, LmParams, forward, loss_and_grads, train
from .generation import (
    ClusterBackend,
    GenerationRequest,
    GenerationResult,
    NullBackend,
    TfidfBackend,
    context_vector_for_word,
    generate,
)
from .evaluation import (
    EvalReport,
    NounTagger,
    best_epoch,
    evaluate_checkpoint,
    score_sentence,
    tag_nouns,
)

__version__ = "0.1.0"

__all__ = [
    "ContextVector",
    "Sentence",
    "TrainingInstance",
    "Vocabulary",
    "build_vocabulary",
    "encode_sentences",
    "make_instances",
    "one_hot",
    "preprocess",
    "preprocess_with_caps",
    "EmbeddingSpace",
    "accumulate",
    "cosine",
    "train_skipgram",
    "ClusterModel",
    "kmeans",
    "nearest_center",
    "TfidfModel",
    "fit_tfidf",
    "top_word",
    "Checkpoint",
    "LmConfig",
    "LmParams",
    "forward",
    "loss_and_grads",
    "train",
    "ClusterBackend",
    "GenerationRequest",
    "GenerationResult",
    "NullBackend",
    "TfidfBackend",
    "context_vector_for_word",
    "generate",
    "EvalReport",
    "NounTagger",
    "best_epoch",
    "evaluate_checkpoint",
    "score_sentence",
    "tag_nouns",
    "__version__",
]
