"""Two-phase sentence generation.

The user supplies ``window`` seed words plus any number of context words.
For each context word the engine repeatedly predicts the next word from the
current window (context vector held fixed), slides the window by one, and
closes the sentence on the ``.`` token or at the length cap.  After the first
sentence the window simply keeps sliding, so later sentences start from the
words the previous one produced.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cluster_context import ClusterModel, center_similarities
from .corpus import ContextVector, Vocabulary
from .embedding import EmbeddingSpace
from .errors import ConfigurationError, UnknownContextWordError
from .lm import encode_sequence


def _edit_distance(a: str, b: str) -> int:
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def _nearest_words(word: str, candidates: list[str], n: int = 3) -> list[str]:
    ranked = sorted(candidates, key=lambda c: (_edit_distance(word, c), c))
    return ranked[:n]


class TfidfBackend:
    """Prediction-phase context: the context word itself, one-hot."""

    label = "tfidf"

    def __init__(self, vocab: Vocabulary):
        self.vocab = vocab

    def context_vector_for_word(self, word: str) -> ContextVector:
        tid = self.vocab.index.get(word)
        if tid is None or self.vocab.is_reserved(tid):
            candidates = [
                t for i, t in enumerate(self.vocab.tokens) if not self.vocab.is_reserved(i)
            ]
            raise UnknownContextWordError(word, _nearest_words(word, candidates))
        return ContextVector.one_hot(tid, self.vocab.size)


class ClusterBackend:
    """Prediction-phase context via the word's nearest cluster.

    Mirrors the training-time encoding: the context word maps to the cluster
    whose center is most cosine-similar to its embedding, and the context is
    the bag of that cluster's top words.  ``raw=True`` bypasses the cluster
    and one-hots the word directly.
    """

    label = "cluster"

    def __init__(
        self,
        vocab: Vocabulary,
        space: EmbeddingSpace,
        model: ClusterModel,
        raw: bool = False,
    ):
        self.vocab = vocab
        self.space = space
        self.model = model
        self.raw = raw

    def context_vector_for_word(self, word: str) -> ContextVector:
        tid = self.vocab.index.get(word)
        if tid is None or not self.space.covers(tid):
            candidates = [self.vocab.decode(int(i)) for i in self.space.covered_ids]
            raise UnknownContextWordError(word, _nearest_words(word, candidates))
        if self.raw:
            return ContextVector.one_hot(tid, self.vocab.size)
        j = int(np.argmax(center_similarities(self.space.vector(tid), self.model)))
        return ContextVector.bag_of_words(self.model.top_words[j], self.vocab.size)


class NullBackend:
    """Base-model mode: every context vector is all zeros."""

    label = "none"

    def __init__(self, vocab: Vocabulary):
        self.vocab = vocab

    def context_vector_for_word(self, word: str) -> ContextVector:
        return ContextVector.zero(self.vocab.size)


def context_vector_for_word(word: str, backend) -> ContextVector:
    """Context vector a backend assigns to a user-supplied context word."""
    return backend.context_vector_for_word(word)


@dataclass
class GenerationRequest:
    seeds: list[str]
    contexts: list[str]
    max_sentence_len: int = 60
    temperature: float | None = None  # None = greedy
    sample_seed: int = 0
    pad_seeds: bool = False

    def validate(self, window: int) -> None:
        if not self.contexts:
            raise ConfigurationError("at least one context word is required")
        if self.temperature is not None and self.temperature <= 0:
            raise ConfigurationError("temperature must be positive")
        if self.max_sentence_len < 1:
            raise ConfigurationError("max_sentence_len must be >= 1")
        if len(self.seeds) != window and not (self.pad_seeds and len(self.seeds) < window):
            raise ConfigurationError(
                f"expected exactly {window} seed words, got {len(self.seeds)}"
            )


@dataclass
class GeneratedSentence:
    context_word: str
    tokens: list[str]
    truncated: bool


@dataclass
class GenerationResult:
    sentences: list[GeneratedSentence]
    seeds_padded: bool = False

    @property
    def text(self) -> str:
        return " ".join(tok for sent in self.sentences for tok in sent.tokens)

    def to_json_dict(self) -> dict:
        return {
            "seeds_padded": self.seeds_padded,
            "text": self.text,
            "sentences": [
                {
                    "context": s.context_word,
                    "tokens": s.tokens,
                    "truncated": s.truncated,
                }
                for s in self.sentences
            ],
        }


def generate(model, request: GenerationRequest, backend) -> GenerationResult:
    """Generate one sentence per context word.

    ``model`` must expose ``config`` (window, vocab size, context layout) and
    ``next_distribution(x_seq) -> probs``; a trained checkpoint does.  Greedy
    decoding is the default and fully deterministic; temperature sampling is
    deterministic given ``request.sample_seed``.
    """
    config = model.config
    vocab = backend.vocab
    if config.vocab_size != vocab.size:
        raise ConfigurationError(
            f"checkpoint vocabulary size {config.vocab_size} != vocabulary {vocab.size}"
        )
    request.validate(config.window)

    seeds = list(request.seeds)
    padded = False
    if len(seeds) < config.window:
        seeds = [vocab.decode(vocab.unk_id)] * (config.window - len(seeds)) + seeds
        padded = True
    window_ids = [vocab.encode(t) for t in seeds]

    ctx_vectors = [context_vector_for_word(w, backend) for w in request.contexts]
    rng = np.random.default_rng(request.sample_seed)

    sentences = []
    for word, ctx in zip(request.contexts, ctx_vectors):
        tokens: list[str] = []
        truncated = False
        while True:
            assert len(window_ids) == config.window
            x_seq = encode_sequence(
                ctx.weights, window_ids, vocab.size, config.context_position
            )
            probs = model.next_distribution(x_seq)
            if request.temperature is None:
                next_id = int(np.argmax(probs))
            else:
                scaled = np.power(probs, 1.0 / request.temperature)
                scaled /= scaled.sum()
                next_id = int(rng.choice(len(scaled), p=scaled))
            tokens.append(vocab.decode(next_id))
            window_ids = window_ids[1:] + [next_id]
            if next_id == vocab.eos_id:
                break
            if len(tokens) >= request.max_sentence_len:
                truncated = True
                break
        sentences.append(GeneratedSentence(word, tokens, truncated))
    return GenerationResult(sentences=sentences, seeds_padded=padded)
