"""Skip-gram word embeddings with negative sampling, trained in numpy.

The same trainer serves two profiles: a "domain" space trained on the
language-model corpus and an "external" space trained on any other text.
Reserved tokens (``.`` and ``<unk>``) carry no distributional meaning and are
excluded from training, so an embedding space may cover only part of the
vocabulary; lookups of uncovered ids raise LookupError.
"""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .corpus import Sentence, Vocabulary
from .errors import ConfigurationError, DegenerateSentenceError, ZeroVectorError


@dataclass
class EmbeddingSpace:
    """Dense per-token vectors over (part of) a vocabulary."""

    dim: int
    vectors: np.ndarray  # (V, dim) float64, untrained rows left at zero
    has_vector: np.ndarray  # (V,) bool
    vocab: Vocabulary
    provenance: str = "domain"
    epoch_losses: list[float] = field(default_factory=list)

    def vector(self, token_id: int) -> np.ndarray:
        if not 0 <= token_id < self.vocab.size or not self.has_vector[token_id]:
            raise LookupError(f"no embedding for token id {token_id}")
        return self.vectors[token_id]

    def vector_for(self, token: str) -> np.ndarray:
        tid = self.vocab.index.get(token)
        if tid is None:
            raise LookupError(f"no embedding for token {token!r}")
        return self.vector(tid)

    def covers(self, token_id: int) -> bool:
        return 0 <= token_id < self.vocab.size and bool(self.has_vector[token_id])

    @property
    def covered_ids(self) -> np.ndarray:
        return np.flatnonzero(self.has_vector)

    def serialize(self) -> str:
        """Text form: ``V d`` header, then token + dim decimals per line.

        Values are written with 9 significant digits, which round-trips
        losslessly through this text format (save -> load -> save is
        byte-identical).
        """
        out = io.StringIO()
        ids = self.covered_ids
        out.write(f"{len(ids)} {self.dim}\n")
        for tid in ids:
            coords = " ".join(f"{x:.9g}" for x in self.vectors[tid])
            out.write(f"{self.vocab.decode(int(tid))} {coords}\n")
        return out.getvalue()

    def checksum(self) -> str:
        return hashlib.sha256(self.serialize().encode("utf-8")).hexdigest()


def save_embeddings(space: EmbeddingSpace, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(space.serialize())


def load_embeddings(path: str, vocab: Vocabulary, provenance: str = "") -> EmbeddingSpace:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ConfigurationError(f"{path} is not an embedding file")
        count, dim = int(header[0]), int(header[1])
        vectors = np.zeros((vocab.size, dim), dtype=np.float64)
        has_vector = np.zeros(vocab.size, dtype=bool)
        for _ in range(count):
            parts = fh.readline().split()
            token, coords = parts[0], parts[1:]
            if len(coords) != dim:
                raise ConfigurationError(f"bad row for {token!r} in {path}")
            tid = vocab.index.get(token)
            if tid is None:
                raise ConfigurationError(f"token {token!r} in {path} not in vocabulary")
            vectors[tid] = [float(x) for x in coords]
            has_vector[tid] = True
    return EmbeddingSpace(
        dim=dim,
        vectors=vectors,
        has_vector=has_vector,
        vocab=vocab,
        provenance=provenance or path,
    )


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def train_skipgram(
    sentences: Sequence[Sequence[str]],
    vocab: Vocabulary,
    dim: int = 200,
    window: int = 5,
    negatives: int = 5,
    epochs: int = 5,
    lr: float = 0.025,
    lr_schedule: Callable[[float], float] | None = None,
    seed: int = 0,
    provenance: str = "domain",
) -> EmbeddingSpace:
    """Train skip-gram embeddings with negative sampling.

    Negatives are drawn from the unigram distribution raised to 0.75.  The
    learning rate decays linearly from ``lr`` to ``lr / 100`` over all
    updates unless ``lr_schedule`` (progress in [0, 1] -> rate) overrides it.
    Deterministic for a fixed seed; ``epochs=0`` returns the untouched
    initialization (uniform in [-0.5/dim, 0.5/dim]).

    Tokens outside the vocabulary and the reserved ``.``/``<unk>`` tokens are
    excluded from training, so an external corpus contributes exactly the
    co-occurrences of the words it shares with the vocabulary.
    """
    if dim < 1 or window < 1 or negatives < 0 or epochs < 0:
        raise ConfigurationError("dim/window must be >= 1, negatives/epochs >= 0")
    seqs: list[list[int]] = []
    counts = np.zeros(vocab.size, dtype=np.float64)
    for sent in sentences:
        ids = [
            tid
            for tok in sent
            if tok in vocab.index and not vocab.is_reserved(tid := vocab.index[tok])
        ]
        for tid in ids:
            counts[tid] += 1
        if ids:
            seqs.append(ids)
    trainable = np.flatnonzero(counts)
    if len(trainable) < negatives + 1:
        raise ConfigurationError(
            f"{len(trainable)} embeddable tokens cannot support {negatives} negatives"
        )

    rng = np.random.default_rng(seed)
    w_in = (rng.random((vocab.size, dim)) - 0.5) / dim
    w_out = np.zeros((vocab.size, dim), dtype=np.float64)

    noise = counts**0.75
    noise_cdf = np.cumsum(noise / noise.sum())

    total_pairs = sum(
        sum(min(i + window, len(seq) - 1) - max(i - window, 0) for i in range(len(seq)))
        for seq in seqs
    )
    total_updates = max(total_pairs * epochs, 1)

    epoch_losses = []
    done = 0
    for _ in range(epochs):
        loss_sum = 0.0
        loss_n = 0
        for seq in seqs:
            for i, center in enumerate(seq):
                lo = max(i - window, 0)
                hi = min(i + window, len(seq) - 1)
                for j in range(lo, hi + 1):
                    if j == i:
                        continue
                    progress = done / total_updates
                    rate = (
                        lr_schedule(progress)
                        if lr_schedule is not None
                        else lr * (1.0 - 0.99 * progress)
                    )
                    target = seq[j]
                    draws = np.searchsorted(noise_cdf, rng.random(negatives))
                    negs = draws[draws != target]
                    rows = np.concatenate(([target], negs))
                    labels = np.zeros(len(rows))
                    labels[0] = 1.0
                    v = w_in[center]
                    u = w_out[rows]
                    scores = u @ v
                    p = _sigmoid(scores)
                    # SGNS loss: -log sig(s_pos) - sum log sig(-s_neg)
                    loss_sum += -np.log(np.clip(p[0], 1e-12, None)) - np.sum(
                        np.log(np.clip(1.0 - p[1:], 1e-12, None))
                    )
                    loss_n += 1
                    g = (labels - p) * rate
                    np.add.at(w_out, rows, np.outer(g, v))
                    w_in[center] += g @ u
                    done += 1
        epoch_losses.append(loss_sum / max(loss_n, 1))

    has_vector = np.zeros(vocab.size, dtype=bool)
    has_vector[trainable] = True
    vectors = np.where(has_vector[:, None], w_in, 0.0)
    return EmbeddingSpace(
        dim=dim,
        vectors=vectors,
        has_vector=has_vector,
        vocab=vocab,
        provenance=provenance,
        epoch_losses=epoch_losses,
    )


def accumulate(sentence, space: EmbeddingSpace) -> np.ndarray:
    """Component-wise sum of the sentence's word vectors.

    Tokens without embeddings (reserved or uncovered) are skipped; a
    sentence with no embeddable token at all is degenerate.
    """
    ids = sentence.token_ids if isinstance(sentence, Sentence) else sentence
    usable = [t for t in ids if space.covers(t)]
    if not usable:
        raise DegenerateSentenceError("sentence has no embeddable tokens")
    return space.vectors[usable].sum(axis=0)


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity, clipped into [-1, 1]."""
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ZeroVectorError("cosine of a zero-norm vector is undefined")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))
