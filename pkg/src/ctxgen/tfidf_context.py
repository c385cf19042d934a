"""Word-importance context extraction.

Each sentence is treated as one document; the token with the highest
tf-idf score in a sentence becomes its context word, encoded one-hot.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from .corpus import ContextVector, Sentence, Vocabulary
from .errors import ConfigurationError, DegenerateSentenceError

SMOOTH = "smooth"
PLAIN = "plain"


@dataclass
class TfidfModel:
    """Document frequencies over a sentence corpus.

    ``df[t]`` counts the sentences containing token ``t`` (presence, not
    occurrences).  With ``idf_mode="smooth"`` the score is
    ``tf * (ln((1 + N) / (1 + df)) + 1)``, which stays positive even for
    tokens present in every sentence; ``"plain"`` uses ``tf * ln(N / df)``.
    """

    doc_count: int
    df: dict[int, int]
    eos_id: int | None = None
    idf_mode: str = SMOOTH

    def idf(self, token_id: int) -> float:
        n_docs = self.df.get(token_id, 0)
        if self.idf_mode == SMOOTH:
            return math.log((1 + self.doc_count) / (1 + n_docs)) + 1.0
        return math.log(self.doc_count / max(n_docs, 1))


def _token_ids(sentence) -> Sequence[int]:
    return sentence.token_ids if isinstance(sentence, Sentence) else sentence


def fit(
    sentences: Iterable[Sequence[int] | Sentence],
    eos_id: int | None = None,
    idf_mode: str = SMOOTH,
) -> TfidfModel:
    """Count per-token document frequencies, one count per sentence at most."""
    if idf_mode not in (SMOOTH, PLAIN):
        raise ConfigurationError(f"unknown idf mode {idf_mode!r}")
    df: Counter[int] = Counter()
    n_docs = 0
    for sent in sentences:
        n_docs += 1
        for tid in set(_token_ids(sent)):
            if tid != eos_id:
                df[tid] += 1
    return TfidfModel(doc_count=n_docs, df=dict(df), eos_id=eos_id, idf_mode=idf_mode)


def top_word(sentence, model: TfidfModel) -> int:
    """Id of the sentence's highest tf-idf token.

    Ties break toward the earliest occurrence in the sentence.  The eos
    token is excluded; a sentence with nothing else raises
    DegenerateSentenceError.
    """
    ids = [t for t in _token_ids(sentence) if t != model.eos_id]
    if not ids:
        raise DegenerateSentenceError("sentence has no content tokens to score")
    tf = Counter(ids)
    best_id = ids[0]
    best_score = tf[best_id] * model.idf(best_id)
    seen = {best_id}
    for tid in ids[1:]:
        if tid in seen:
            continue
        seen.add(tid)
        score = tf[tid] * model.idf(tid)
        if score > best_score:
            best_score = score
            best_id = tid
    return best_id


def context_of(sentence, model: TfidfModel, vocab: Vocabulary) -> ContextVector:
    """One-hot context vector at the sentence's top tf-idf token."""
    return ContextVector.one_hot(top_word(sentence, model), vocab.size)


def dump_contexts_tsv(
    sentences: Sequence[Sequence[int] | Sentence],
    model: TfidfModel,
    vocab: Vocabulary,
    path: str,
) -> None:
    """Debug dump: sentence index, chosen context token, tf-idf score."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("sentence\tcontext_token\tscore\n")
        for i, sent in enumerate(sentences):
            tid = top_word(sent, model)
            score = Counter(_token_ids(sent))[tid] * model.idf(tid)
            fh.write(f"{i}\t{vocab.decode(tid)}\t{score:.9g}\n")
