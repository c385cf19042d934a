"""Corpus ingestion: preprocessing, vocabulary, and windowed training instances.

The preprocessing contract: text is split into sentences on terminal
punctuation, every punctuation character is stripped from tokens, tokens are
lowercased, short sentences are dropped, and each surviving sentence is
re-terminated with the reserved sentence-end token ``.``.  The corpus is then
flattened into one continuous token stream (no reset at sentence boundaries)
and sliced into fixed-width windows, each paired with the next token as its
prediction target.  The sentence owning the majority of a window's tokens
determines the window's context vector.
"""

from __future__ import annotations

import re
import struct
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConfigurationError

UNK_TOKEN = "<unk>"
EOS_TOKEN = "."

_TERMINAL_RE = re.compile(r"[.!?]+")
# ASCII punctuation plus the common typographic variants.
_PUNCT_CHARS = (
    "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~"
    "‘’“”«»–—…¡¿·"
)
_PUNCT_TABLE = {ord(c): None for c in _PUNCT_CHARS}


def preprocess(
    raw_text: str | bytes,
    min_len: int = 7,
    max_sentences: int = 100_000,
    lowercase: bool = True,
) -> list[list[str]]:
    """Tokenize raw text into cleaned sentences.

    Returns one token list per sentence, each ending with the ``.`` token.
    Sentences with fewer than ``min_len`` content tokens are dropped and the
    output is truncated to the first ``max_sentences`` sentences.
    """
    sentences, _ = preprocess_with_caps(raw_text, min_len, max_sentences, lowercase)
    return sentences


def preprocess_with_caps(
    raw_text: str | bytes,
    min_len: int = 7,
    max_sentences: int = 100_000,
    lowercase: bool = True,
) -> tuple[list[list[str]], list[list[bool]]]:
    """Like :func:`preprocess`, also returning a capitalization bitmap.

    ``caps[i][j]`` is True when token ``j`` of sentence ``i`` started with an
    uppercase letter in the raw text (the appended ``.`` is always False).
    The bitmap feeds the proper-noun heuristic downstream, which needs the
    original casing even though tokens themselves are lowercased.
    """
    if isinstance(raw_text, bytes):
        raw_text = raw_text.decode("utf-8")  # bad bytes: UnicodeDecodeError
    sentences: list[list[str]] = []
    caps: list[list[bool]] = []
    for chunk in _TERMINAL_RE.split(raw_text):
        if len(sentences) >= max_sentences:
            break
        tokens = []
        upper = []
        for word in chunk.split():
            cleaned = word.translate(_PUNCT_TABLE)
            if not cleaned:
                continue
            upper.append(cleaned[0].isupper())
            tokens.append(cleaned.lower() if lowercase else cleaned)
        if len(tokens) < min_len:
            continue
        tokens.append(EOS_TOKEN)
        upper.append(False)
        sentences.append(tokens)
        caps.append(upper)
    return sentences, caps


def save_sentences(sentences: Sequence[Sequence[str]], path: str) -> None:
    """One sentence per line, tokens space-joined."""
    with open(path, "w", encoding="utf-8") as fh:
        for sent in sentences:
            fh.write(" ".join(sent) + "\n")


def load_sentences(path: str) -> list[list[str]]:
    with open(path, encoding="utf-8") as fh:
        return [line.split() for line in fh if line.strip()]


def save_caps(caps: Sequence[Sequence[bool]], path: str) -> None:
    """Capitalization bitmap parallel to a sentences file: 0/1 runs per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for row in caps:
            fh.write("".join("1" if c else "0" for c in row) + "\n")


def load_caps(path: str) -> list[list[bool]]:
    with open(path, encoding="utf-8") as fh:
        return [[ch == "1" for ch in line.strip()] for line in fh if line.strip()]


@dataclass
class Vocabulary:
    """Bijection between surface tokens and dense integer ids.

    Ids follow descending corpus frequency with lexicographic tie-break;
    ``<unk>`` always holds the last id.  ``frequencies[unk_id]`` counts the
    corpus occurrences that fell outside the kept tokens.
    """

    tokens: list[str]
    frequencies: list[int]
    index: dict[str, int] = field(repr=False)
    unk_id: int
    eos_id: int

    @property
    def size(self) -> int:
        return len(self.tokens)

    def encode(self, token: str) -> int:
        return self.index.get(token, self.unk_id)

    def decode(self, token_id: int) -> str:
        return self.tokens[token_id]

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def is_reserved(self, token_id: int) -> bool:
        return token_id in (self.unk_id, self.eos_id)

    def validate(self) -> None:
        assert all(self.index[t] == i for i, t in enumerate(self.tokens))
        assert self.unk_id != self.eos_id
        assert self.tokens[self.unk_id] == UNK_TOKEN
        assert self.tokens[self.eos_id] == EOS_TOKEN


def build_vocabulary(
    sentences: Iterable[Sequence[str]], max_vocab: int | None = None
) -> Vocabulary:
    """Build a frequency-ranked vocabulary over tokenized sentences.

    ``max_vocab`` caps the total size including the two reserved tokens
    (``.`` and ``<unk>``); rarer tokens then encode to ``unk_id``.
    """
    if max_vocab is not None and max_vocab < 2:
        raise ConfigurationError("max_vocab must be at least 2 (reserved tokens)")
    counts: Counter[str] = Counter()
    for sent in sentences:
        counts.update(sent)
    unk_count = counts.pop(UNK_TOKEN, 0)
    eos_count = counts.pop(EOS_TOKEN, 0)

    others = sorted(counts, key=lambda t: (-counts[t], t))
    if max_vocab is not None:
        dropped = others[max_vocab - 2 :]
        unk_count += sum(counts[t] for t in dropped)
        others = others[: max_vocab - 2]

    kept = sorted(others + [EOS_TOKEN], key=lambda t: (-_count_of(t, counts, eos_count), t))
    tokens = kept + [UNK_TOKEN]
    frequencies = [_count_of(t, counts, eos_count) for t in kept] + [unk_count]
    index = {t: i for i, t in enumerate(tokens)}
    vocab = Vocabulary(
        tokens=tokens,
        frequencies=frequencies,
        index=index,
        unk_id=index[UNK_TOKEN],
        eos_id=index[EOS_TOKEN],
    )
    vocab.validate()
    return vocab


def _count_of(token: str, counts: Counter, eos_count: int) -> int:
    return eos_count if token == EOS_TOKEN else counts[token]


def save_vocab_tsv(vocab: Vocabulary, path: str) -> None:
    """Write the vocabulary as ``token<TAB>id<TAB>frequency`` rows."""
    with open(path, "w", encoding="utf-8") as fh:
        for i, (tok, freq) in enumerate(zip(vocab.tokens, vocab.frequencies)):
            fh.write(f"{tok}\t{i}\t{freq}\n")


def load_vocab_tsv(path: str) -> Vocabulary:
    tokens: list[str] = []
    frequencies: list[int] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            tok, idx, freq = line.rstrip("\n").split("\t")
            if int(idx) != len(tokens):
                raise ConfigurationError(f"non-contiguous id {idx} in {path}")
            tokens.append(tok)
            frequencies.append(int(freq))
    index = {t: i for i, t in enumerate(tokens)}
    if UNK_TOKEN not in index or EOS_TOKEN not in index:
        raise ConfigurationError(f"vocabulary at {path} lacks reserved tokens")
    vocab = Vocabulary(
        tokens=tokens,
        frequencies=frequencies,
        index=index,
        unk_id=index[UNK_TOKEN],
        eos_id=index[EOS_TOKEN],
    )
    vocab.validate()
    return vocab


def one_hot(token_id: int, size: int) -> np.ndarray:
    """Dense one-hot vector of length ``size`` with a 1 at ``token_id``."""
    if not 0 <= token_id < size:
        raise IndexError(f"token id {token_id} out of range for size {size}")
    vec = np.zeros(size, dtype=np.float64)
    vec[token_id] = 1.0
    return vec


ONE_HOT = "one-hot"
BAG_OF_WORDS = "bag-of-words"
ZERO = "zero"


@dataclass(frozen=True)
class ContextVector:
    """Dense V-length context vector plus its encoding kind."""

    weights: np.ndarray
    kind: str

    @classmethod
    def one_hot(cls, token_id: int, size: int) -> "ContextVector":
        return cls(one_hot(token_id, size), ONE_HOT)

    @classmethod
    def bag_of_words(cls, token_ids: Sequence[int], size: int) -> "ContextVector":
        if len(token_ids) == 0:
            raise ValueError("bag-of-words context needs at least one token id")
        vec = np.zeros(size, dtype=np.float64)
        for tid in token_ids:
            if not 0 <= tid < size:
                raise IndexError(f"token id {tid} out of range for size {size}")
            vec[tid] = 1.0
        return cls(vec, BAG_OF_WORDS)

    @classmethod
    def zero(cls, size: int) -> "ContextVector":
        return cls(np.zeros(size, dtype=np.float64), ZERO)

    @property
    def nonzero_ids(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.weights)]

    def validate(self) -> None:
        nz = np.count_nonzero(self.weights)
        if self.kind == ONE_HOT:
            assert nz == 1 and self.weights.max() == 1.0
        elif self.kind == BAG_OF_WORDS:
            assert nz >= 1 and set(np.unique(self.weights)) <= {0.0, 1.0}
        elif self.kind == ZERO:
            assert nz == 0
        else:
            raise ValueError(f"unknown context kind {self.kind!r}")


@dataclass(frozen=True)
class Sentence:
    """Encoded sentence: token ids plus its ordinal in the corpus."""

    token_ids: tuple[int, ...]
    source_index: int


@dataclass(frozen=True)
class TrainingInstance:
    """One context vector, ``window`` input ids, and the following target id."""

    context: ContextVector
    input_ids: tuple[int, ...]
    target_id: int
    sentence_ref: int


def encode_sentences(
    sentences: Iterable[Sequence[str]], vocab: Vocabulary
) -> list[Sentence]:
    return [
        Sentence(tuple(vocab.encode(t) for t in sent), i)
        for i, sent in enumerate(sentences)
    ]


ContextFn = Callable[[Sentence], ContextVector]


def make_instances(
    sentences: Sequence[Sequence[str]],
    vocab: Vocabulary,
    window: int = 8,
    ctx_fn: ContextFn | None = None,
) -> list[TrainingInstance]:
    """Slice the flattened corpus stream into many-to-one training instances.

    One instance per stream position ``i`` with ``i + window`` still inside
    the stream: inputs are ``stream[i : i + window]``, the target is
    ``stream[i + window]``.  The context comes from ``ctx_fn`` applied to the
    sentence owning the majority of the window's tokens (ties go to the later
    sentence).  ``ctx_fn=None`` yields all-zero contexts (base-model mode).
    """
    if window < 1:
        raise ConfigurationError("window must be >= 1")
    encoded = encode_sentences(sentences, vocab)
    stream: list[int] = []
    owners: list[int] = []
    for sent in encoded:
        stream.extend(sent.token_ids)
        owners.extend([sent.source_index] * len(sent.token_ids))

    ctx_cache: dict[int, ContextVector] = {}

    def context_for(sentence_idx: int) -> ContextVector:
        if sentence_idx not in ctx_cache:
            if ctx_fn is None:
                ctx_cache[sentence_idx] = ContextVector.zero(vocab.size)
            else:
                ctx_cache[sentence_idx] = ctx_fn(encoded[sentence_idx])
        return ctx_cache[sentence_idx]

    instances = []
    for i in range(len(stream) - window):
        window_owners = owners[i : i + window]
        tally = Counter(window_owners)
        best = max(tally.items(), key=lambda kv: (kv[1], kv[0]))[0]
        instances.append(
            TrainingInstance(
                context=context_for(best),
                input_ids=tuple(stream[i : i + window]),
                target_id=stream[i + window],
                sentence_ref=best,
            )
        )
    return instances


# ---------------------------------------------------------------------------
# Instance persistence: binary record stream plus a human-readable TSV.
# Context vectors are stored sparsely (kind + nonzero ids); entries are
# {0, 1} by invariant, so this is lossless.

_DS_MAGIC = b"CTXD"
_DS_VERSION = 1
_KIND_CODES = {ZERO: 0, ONE_HOT: 1, BAG_OF_WORDS: 2}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}


def write_instances(instances: Sequence[TrainingInstance], vocab_size: int, path: str) -> None:
    if instances:
        window = len(instances[0].input_ids)
    else:
        window = 0
    with open(path, "wb") as fh:
        fh.write(_DS_MAGIC)
        fh.write(struct.pack("<HIIQ", _DS_VERSION, vocab_size, window, len(instances)))
        for inst in instances:
            ctx_ids = inst.context.nonzero_ids
            fh.write(
                struct.pack(
                    "<IBH",
                    inst.sentence_ref,
                    _KIND_CODES[inst.context.kind],
                    len(ctx_ids),
                )
            )
            fh.write(struct.pack(f"<{len(ctx_ids)}I", *ctx_ids))
            fh.write(struct.pack(f"<{window}I", *inst.input_ids))
            fh.write(struct.pack("<I", inst.target_id))


def read_instances(path: str) -> tuple[list[TrainingInstance], int, int]:
    """Read a binary instance stream; returns (instances, vocab_size, window)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _DS_MAGIC:
            raise ConfigurationError(f"{path} is not an instance stream")
        version, vocab_size, window, count = struct.unpack("<HIIQ", fh.read(18))
        if version != _DS_VERSION:
            raise ConfigurationError(f"unsupported instance stream version {version}")
        instances = []
        for _ in range(count):
            sentence_ref, kind_code, n_ctx = struct.unpack("<IBH", fh.read(7))
            ctx_ids = struct.unpack(f"<{n_ctx}I", fh.read(4 * n_ctx))
            input_ids = struct.unpack(f"<{window}I", fh.read(4 * window))
            (target_id,) = struct.unpack("<I", fh.read(4))
            kind = _KIND_NAMES[kind_code]
            if kind == ZERO:
                ctx = ContextVector.zero(vocab_size)
            elif kind == ONE_HOT:
                ctx = ContextVector.one_hot(ctx_ids[0], vocab_size)
            else:
                ctx = ContextVector.bag_of_words(ctx_ids, vocab_size)
            instances.append(
                TrainingInstance(
                    context=ctx,
                    input_ids=input_ids,
                    target_id=target_id,
                    sentence_ref=sentence_ref,
                )
            )
    return instances, vocab_size, window


def write_instances_tsv(instances: Sequence[TrainingInstance], path: str) -> None:
    """Debug dump: context kind, context nonzeros, input ids, target id."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("context_kind\tcontext_nonzeros\tinput_ids\ttarget_id\n")
        for inst in instances:
            nz = ",".join(str(i) for i in inst.context.nonzero_ids)
            ids = ",".join(str(i) for i in inst.input_ids)
            fh.write(f"{inst.context.kind}\t{nz}\t{ids}\t{inst.target_id}\n")
