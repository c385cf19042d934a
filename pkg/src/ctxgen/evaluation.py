"""Semantic-closeness evaluation of generated text.

A generated sentence is scored as the mean cosine similarity between the
embeddings of its nouns and the embedding of the context word that produced
it.  Nouns come from a lexicon plus an optional capitalization heuristic for
proper nouns; sentences without nouns are skipped rather than scored.
Per-checkpoint reports aggregate into curves that compare a context-trained
model against its zero-context base twin over training time.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

from .embedding import EmbeddingSpace, cosine
from .errors import NoSignalError
from .generation import GenerationRequest, generate

NOUN = "NOUN"
PROPN = "PROPN"


@dataclass
class NounTagger:
    """Lexicon-driven noun tagger with a capitalization heuristic.

    A token is NOUN when its lowercase form is in the lexicon and PROPN when
    it is capitalized away from the sentence start (``propn_rule`` on).  The
    tagger is deliberately shallow; it sits behind this small surface so a
    statistical tagger could replace it without touching the scoring.
    """

    noun_lexicon: set[str]
    propn_rule: bool = True

    @classmethod
    def from_words(cls, words: Sequence[str], propn_rule: bool = True) -> "NounTagger":
        return cls({w.lower() for w in words}, propn_rule)

    @classmethod
    def from_file(cls, path: str, propn_rule: bool = True) -> "NounTagger":
        with open(path, encoding="utf-8") as fh:
            words = [line.strip() for line in fh if line.strip()]
        return cls.from_words(words, propn_rule)


def tag_nouns(
    tokens: Sequence[str],
    caps: Sequence[bool] | None,
    tagger: NounTagger,
) -> list[str]:
    """Tokens tagged NOUN or PROPN, duplicates kept, in sentence order."""
    nouns = []
    for idx, tok in enumerate(tokens):
        is_noun = tok.lower() in tagger.noun_lexicon
        is_propn = tagger.propn_rule and caps is not None and idx > 0 and caps[idx]
        if is_noun or is_propn:
            nouns.append(tok)
    return nouns


def score_sentence(
    tokens: Sequence[str],
    context_word: str,
    space: EmbeddingSpace,
    tagger: NounTagger,
    caps: Sequence[bool] | None = None,
) -> tuple[float | None, int]:
    """Mean noun-to-context cosine similarity, or None when no noun scores.

    Returns ``(score, n_nouns)``; nouns without embeddings are dropped from
    the average.  The context word itself must be embeddable.
    """
    ctx_vec = space.vector_for(context_word.lower())
    sims = []
    for noun in tag_nouns(tokens, caps, tagger):
        tid = space.vocab.index.get(noun.lower())
        if tid is not None and space.covers(tid):
            sims.append(cosine(space.vector(tid), ctx_vec))
    if not sims:
        return None, 0
    return sum(sims) / len(sims), len(sims)


@dataclass
class SentenceScore:
    context_word: str
    score: float | None
    n_nouns: int

    @property
    def skipped(self) -> bool:
        return self.score is None


@dataclass
class EvalReport:
    """Per-checkpoint evaluation: one entry per context word."""

    epoch: int
    label: str  # "context" | "base"
    space_id: str
    entries: list[SentenceScore] = field(default_factory=list)

    @property
    def mean(self) -> float | None:
        scored = [e.score for e in self.entries if e.score is not None]
        if not scored:
            return None
        return sum(scored) / len(scored)

    @property
    def skipped_count(self) -> int:
        return sum(1 for e in self.entries if e.skipped)


def evaluate_checkpoint(
    model,
    eval_contexts: Sequence[str],
    seeds: Sequence[str],
    space: EmbeddingSpace,
    tagger: NounTagger,
    backend,
    max_sentence_len: int = 60,
) -> EvalReport:
    """Generate one sentence per context and score each against its context.

    Deterministic under greedy decoding.  The report records which embedding
    space did the scoring, since context extraction and scoring may use
    different spaces.
    """
    request = GenerationRequest(
        seeds=list(seeds), contexts=list(eval_contexts), max_sentence_len=max_sentence_len
    )
    result = generate(model, request, backend)
    label = "base" if model.config.context_mode == "none" else "context"
    report = EvalReport(
        epoch=getattr(model, "epoch", 0), label=label, space_id=space.checksum()[:12]
    )
    for sent in result.sentences:
        score, n_nouns = score_sentence(sent.tokens, sent.context_word, space, tagger)
        report.entries.append(SentenceScore(sent.context_word, score, n_nouns))
    return report


def best_epoch(reports: Sequence[EvalReport]) -> int:
    """Epoch with the highest mean score; ties go to the earliest epoch."""
    defined = [(r.epoch, r.mean) for r in sorted(reports, key=lambda r: r.epoch) if r.mean is not None]
    if not defined:
        raise NoSignalError("no report has a defined mean score")
    return max(defined, key=lambda t: t[1])[0]


def write_report_csv(reports: Sequence[EvalReport], path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["epoch", "model_label", "space_id", "context_word", "score", "n_nouns", "skipped"]
        )
        for report in reports:
            for e in report.entries:
                writer.writerow(
                    [
                        report.epoch,
                        report.label,
                        report.space_id,
                        e.context_word,
                        "" if e.score is None else repr(e.score),
                        e.n_nouns,
                        int(e.skipped),
                    ]
                )


def read_report_csv(path: str) -> list[EvalReport]:
    by_key: dict[tuple[int, str, str], EvalReport] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            key = (int(row["epoch"]), row["model_label"], row["space_id"])
            report = by_key.setdefault(
                key, EvalReport(epoch=key[0], label=key[1], space_id=key[2])
            )
            score = float(row["score"]) if row["score"] else None
            report.entries.append(
                SentenceScore(row["context_word"], score, int(row["n_nouns"]))
            )
    return [by_key[k] for k in sorted(by_key)]


def write_curves_csv(
    context_reports: Sequence[EvalReport],
    base_reports: Sequence[EvalReport],
    path: str,
) -> None:
    """Comparison curve: epoch, mean_context, mean_base."""
    base_by_epoch = {r.epoch: r.mean for r in base_reports}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_context", "mean_base"])
        for report in sorted(context_reports, key=lambda r: r.epoch):
            base_mean = base_by_epoch.get(report.epoch)
            writer.writerow(
                [
                    report.epoch,
                    "" if report.mean is None else repr(report.mean),
                    "" if base_mean is None else repr(base_mean),
                ]
            )


# ---------------------------------------------------------------------------
# Minimal hand-rolled SVG line chart.  matplotlib would embed timestamps in
# its SVG output, which breaks byte-identical reruns; this stays
# deterministic.

_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def render_line_chart_svg(
    path: str,
    series: Sequence[tuple[str, Sequence[tuple[float, float]]]],
    title: str,
    x_label: str,
    y_label: str,
    width: int = 640,
    height: int = 400,
) -> None:
    """Write a fixed-size SVG plotting each (label, [(x, y), ...]) series."""
    margin_l, margin_r, margin_t, margin_b = 60, 20, 40, 50
    plot_w = width - margin_l - margin_r
    plot_h = height - margin_t - margin_b

    points = [p for _, pts in series for p in pts]
    xs = [p[0] for p in points] or [0.0, 1.0]
    ys = [p[1] for p in points] or [0.0, 1.0]
    x_min, x_max = min(xs), max(xs)
    y_min, y_max = min(ys), max(ys)
    if x_max == x_min:
        x_max = x_min + 1.0
    if y_max == y_min:
        y_max = y_min + 1.0
    pad = 0.05 * (y_max - y_min)
    y_min -= pad
    y_max += pad

    def sx(x: float) -> float:
        return margin_l + (x - x_min) / (x_max - x_min) * plot_w

    def sy(y: float) -> float:
        return margin_t + (y_max - y) / (y_max - y_min) * plot_h

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="16">{title}</text>',
    ]
    # axes
    lines.append(
        f'<line x1="{margin_l}" y1="{margin_t}" x2="{margin_l}" '
        f'y2="{margin_t + plot_h}" stroke="black"/>'
    )
    lines.append(
        f'<line x1="{margin_l}" y1="{margin_t + plot_h}" x2="{margin_l + plot_w}" '
        f'y2="{margin_t + plot_h}" stroke="black"/>'
    )
    for i in range(5):
        fx = x_min + (x_max - x_min) * i / 4
        fy = y_min + (y_max - y_min) * i / 4
        lines.append(
            f'<text x="{sx(fx):.1f}" y="{margin_t + plot_h + 18}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{fx:.3g}</text>'
        )
        lines.append(
            f'<text x="{margin_l - 6}" y="{sy(fy) + 4:.1f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{fy:.3g}</text>'
        )
    lines.append(
        f'<text x="{margin_l + plot_w / 2:.1f}" y="{height - 12}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13">{x_label}</text>'
    )
    lines.append(
        f'<text x="16" y="{margin_t + plot_h / 2:.1f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13" '
        f'transform="rotate(-90 16 {margin_t + plot_h / 2:.1f})">{y_label}</text>'
    )
    for idx, (label, pts) in enumerate(series):
        color = _PALETTE[idx % len(_PALETTE)]
        drawable = [p for p in pts if p[1] is not None]
        if drawable:
            coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in drawable)
            lines.append(
                f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>'
            )
        ly = margin_t + 16 * idx
        lines.append(
            f'<line x1="{margin_l + plot_w - 130}" y1="{ly}" x2="{margin_l + plot_w - 106}" '
            f'y2="{ly}" stroke="{color}" stroke-width="2"/>'
        )
        lines.append(
            f'<text x="{margin_l + plot_w - 100}" y="{ly + 4}" font-family="sans-serif" '
            f'font-size="12">{label}</text>'
        )
    lines.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
