"""Evaluation and agreement measures: span alignment (exact and fuzzy-head),
micro precision/recall/F1, deepest-span BIO projection, Cohen's kappa, and
head accuracy."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence

from nestrec.corpus import Corpus, Sentence


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float


def prf_from_counts(matched: int, n_gold: int, n_pred: int) -> PRF:
    p = matched / n_pred if n_pred else 0.0
    r = matched / n_gold if n_gold else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return PRF(p, r, f)


@dataclass(frozen=True)
class SpanAlignment:
    """One-to-one matching between gold and predicted spans of a sentence."""

    matched: tuple[tuple[object, object], ...]
    unmatched_gold: tuple[object, ...]
    unmatched_pred: tuple[object, ...]
    mode: str  # exact | fuzzy
    typed: bool

    @property
    def counts(self) -> tuple[int, int, int]:
        n_gold = len(self.matched) + len(self.unmatched_gold)
        n_pred = len(self.matched) + len(self.unmatched_pred)
        return len(self.matched), n_gold, n_pred


def _span_sort_key(span) -> tuple:
    return (span.start, -span.end, span.etype)


def align_spans(
    gold: Sequence, pred: Sequence, mode: str = "exact", typed: bool = False
) -> SpanAlignment:
    """Greedy one-to-one alignment for one sentence.

    Exact-boundary (and type, when typed) pairs are made first; in fuzzy
    mode each remaining gold span is then paired with the smallest
    still-unmatched predicted span containing its head (ties: leftmost
    start). Spans are any objects with start/end/head/etype attributes.
    """
    if mode not in ("exact", "fuzzy"):
        raise ValueError(f"unknown alignment mode {mode!r}")
    gold_left = sorted(gold, key=_span_sort_key)
    pred_left = sorted(pred, key=_span_sort_key)
    pairs: list[tuple[object, object]] = []

    def same(g, p) -> bool:
        if g.start != p.start or g.end != p.end:
            return False
        return not typed or g.etype == p.etype

    still_gold = []
    for g in gold_left:
        hit = next((p for p in pred_left if same(g, p)), None)
        if hit is not None:
            pairs.append((g, hit))
            pred_left.remove(hit)
        else:
            still_gold.append(g)
    gold_left = still_gold

    if mode == "fuzzy":
        still_gold = []
        for g in gold_left:
            candidates = [
                p
                for p in pred_left
                if p.start <= g.head <= p.end
                and (not typed or g.etype == p.etype)
            ]
            if candidates:
                hit = min(
                    candidates, key=lambda p: (p.end - p.start, p.start, p.etype)
                )
                pairs.append((g, hit))
                pred_left.remove(hit)
            else:
                still_gold.append(g)
        gold_left = still_gold

    return SpanAlignment(
        matched=tuple(pairs),
        unmatched_gold=tuple(gold_left),
        unmatched_pred=tuple(pred_left),
        mode=mode,
        typed=typed,
    )


def span_prf(alignment: SpanAlignment) -> PRF:
    matched, n_gold, n_pred = alignment.counts
    return prf_from_counts(matched, n_gold, n_pred)


def paired_sentences(
    gold: Corpus, pred: Corpus
) -> list[tuple[Sentence, Sentence]]:
    """Zip two corpora sentence-by-sentence, insisting on aligned
    inventories (same counts and token numbers)."""
    gold_sents = [s for _, s in gold.sentences()]
    pred_sents = [s for _, s in pred.sentences()]
    if len(gold_sents) != len(pred_sents):
        raise ValueError(
            f"sentence count mismatch: gold {len(gold_sents)}, "
            f"pred {len(pred_sents)}"
        )
    for g, p in zip(gold_sents, pred_sents):
        if len(g) != len(p):
            raise ValueError(
                f"token count mismatch in sentence {g.sent_id!r}: "
                f"{len(g)} vs {len(p)}"
            )
    return list(zip(gold_sents, pred_sents))


def evaluate_spans(
    gold: Corpus, pred: Corpus, mode: str = "exact", typed: bool = False
) -> PRF:
    """Micro-averaged PRF over all sentences of two aligned corpora."""
    matched = n_gold = n_pred = 0
    for g, p in paired_sentences(gold, pred):
        alignment = align_spans(g.entities, p.entities, mode=mode, typed=typed)
        m, ng, npred = alignment.counts
        matched += m
        n_gold += ng
        n_pred += npred
    return prf_from_counts(matched, n_gold, n_pred)


def deepest_bio_labels(
    sentence: Sentence, spans: Optional[Sequence] = None
) -> list[str]:
    """Per-token tag from the 21-tag set: each token carries the type of its
    innermost covering span, B- wherever that span begins, O outside."""
    if spans is None:
        spans = sentence.entities
    tags = ["O"] * len(sentence)
    for i in range(1, len(sentence) + 1):
        covering = [s for s in spans if s.start <= i <= s.end]
        if not covering:
            continue
        innermost = min(
            covering, key=lambda s: (s.end - s.start, -s.start, s.etype)
        )
        prefix = "B-" if innermost.start == i else "I-"
        tags[i - 1] = prefix + innermost.etype
    return tags


def cohen_kappa(tags_a: Sequence[str], tags_b: Sequence[str]) -> float:
    """Chance-corrected agreement from per-annotator marginal distributions."""
    if len(tags_a) != len(tags_b):
        raise ValueError(
            f"length mismatch: {len(tags_a)} vs {len(tags_b)}"
        )
    n = len(tags_a)
    if n == 0:
        raise ValueError("empty tag sequences")
    p_o = sum(a == b for a, b in zip(tags_a, tags_b)) / n
    freq_a = Counter(tags_a)
    freq_b = Counter(tags_b)
    p_e = sum(freq_a[t] * freq_b.get(t, 0) for t in freq_a) / (n * n)
    if p_e == 1.0:
        return 1.0
    return (p_o - p_e) / (1.0 - p_e)


def head_accuracy(
    ann_a: Sequence[Sequence], ann_b: Sequence[Sequence]
) -> float:
    """Ignoring span boundaries: the fraction of annotation-A spans whose
    head token carries a span of the same type in annotation B.

    Arguments are parallel per-sentence span lists.
    """
    if len(ann_a) != len(ann_b):
        raise ValueError("annotations cover different sentence counts")
    total = correct = 0
    for spans_a, spans_b in zip(ann_a, ann_b):
        b_keys = {(s.head, s.etype) for s in spans_b}
        for span in spans_a:
            total += 1
            if (span.head, span.etype) in b_keys:
                correct += 1
    return correct / total if total else 1.0
