"""Cascaded entity linking over a frequency table of known article
identifiers, with exact-text and head-lemma baselines, evaluation, and the
decision log that feeds the review workflow.

Lookup happens at four specificity levels: (corpus, mention text),
(mention text), (corpus, head lemma), (head lemma). The first level with a
surviving count answers; frequency ties break to the lexicographically
smallest article identifier.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Optional, Sequence

from nestrec.corpus import Corpus, Document, EntitySpan, Sentence
from nestrec.util import atomic_write_text

KEY_SEP = "\x1f"  # unit separator joins composite TSV keys

LEVEL_NAMES = {1: "ct", 2: "t", 3: "ch", 4: "h"}
LEVEL_BY_NAME = {v: k for k, v in LEVEL_NAMES.items()}

Locator = tuple[str, str, int, int]  # doc_id, sent_id, start, end


@dataclass(frozen=True)
class LinkSuggestion:
    article: str
    rule_level: int  # 1..4, which cascade step fired
    support_count: int


@dataclass(frozen=True)
class LinkDecision:
    """One reviewer action on a located mention.

    The mention's surface snapshot (text, head lemma, corpus id) is carried
    along so that a decision log replays without corpus access.
    """

    decision_id: str
    doc_id: str
    sent_id: str
    start: int
    end: int
    action: str  # accept | reject | assign
    article: Optional[str]
    annotator: str
    timestamp: str
    mention_text: str
    head_lemma: str
    corpus_id: str

    def __post_init__(self) -> None:
        if self.action not in ("accept", "reject", "assign"):
            raise ValueError(f"unknown decision action {self.action!r}")
        if self.action == "assign" and not self.article:
            raise ValueError("assign decision requires an article")

    @property
    def locator(self) -> Locator:
        return (self.doc_id, self.sent_id, self.start, self.end)

    def to_json(self) -> str:
        return json.dumps(
            {
                "decision_id": self.decision_id,
                "doc_id": self.doc_id,
                "sent_id": self.sent_id,
                "start": self.start,
                "end": self.end,
                "action": self.action,
                "article": self.article,
                "annotator": self.annotator,
                "timestamp": self.timestamp,
                "mention_text": self.mention_text,
                "head_lemma": self.head_lemma,
                "corpus_id": self.corpus_id,
            },
            ensure_ascii=False,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, line: str) -> "LinkDecision":
        data = json.loads(line)
        return cls(**{k: data[k] for k in cls.__dataclass_fields__})


@dataclass(frozen=True)
class LinkTable:
    """Frequency-ranked article identifiers at four specificity levels.

    Immutable snapshot; :func:`apply_decisions` produces a new table.
    Rejection suppressions and applied decision ids ride along for the
    review workflow but are not part of the TSV serialization (they are
    reconstructed from the decision log).
    """

    corpus_text: dict[tuple[str, str], dict[str, int]] = field(
        default_factory=dict
    )
    text: dict[str, dict[str, int]] = field(default_factory=dict)
    corpus_head: dict[tuple[str, str], dict[str, int]] = field(
        default_factory=dict
    )
    head: dict[str, dict[str, int]] = field(default_factory=dict)
    suppressed: dict[Locator, frozenset[str]] = field(default_factory=dict)
    applied_ids: frozenset[str] = frozenset()

    def n_entries(self) -> int:
        return sum(
            len(counts)
            for level in (self.corpus_text, self.text, self.corpus_head, self.head)
            for counts in level.values()
        )

    def suppressed_for(self, locator: Locator) -> frozenset[str]:
        return self.suppressed.get(locator, frozenset())

    # -- TSV serialization --------------------------------------------------

    def dump(self) -> str:
        lines = []
        for (corpus_id, text), counts in sorted(self.corpus_text.items()):
            key = f"{corpus_id}{KEY_SEP}{text}"
            for article, count in sorted(counts.items()):
                lines.append(f"ct\t{key}\t{article}\t{count}")
        for text, counts in sorted(self.text.items()):
            for article, count in sorted(counts.items()):
                lines.append(f"t\t{text}\t{article}\t{count}")
        for (corpus_id, head), counts in sorted(self.corpus_head.items()):
            key = f"{corpus_id}{KEY_SEP}{head}"
            for article, count in sorted(counts.items()):
                lines.append(f"ch\t{key}\t{article}\t{count}")
        for head, counts in sorted(self.head.items()):
            for article, count in sorted(counts.items()):
                lines.append(f"h\t{head}\t{article}\t{count}")
        return "\n".join(lines) + ("\n" if lines else "")

    def save(self, path) -> None:
        atomic_write_text(path, self.dump())

    @classmethod
    def load(cls, text: str) -> "LinkTable":
        table = cls()
        for line_no, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ValueError(
                    f"link table line {line_no}: expected 4 fields"
                )
            level, key, article, count_s = parts
            count = int(count_s)
            if level in ("ct", "ch"):
                corpus_id, _, rest = key.partition(KEY_SEP)
                target = (
                    table.corpus_text if level == "ct" else table.corpus_head
                )
                target.setdefault((corpus_id, rest), {})[article] = count
            elif level == "t":
                table.text.setdefault(key, {})[article] = count
            elif level == "h":
                table.head.setdefault(key, {})[article] = count
            else:
                raise ValueError(
                    f"link table line {line_no}: unknown level {level!r}"
                )
        return table


def _bump(level: dict, key, article: str, by: int = 1) -> None:
    level.setdefault(key, {})
    level[key][article] = level[key].get(article, 0) + by


def _count_mention(
    table: LinkTable, corpus_id: str, text: str, head_lemma: str, article: str
) -> None:
    _bump(table.corpus_text, (corpus_id, text), article)
    _bump(table.text, text, article)
    _bump(table.corpus_head, (corpus_id, head_lemma), article)
    _bump(table.head, head_lemma, article)


def named_mentions(
    corpus: Corpus,
) -> Iterator[tuple[Document, Sentence, EntitySpan]]:
    """Spans whose head token is a proper noun, in document order."""
    for doc, sent in corpus.sentences():
        for span in sorted(sent.entities, key=lambda s: (s.start, -s.end)):
            if sent.is_named(span):
                yield doc, sent, span


def build_link_table(corpora: Iterable[Corpus]) -> LinkTable:
    """Count every (mention text, article) and (head lemma, article) pairing
    over the gold identities of the given corpora, per corpus and globally."""
    table = LinkTable()
    for corpus in corpora:
        for doc, sent, span in named_mentions(corpus):
            if span.identity is None:
                continue
            _count_mention(
                table,
                doc.corpus_id,
                sent.text(span.start, span.end),
                sent.token(span.head).lemma,
                span.identity,
            )
    return table


def _best_article(
    counts: Optional[dict[str, int]], exclude: frozenset[str]
) -> Optional[tuple[str, int]]:
    if not counts:
        return None
    alive = [(a, c) for a, c in counts.items() if a not in exclude]
    if not alive:
        return None
    alive.sort(key=lambda ac: (-ac[1], ac[0]))
    return alive[0]


def link_cascade(
    mention_text: str,
    head_lemma: str,
    corpus_id: str,
    table: LinkTable,
    exclude: frozenset[str] = frozenset(),
) -> Optional[LinkSuggestion]:
    """First answering level wins: corpus×text, text, corpus×head, head."""
    levels = (
        (1, table.corpus_text.get((corpus_id, mention_text))),
        (2, table.text.get(mention_text)),
        (3, table.corpus_head.get((corpus_id, head_lemma))),
        (4, table.head.get(head_lemma)),
    )
    for rule_level, counts in levels:
        best = _best_article(counts, exclude)
        if best is not None:
            return LinkSuggestion(best[0], rule_level, best[1])
    return None


def link_exact_baseline(
    mention_text: str, table: LinkTable
) -> Optional[str]:
    best = _best_article(table.text.get(mention_text), frozenset())
    return best[0] if best else None


def link_head_baseline(head_lemma: str, table: LinkTable) -> Optional[str]:
    best = _best_article(table.head.get(head_lemma), frozenset())
    return best[0] if best else None


def evaluate_linking(
    gold_articles: Sequence[str], predictions: Sequence[Optional[str]]
) -> tuple[float, float, float]:
    """(accuracy, coverage, no_err) of predictions against gold articles.

    accuracy = correct/|gold|, coverage = answered/|gold|,
    no_err = (correct + unanswered)/|gold|.
    """
    if not gold_articles:
        raise ValueError("empty gold mention set")
    if len(gold_articles) != len(predictions):
        raise ValueError("gold/prediction length mismatch")
    n = len(gold_articles)
    answered = sum(p is not None for p in predictions)
    correct = sum(p is not None and p == g for g, p in zip(gold_articles, predictions))
    return correct / n, answered / n, (correct + (n - answered)) / n


def apply_decisions(
    table: LinkTable, decisions: Sequence[LinkDecision]
) -> LinkTable:
    """Fold reviewer decisions into a new table snapshot.

    Accept/assign increment all four maps with the decided article; reject
    suppresses the article for that exact mention locator. Replay is
    idempotent: decision ids seen before are skipped.
    """
    new = LinkTable(
        corpus_text={k: dict(v) for k, v in table.corpus_text.items()},
        text={k: dict(v) for k, v in table.text.items()},
        corpus_head={k: dict(v) for k, v in table.corpus_head.items()},
        head={k: dict(v) for k, v in table.head.items()},
        suppressed=dict(table.suppressed),
        applied_ids=table.applied_ids,
    )
    applied = set(new.applied_ids)
    for decision in decisions:
        if decision.decision_id in applied:
            continue
        applied.add(decision.decision_id)
        if decision.action in ("accept", "assign"):
            if not decision.article:
                raise ValueError(
                    f"decision {decision.decision_id}: "
                    f"{decision.action} without article"
                )
            _count_mention(
                new,
                decision.corpus_id,
                decision.mention_text,
                decision.head_lemma,
                decision.article,
            )
        else:  # reject
            if decision.article:
                loc = decision.locator
                new.suppressed[loc] = new.suppressed_for(loc) | {
                    decision.article
                }
    return replace(new, applied_ids=frozenset(applied))


# -- decision log (newline-delimited JSON) ----------------------------------


def read_decisions(path) -> list[LinkDecision]:
    decisions = []
    try:
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    decisions.append(LinkDecision.from_json(line))
    except FileNotFoundError:
        pass
    return decisions


def append_decision(path, decision: LinkDecision) -> None:
    """Durably append one decision (flush + fsync before returning)."""
    import os

    with open(path, "a", encoding="utf-8") as fh:
        fh.write(decision.to_json() + "\n")
        fh.flush()
        os.fsync(fh.fileno())
