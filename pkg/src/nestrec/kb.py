"""Head-lemma knowledge base and the three span classification strategies:
majority-class baseline, KB-only lookup, and the CRF+KB hybrid."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from nestrec.corpus import ENTITY_TYPES, Corpus, EntitySpan, Sentence
from nestrec.crf import LABEL_INDEX, LABELS, CRFModel, sentence_features
from nestrec.mentions import MentionCandidate
from nestrec.util import atomic_write_text

MAJORITY_TYPE = "abstract"

_TYPE_SET = frozenset(ENTITY_TYPES)


@dataclass(frozen=True)
class KBEntry:
    lemma: str
    types: frozenset[str]
    majority: str

    def __post_init__(self) -> None:
        if not self.types:
            raise ValueError(f"KB entry {self.lemma!r} has no types")
        if self.majority not in self.types:
            raise ValueError(
                f"KB entry {self.lemma!r}: majority {self.majority!r} "
                f"not among its types"
            )
        unknown = self.types - _TYPE_SET
        if unknown:
            raise ValueError(f"KB entry {self.lemma!r}: unknown types {unknown}")


@dataclass(frozen=True)
class KnowledgeBase:
    entries: dict[str, KBEntry]
    provenance: str = "training-derived"  # or "external"

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, lemma: str) -> Optional[KBEntry]:
        return self.entries.get(lemma)

    def dump(self) -> str:
        lines = []
        for lemma in sorted(self.entries):
            entry = self.entries[lemma]
            types = "|".join(sorted(entry.types))
            lines.append(f"{lemma}\t{types}\t{entry.majority}")
        return "\n".join(lines) + ("\n" if lines else "")

    def save(self, path) -> None:
        atomic_write_text(path, self.dump())

    @classmethod
    def load(cls, text: str, provenance: str = "external") -> "KnowledgeBase":
        entries: dict[str, KBEntry] = {}
        for line_no, line in enumerate(text.splitlines(), start=1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(
                    f"KB line {line_no}: expected 3 tab-separated fields"
                )
            lemma, types_s, majority = parts
            entries[lemma] = KBEntry(
                lemma, frozenset(types_s.split("|")), majority
            )
        return cls(entries, provenance=provenance)


def build_kb_from_training(train: Corpus) -> KnowledgeBase:
    """One entry per distinct gold head lemma: all attested types, with the
    most frequent as majority (ties broken alphabetically)."""
    counts: dict[str, dict[str, int]] = {}
    for _, sent in train.sentences():
        for span in sent.entities:
            lemma = sent.token(span.head).lemma
            per_type = counts.setdefault(lemma, {})
            per_type[span.etype] = per_type.get(span.etype, 0) + 1
    entries = {}
    for lemma, per_type in counts.items():
        majority = max(per_type.items(), key=lambda kv: (kv[1], _rev(kv[0])))[0]
        entries[lemma] = KBEntry(lemma, frozenset(per_type), majority)
    return KnowledgeBase(entries, provenance="training-derived")


def _rev(name: str) -> tuple[int, ...]:
    # higher key wins in max(); invert character order so that the
    # alphabetically first name wins frequency ties
    return tuple(-ord(c) for c in name)


@dataclass(frozen=True)
class TypedSpan:
    """A classified candidate: the span plus its assigned type."""

    start: int
    end: int
    head: int
    etype: str

    def to_entity(self, entity_id: int) -> EntitySpan:
        return EntitySpan(self.start, self.end, self.etype, self.head, entity_id)


def classify_majority(
    sentence: Sentence, candidates: Sequence[MentionCandidate]
) -> list[TypedSpan]:
    """Label every candidate with the corpus-majority class."""
    return [
        TypedSpan(c.start, c.end, c.head, MAJORITY_TYPE) for c in candidates
    ]


def classify_kb_only(
    sentence: Sentence,
    candidates: Sequence[MentionCandidate],
    kb: KnowledgeBase,
) -> list[TypedSpan]:
    """KB majority type by head lemma; out-of-vocabulary heads fall back to
    the majority class. No candidate is discarded."""
    out = []
    for cand in candidates:
        entry = kb.get(sentence.token(cand.head).lemma)
        etype = entry.majority if entry is not None else MAJORITY_TYPE
        out.append(TypedSpan(cand.start, cand.end, cand.head, etype))
    return out


def classify_crf_only(
    sentence: Sentence,
    candidates: Sequence[MentionCandidate],
    model: CRFModel,
    o_threshold: float = 0.95,
) -> list[TypedSpan]:
    """Pure CRF classification: argmax non-O marginal at the candidate head,
    with the same over-threshold-O discard rule as the hybrid."""
    empty = KnowledgeBase({}, provenance="external")
    return classify_hybrid(
        sentence, candidates, empty, model, o_threshold=o_threshold
    )


def classify_hybrid(
    sentence: Sentence,
    candidates: Sequence[MentionCandidate],
    kb: KnowledgeBase,
    model: CRFModel,
    o_threshold: float = 0.95,
    discard_first: bool = True,
) -> list[TypedSpan]:
    """CRF+KB hybrid per candidate head:

    1. the candidate is discarded when the CRF's marginal probability of O
       exceeds ``o_threshold``;
    2. a head lemma with exactly one KB type takes that type;
    3. with several KB types, the one with the highest CRF marginal wins;
    4. out-of-vocabulary heads take the argmax non-O CRF marginal.

    ``discard_first`` applies rule 1 before consulting the KB (default);
    when off, KB-known heads are never discarded.
    """
    if not candidates:
        return []
    probs = model.marginal_scores(model.emissions(sentence_features(sentence)))
    out = []
    for cand in candidates:
        p = probs[cand.head - 1]
        entry = kb.get(sentence.token(cand.head).lemma)
        if discard_first and p[0] > o_threshold:
            continue
        if entry is not None:
            if len(entry.types) == 1:
                etype = next(iter(entry.types))
            else:
                etype = max(
                    sorted(entry.types), key=lambda t: p[LABEL_INDEX[t]]
                )
        else:
            if not discard_first and p[0] > o_threshold:
                continue
            etype = LABELS[1 + int(np.argmax(p[1:]))]
        out.append(TypedSpan(cand.start, cand.end, cand.head, etype))
    return out
