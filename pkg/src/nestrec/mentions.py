"""Candidate entity span detection.

Three strategies over a parsed sentence: every noun as a singleton span
(noun), every training-attested form sequence (lookup), and the subtree
projection of every noun head (parse).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from nestrec.corpus import (
    Corpus,
    EntitySpan,
    NestingError,
    Sentence,
    span_head,
    subtree_range,
)

NOUN_TAGS = frozenset({"NOUN", "PROPN"})


@dataclass(frozen=True)
class MentionCandidate:
    start: int
    end: int
    head: int
    source: str  # noun | lookup | parse

    def __post_init__(self) -> None:
        if not (self.start <= self.head <= self.end):
            raise ValueError(
                f"candidate head {self.head} outside [{self.start},{self.end}]"
            )


@dataclass(frozen=True)
class LookupInventory:
    """Token-form sequences attested as entity spans in training data.

    Keys are case-sensitive; the serialized form is one space-joined
    sequence per line.
    """

    sequences: frozenset[tuple[str, ...]]

    def __len__(self) -> int:
        return len(self.sequences)

    def max_length(self) -> int:
        return max((len(s) for s in self.sequences), default=0)

    def dump(self) -> str:
        return "\n".join(
            sorted(" ".join(seq) for seq in self.sequences)
        ) + ("\n" if self.sequences else "")

    @classmethod
    def load(cls, text: str) -> "LookupInventory":
        seqs = {
            tuple(line.split(" "))
            for line in text.splitlines()
            if line.strip()
        }
        return cls(frozenset(seqs))


def _head_tags(include_pron: bool) -> frozenset[str]:
    return NOUN_TAGS | {"PRON"} if include_pron else NOUN_TAGS


def detect_noun(
    sentence: Sentence, include_pron: bool = False
) -> list[MentionCandidate]:
    """One singleton candidate per noun token."""
    tags = _head_tags(include_pron)
    return [
        MentionCandidate(t.index, t.index, t.index, "noun")
        for t in sentence.tokens
        if t.upos in tags
    ]


def build_lookup_inventory(train: Corpus) -> LookupInventory:
    """Collect the form sequences of all gold spans in a training corpus."""
    seqs: set[tuple[str, ...]] = set()
    for _, sent in train.sentences():
        for span in sent.entities:
            seqs.add(sent.forms(span.start, span.end))
    return LookupInventory(frozenset(seqs))


def detect_lookup(
    sentence: Sentence, inventory: LookupInventory
) -> list[MentionCandidate]:
    """Match inventory sequences against the sentence's token forms.

    Nested matches are kept; partially overlapping matches are resolved
    by longer-wins, then leftmost-wins.
    """
    forms = [t.form for t in sentence.tokens]
    n = len(forms)
    max_len = min(inventory.max_length(), n)
    matches: list[tuple[int, int]] = []
    for length in range(1, max_len + 1):
        for start in range(1, n - length + 2):
            if tuple(forms[start - 1 : start - 1 + length]) in inventory.sequences:
                matches.append((start, start + length - 1))
    matches.sort(key=lambda m: (-(m[1] - m[0]), m[0]))
    kept: list[tuple[int, int]] = []
    for start, end in matches:
        crossing = any(
            s <= end and start <= e  # overlap ...
            and not (s <= start and end <= e)  # ... without containment
            and not (start <= s and e <= end)
            for s, e in kept
        )
        if not crossing:
            kept.append((start, end))
    kept.sort(key=lambda m: (m[0], -m[1]))
    return [
        MentionCandidate(s, e, span_head(sentence, s, e), "lookup")
        for s, e in kept
    ]


def detect_parse(
    sentence: Sentence, include_pron: bool = False
) -> list[MentionCandidate]:
    """Subtree projection of every noun head, edge punctuation trimmed.

    On non-projective trees the min-max closure can produce crossing
    candidates; conflicts are resolved by dropping the candidate whose
    head sits deeper in the tree (ties: keep the leftmost start). The
    result always satisfies strict nesting.
    """
    tags = _head_tags(include_pron)
    depth = _token_depths(sentence)
    candidates: list[MentionCandidate] = []
    for tok in sentence.tokens:
        if tok.upos not in tags:
            continue
        start, end = subtree_range(sentence, tok.index)
        while start < tok.index and sentence.token(start).upos == "PUNCT":
            start += 1
        while end > tok.index and sentence.token(end).upos == "PUNCT":
            end -= 1
        candidates.append(MentionCandidate(start, end, tok.index, "parse"))
    resolved = _resolve_crossings(candidates, depth)
    resolved.sort(key=lambda c: (c.start, -c.end))
    return resolved


def _token_depths(sentence: Sentence) -> dict[int, int]:
    """Distance of every token from the root (root children = depth 1)."""
    head = {t.index: t.head for t in sentence.tokens}
    depths: dict[int, int] = {0: 0}
    for tok in sentence.tokens:
        path: list[int] = []
        node = tok.index
        while node not in depths:
            if node in path:  # cycle: anchor the loop at depth 0
                break
            path.append(node)
            node = head[node]
        base = depths.get(node, 0)
        for offset, index in enumerate(reversed(path), start=1):
            depths[index] = base + offset
    depths.pop(0, None)
    return depths


def _resolve_crossings(
    candidates: Sequence[MentionCandidate], depth: dict[int, int]
) -> list[MentionCandidate]:
    alive = list(candidates)
    changed = True
    while changed:
        changed = False
        for i in range(len(alive)):
            for j in range(i + 1, len(alive)):
                a, b = alive[i], alive[j]
                if _crosses(a, b):
                    if depth[a.head] > depth[b.head]:
                        drop = a
                    elif depth[b.head] > depth[a.head]:
                        drop = b
                    else:
                        drop = b if a.start <= b.start else a
                    alive.remove(drop)
                    changed = True
                    break
            if changed:
                break
    for a in alive:
        for b in alive:
            if a is not b and _crosses(a, b):
                raise NestingError(
                    f"unresolved crossing candidates [{a.start},{a.end}] "
                    f"and [{b.start},{b.end}]"
                )
    return alive


def _crosses(a: MentionCandidate, b: MentionCandidate) -> bool:
    if a.end < b.start or b.end < a.start:
        return False
    nested = (a.start <= b.start and b.end <= a.end) or (
        b.start <= a.start and a.end <= b.end
    )
    return not nested


def candidates_to_spans(
    candidates: Iterable[MentionCandidate],
    etype: str = "abstract",
    first_id: int = 1,
) -> list[EntitySpan]:
    """Turn candidates into entity spans with sequential ids (helper for
    writing detector output back into MISC)."""
    return [
        EntitySpan(cand.start, cand.end, etype, cand.head, eid)
        for eid, cand in enumerate(
            sorted(candidates, key=lambda c: (c.start, -c.end)), start=first_id
        )
    ]
