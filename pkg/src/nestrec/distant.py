"""Corpus-scale entity aggregations: term networks around a head lemma,
named/type/head TreeMap hierarchies, and entity-type proportion tables."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

from nestrec.corpus import ENTITY_TYPES, Corpus


@dataclass(frozen=True)
class TermNetwork:
    focus: str
    nodes: dict[str, int]  # word form -> frequency
    edges: dict[tuple[str, str], int]  # adjacent-token bigram -> frequency

    def to_json(self) -> str:
        return json.dumps(
            {
                "focus": self.focus,
                "nodes": [
                    {"word": w, "count": c}
                    for w, c in sorted(self.nodes.items(), key=lambda x: (-x[1], x[0]))
                ],
                "edges": [
                    {"from": a, "to": b, "count": c}
                    for (a, b), c in sorted(
                        self.edges.items(), key=lambda x: (-x[1], x[0])
                    )
                ],
            },
            ensure_ascii=False,
            indent=2,
        )


@dataclass
class TreeMapNode:
    label: str
    count: int
    children: list["TreeMapNode"] = field(default_factory=list)

    def child(self, label: str) -> "TreeMapNode":
        for node in self.children:
            if node.label == label:
                return node
        node = TreeMapNode(label, 0)
        self.children.append(node)
        return node

    def to_dict(self) -> dict:
        out: dict = {"label": self.label, "count": self.count}
        if self.children:
            out["children"] = [c.to_dict() for c in self.children]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2)


def term_network(corpus: Corpus, lemma: str) -> TermNetwork:
    """Word and adjacent-bigram frequencies inside all entity spans headed
    by the given lemma."""
    nodes: dict[str, int] = {}
    edges: dict[tuple[str, str], int] = {}
    for _, sent in corpus.sentences():
        for span in sent.entities:
            if sent.token(span.head).lemma != lemma:
                continue
            forms = sent.forms(span.start, span.end)
            for form in forms:
                nodes[form] = nodes.get(form, 0) + 1
            for a, b in zip(forms, forms[1:]):
                edges[(a, b)] = edges.get((a, b), 0) + 1
    return TermNetwork(focus=lemma, nodes=nodes, edges=edges)


def treemap(corpus: Corpus) -> TreeMapNode:
    """Three-level hierarchy: named/non-named, then entity type, then head
    lemma, with leaf counts = mention counts."""
    root = TreeMapNode("entities", 0)
    for _, sent in corpus.sentences():
        for span in sent.entities:
            group = "named" if sent.is_named(span) else "non-named"
            lemma = sent.token(span.head).lemma
            leaf = root.child(group).child(span.etype).child(lemma)
            leaf.count += 1
    for group in root.children:
        for etype in group.children:
            etype.children.sort(key=lambda n: (-n.count, n.label))
            etype.count = sum(n.count for n in etype.children)
        group.children.sort(key=lambda n: (-n.count, n.label))
        group.count = sum(n.count for n in group.children)
    root.children.sort(key=lambda n: (-n.count, n.label))
    root.count = sum(n.count for n in root.children)
    return root


@dataclass(frozen=True)
class TypeProportions:
    group: str  # document id or corpus id
    total: int
    percentages: dict[str, float]  # entity type -> % of mentions
    person_abstract_ratio: Optional[float]  # None when abstract count is 0

    def ratio_str(self) -> str:
        if self.person_abstract_ratio is None:
            return "n/a"
        return f"{self.person_abstract_ratio:.2f}"


def _proportions(group: str, counts: dict[str, int]) -> TypeProportions:
    total = sum(counts.values())
    percentages = {
        etype: (100.0 * counts.get(etype, 0) / total if total else 0.0)
        for etype in ENTITY_TYPES
        if total and counts.get(etype, 0)
    }
    abstract = counts.get("abstract", 0)
    person = counts.get("person", 0)
    ratio = person / abstract if abstract else None
    return TypeProportions(group, total, percentages, ratio)


def type_proportions(
    corpus: Corpus, group_by: str = "corpus"
) -> list[TypeProportions]:
    """Entity-type percentages over all mentions, plus the person/abstract
    ratio, grouped per document or over the whole corpus."""
    if group_by not in ("document", "corpus"):
        raise ValueError(f"unknown grouping {group_by!r}")
    groups: dict[str, dict[str, int]] = {}
    if group_by == "corpus":
        groups[corpus.corpus_id] = {}
    for doc in corpus.documents:
        key = doc.doc_id if group_by == "document" else corpus.corpus_id
        counts = groups.setdefault(key, {})
        for sent in doc.sentences:
            for span in sent.entities:
                counts[span.etype] = counts.get(span.etype, 0) + 1
    return [_proportions(group, groups[group]) for group in groups]


def proportions_tsv(rows: list[TypeProportions]) -> str:
    header = ["group", "total"] + list(ENTITY_TYPES) + ["person_abstract_ratio"]
    lines = ["\t".join(header)]
    for row in rows:
        cells = [row.group, str(row.total)]
        cells += [f"{row.percentages.get(t, 0.0):.2f}" for t in ENTITY_TYPES]
        cells.append(row.ratio_str())
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"
