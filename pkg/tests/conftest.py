import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from nestrec.corpus import (
    ENTITY_TYPES,
    Corpus,
    Document,
    EntitySpan,
    Sentence,
    Token,
    span_head,
)


def make_sentence(spec, sent_id="s1", entities=()):
    """Build a sentence from (form, lemma, upos, head, deprel) tuples."""
    tokens = tuple(
        Token(index=i, form=f, lemma=l, upos=u, head=h, deprel=d)
        for i, (f, l, u, h, d) in enumerate(spec, start=1)
    )
    sentence = Sentence(sent_id=sent_id, tokens=tokens)
    if entities:
        sentence = sentence.with_entities(entities)
    return sentence


def with_entity_misc(sentence, values):
    """New sentence whose tokens carry raw MISC Entity values (index->str)."""
    from dataclasses import replace

    tokens = tuple(
        replace(tok, misc=(("Entity", values[tok.index]),))
        if tok.index in values
        else tok
        for tok in sentence.tokens
    )
    return Sentence(sentence.sent_id, tokens)


def make_corpus(sentences, corpus_id="c", doc_id="c:d1", partition="unlabeled"):
    doc = Document(
        doc_id=doc_id, corpus_id=corpus_id, sentences=tuple(sentences)
    )
    return Corpus(
        corpus_id=corpus_id, documents=(doc,), partition=partition
    )


@pytest.fixture
def army_sentence():
    """'for the army of Diocletian' with the chain tree for→army→of→Diocletian
    read as: 'army' is root-governed, 'of' depends on 'army', the name on 'of'.
    """
    return make_sentence(
        [
            ("for", "for", "ADP", 2, "case"),
            ("army", "army", "NOUN", 0, "root"),
            ("of", "of", "ADP", 2, "nmod"),
            ("Diocletian", "Diocletian", "PROPN", 3, "nmod"),
        ],
        entities=[
            EntitySpan(2, 4, "organization", 2, 1),
            EntitySpan(4, 4, "person", 4, 2),
        ],
    )


def random_tree(rng, n):
    """Random single-root head assignment over n tokens (may be
    non-projective)."""
    root = rng.randrange(1, n + 1)
    heads = {}
    attached = [root]
    heads[root] = 0
    order = [i for i in range(1, n + 1) if i != root]
    rng.shuffle(order)
    for node in order:
        heads[node] = rng.choice(attached)
        attached.append(node)
    return heads


def random_parsed_sentence(rng, n, sent_id="r"):
    heads = random_tree(rng, n)
    upos_pool = ["NOUN", "VERB", "DET", "ADP", "PUNCT", "PROPN", "ADJ"]
    tokens = tuple(
        Token(
            index=i,
            form=f"w{i}",
            lemma=f"l{i}",
            upos=rng.choice(upos_pool),
            head=heads[i],
            deprel="dep" if heads[i] else "root",
        )
        for i in range(1, n + 1)
    )
    return Sentence(sent_id=sent_id, tokens=tokens)


def random_nested_spans(rng, sentence, max_spans=6, with_identity=False):
    """A random strictly-nested span set with heads from span_head."""
    n = len(sentence)
    spans = []
    ranges = []

    def fits(start, end):
        return all(
            e < start or end < s  # disjoint
            or (s <= start and end <= e)  # contained
            or (start <= s and e <= end)  # contains
            for s, e in ranges
        )

    for eid in range(1, rng.randint(0, max_spans) + 1):
        for _ in range(10):  # rejection sampling
            start = rng.randint(1, n)
            end = rng.randint(start, min(n, start + rng.randint(0, 4)))
            if fits(start, end):
                break
        else:
            continue
        ranges.append((start, end))
        head = span_head(sentence, start, end)
        etype = rng.choice(ENTITY_TYPES)
        identity = None
        if (
            with_identity
            and sentence.token(head).upos == "PROPN"
            and rng.random() < 0.5
        ):
            identity = rng.choice(["Alpha", "Beta_(x)", "Gamma_Delta"])
        spans.append(EntitySpan(start, end, etype, head, eid, identity))
    return spans


@pytest.fixture
def rng():
    return random.Random(20240817)


ACCEPTANCE_LINES: list[str] = []


def record_acceptance(line: str) -> None:
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
