"""Dependency-annotated corpora with nested entity annotations.

The on-disk format is CoNLL-U (10 tab-separated columns, blank-line
sentence separation). Entity annotations live in the MISC column under
the key ``Entity`` as a concatenation of bracket markers:

    (<type>-<id>            open a span of the given type
    (<type>-<id>-<identity> open a span carrying a link identity
    <id>)                   close the span opened with that id
    (<type>-<id>)           single-token span (optionally with identity)

Types are the ten lowercase entity type names; ids are positive decimal
integers unique within a document; identities are article identifiers
with ``_`` in place of spaces. Parsing preserves token columns and
comment lines verbatim so that an unmodified corpus serializes back
byte-identically.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from typing import Iterator, Optional, Sequence

ENTITY_TYPES: tuple[str, ...] = (
    "abstract",
    "animal",
    "event",
    "object",
    "organization",
    "person",
    "place",
    "plant",
    "substance",
    "time",
)

_ENTITY_TYPE_SET = frozenset(ENTITY_TYPES)

PARTITIONS = ("train", "dev", "test", "unlabeled")


class CorpusError(Exception):
    """Base class for corpus-level failures."""


class ParseError(CorpusError):
    """Malformed CoNLL-U input; message includes the 1-based line number."""


class ValidationError(CorpusError):
    """Structural invariant broken (head range, cyclic heads, ...)."""


class EntityDecodeError(CorpusError):
    """Bad entity bracket syntax, unknown type, or unmatched bracket."""


class NestingError(CorpusError):
    """Two entity spans partially overlap (strict nesting violated)."""


@dataclass(frozen=True)
class Token:
    """One syntactic word. ``head`` is 0 for the root; ``misc`` keeps the
    MISC column as ordered (key, value) pairs, value ``None`` for bare flags.

    ``xpos``, ``feats`` and ``deps`` are carried as opaque strings so that
    serialization can reproduce all ten columns. ``mwt_lines`` holds raw
    multiword-token range lines (``i-j`` ids) preceding this token.
    """

    index: int
    form: str
    lemma: str
    upos: str
    head: int
    deprel: str
    misc: tuple[tuple[str, Optional[str]], ...] = ()
    xpos: str = "_"
    feats: str = "_"
    deps: str = "_"
    mwt_lines: tuple[str, ...] = ()

    def misc_value(self, key: str) -> Optional[str]:
        for k, v in self.misc:
            if k == key:
                return v
        return None


@dataclass(frozen=True)
class EntitySpan:
    """A typed token range [start, end] (inclusive, 1-based) with a
    designated head token and an optional link identity."""

    start: int
    end: int
    etype: str
    head: int
    entity_id: int
    identity: Optional[str] = None

    def __post_init__(self) -> None:
        # head range and id uniqueness are checked by validate_corpus so
        # that broken annotations surface as violations, not constructor
        # failures; the type enum is closed and always enforced
        if self.etype not in _ENTITY_TYPE_SET:
            raise EntityDecodeError(f"unknown entity type {self.etype!r}")

    @property
    def length(self) -> int:
        return self.end - self.start + 1

    def contains(self, other: "EntitySpan") -> bool:
        return self.start <= other.start and other.end <= self.end

    def crosses(self, other: "EntitySpan") -> bool:
        """True when the two ranges partially overlap (neither nests)."""
        if self.end < other.start or other.end < self.start:
            return False
        return not (self.contains(other) or other.contains(self))


@dataclass(frozen=True)
class Sentence:
    """An ordered token list with a dependency tree and nested entities.

    ``comments`` preserves all raw comment lines (including the
    ``# sent_id = ...`` line, if any) for byte-identical round-trips.
    """

    sent_id: str
    tokens: tuple[Token, ...]
    entities: tuple[EntitySpan, ...] = ()
    comments: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.tokens)

    def token(self, index: int) -> Token:
        """Token by 1-based index."""
        return self.tokens[index - 1]

    def is_named(self, span: EntitySpan) -> bool:
        """A span is named iff its head token is a proper noun."""
        return self.token(span.head).upos == "PROPN"

    def forms(self, start: int, end: int) -> tuple[str, ...]:
        return tuple(t.form for t in self.tokens[start - 1 : end])

    def text(self, start: int, end: int) -> str:
        return " ".join(self.forms(start, end))

    def with_entities(self, spans: Sequence[EntitySpan]) -> "Sentence":
        """Replace the entity annotation, re-encoding the MISC Entity keys."""
        spans = tuple(sorted(spans, key=lambda s: (s.start, -s.end, s.entity_id)))
        values = encode_entities(spans)
        new_tokens = []
        for tok in self.tokens:
            misc = [(k, v) for k, v in tok.misc if k != "Entity"]
            if tok.index in values:
                misc.append(("Entity", values[tok.index]))
            new_tokens.append(replace(tok, misc=tuple(misc)))
        return replace(self, tokens=tuple(new_tokens), entities=spans)


@dataclass(frozen=True)
class Document:
    doc_id: str
    corpus_id: str
    sentences: tuple[Sentence, ...]
    # True when the parse created this document without a ``# newdoc`` line;
    # serialization then refrains from synthesizing one
    implicit: bool = False


@dataclass(frozen=True)
class Corpus:
    corpus_id: str
    documents: tuple[Document, ...]
    partition: str = "unlabeled"

    def sentences(self) -> Iterator[tuple[Document, Sentence]]:
        for doc in self.documents:
            for sent in doc.sentences:
                yield doc, sent

    def n_tokens(self) -> int:
        return sum(len(s) for _, s in self.sentences())

    def map_sentences(self, fn) -> "Corpus":
        """Rebuild the corpus with ``fn(doc, sentence) -> sentence`` applied."""
        docs = []
        for doc in self.documents:
            sents = tuple(fn(doc, s) for s in doc.sentences)
            docs.append(replace(doc, sentences=sents))
        return replace(self, documents=tuple(docs))


# --- entity bracket encoding ---------------------------------------------

_MARKER_BODY = re.compile(r"([a-z]+)-([0-9]+)(?:-(.+))?$", re.DOTALL)


def _escape_identity(identity: str) -> str:
    # brackets would collide with the marker grammar (real article titles
    # carry parenthesized disambiguators), so percent-encode them; spaces
    # serialize as underscores, the canonical article-title form
    return (
        identity.replace("%", "%25")
        .replace("(", "%28")
        .replace(")", "%29")
        .replace(" ", "_")
    )


def _unescape_identity(identity: str) -> str:
    return (
        identity.replace("%28", "(").replace("%29", ")").replace("%25", "%")
    )


def _iter_markers(value: str) -> Iterator[tuple[str, ...]]:
    """Tokenize one MISC Entity value into markers.

    Yields ("open", type, id, identity, single) for bracket openers and
    ("close", id) for closers.
    """
    i = 0
    n = len(value)
    while i < n:
        ch = value[i]
        if ch == "(":
            j = i + 1
            while j < n and value[j] not in "()":
                j += 1
            body = value[i + 1 : j]
            single = j < n and value[j] == ")"
            m = _MARKER_BODY.match(body)
            if not m:
                raise EntityDecodeError(f"malformed entity marker {body!r} in {value!r}")
            etype, eid, identity = m.group(1), m.group(2), m.group(3)
            if etype not in _ENTITY_TYPE_SET:
                raise EntityDecodeError(f"unknown entity type {etype!r} in {value!r}")
            if identity is not None:
                identity = _unescape_identity(identity)
            yield ("open", etype, eid, identity, single)
            i = j + 1 if single else j
        elif ch.isdigit():
            j = i
            while j < n and value[j].isdigit():
                j += 1
            if j >= n or value[j] != ")":
                raise EntityDecodeError(f"expected ')' after id in {value!r}")
            yield ("close", value[i:j])
            i = j + 1
        else:
            raise EntityDecodeError(f"unexpected character {ch!r} in {value!r}")


def decode_entities(sentence: Sentence) -> tuple[EntitySpan, ...]:
    """Decode the per-token MISC ``Entity`` values of a sentence into spans.

    Heads are assigned with :func:`span_head`; strict nesting is validated.
    Raises :class:`EntityDecodeError` on unmatched brackets and
    :class:`NestingError` on crossing spans.
    """
    open_spans: dict[int, tuple[int, str, Optional[str]]] = {}
    spans: list[EntitySpan] = []
    for tok in sentence.tokens:
        value = tok.misc_value("Entity")
        if value is None:
            continue
        for marker in _iter_markers(value):
            if marker[0] == "open":
                _, etype, eid_s, identity, single = marker
                eid = int(eid_s)
                if eid in open_spans:
                    raise EntityDecodeError(
                        f"entity id {eid} opened twice in sentence {sentence.sent_id!r}"
                    )
                if single:
                    head = span_head(sentence, tok.index, tok.index)
                    spans.append(
                        EntitySpan(tok.index, tok.index, etype, head, eid, identity)
                    )
                else:
                    open_spans[eid] = (tok.index, etype, identity)
            else:
                eid = int(marker[1])
                if eid not in open_spans:
                    raise EntityDecodeError(
                        f"close marker {eid}) without open in sentence "
                        f"{sentence.sent_id!r}"
                    )
                start, etype, identity = open_spans.pop(eid)
                head = span_head(sentence, start, tok.index)
                spans.append(
                    EntitySpan(start, tok.index, etype, head, eid, identity)
                )
    if open_spans:
        missing = ", ".join(str(i) for i in sorted(open_spans))
        raise EntityDecodeError(
            f"unmatched open bracket(s) for id(s) {missing} in sentence "
            f"{sentence.sent_id!r}"
        )
    spans.sort(key=lambda s: (s.start, -s.end, s.entity_id))
    _check_nesting(spans, sentence.sent_id)
    return tuple(spans)


def encode_entities(spans: Sequence[EntitySpan]) -> dict[int, str]:
    """Encode spans into per-token MISC Entity values.

    Open markers at a token are ordered outermost-first, close markers
    innermost-first. Inverse of :func:`decode_entities` for valid input.
    """
    _check_nesting(sorted(spans, key=lambda s: (s.start, -s.end)), "<encode>")
    opens: dict[int, list[EntitySpan]] = {}
    closes: dict[int, list[EntitySpan]] = {}
    for span in spans:
        opens.setdefault(span.start, []).append(span)
        if span.end != span.start:
            closes.setdefault(span.end, []).append(span)
    values: dict[int, str] = {}
    for index in sorted(set(opens) | set(closes)):
        parts: list[str] = []
        for span in sorted(opens.get(index, []), key=lambda s: (-s.end, s.entity_id)):
            body = f"({span.etype}-{span.entity_id}"
            if span.identity is not None:
                body += f"-{_escape_identity(span.identity)}"
            if span.end == span.start:
                body += ")"
            parts.append(body)
        for span in sorted(
            closes.get(index, []), key=lambda s: (-s.start, -s.entity_id)
        ):
            parts.append(f"{span.entity_id})")
        values[index] = "".join(parts)
    return values


def _crossing_pairs(
    spans: Sequence[EntitySpan],
) -> Iterator[tuple[EntitySpan, EntitySpan]]:
    """Yield partially-overlapping pairs from spans sorted by (start, -end).

    Maintains the stack of currently-open spans (a nested chain, innermost
    on top); a crossing exists iff a new span extends past the innermost
    open span that it overlaps.
    """
    active: list[EntitySpan] = []
    for span in spans:
        while active and active[-1].end < span.start:
            active.pop()
        if active and span.end > active[-1].end:
            yield active[-1], span
        active.append(span)


def _check_nesting(spans: Sequence[EntitySpan], where: str) -> None:
    for outer, inner in _crossing_pairs(spans):
        raise NestingError(
            f"crossing spans [{outer.start},{outer.end}] and "
            f"[{inner.start},{inner.end}] in {where}"
        )


def span_head(sentence: Sentence, start: int, end: int) -> int:
    """Head token of a range: the leftmost non-punctuation token whose
    dependency head lies outside the range (or is the root); falling back
    to the leftmost non-punctuation token, then the leftmost token."""
    if start > end or start < 1 or end > len(sentence):
        raise ValidationError(f"empty or out-of-range span [{start},{end}]")
    non_punct = [
        t.index for t in sentence.tokens[start - 1 : end] if t.upos != "PUNCT"
    ]
    for index in non_punct:
        head = sentence.token(index).head
        if head == 0 or head < start or head > end:
            return index
    if non_punct:
        return non_punct[0]
    return start


# --- CoNLL-U parsing and serialization ------------------------------------

_SENT_ID_RE = re.compile(r"^#\s*sent_id\s*=\s*(.*)$")
_NEWDOC_RE = re.compile(r"^#\s*newdoc(?:\s+id\s*=\s*(.*))?$")
_MWT_ID_RE = re.compile(r"^[0-9]+-[0-9]+$")
_EMPTY_ID_RE = re.compile(r"^[0-9]+\.[0-9]+$")


def _parse_misc(raw: str) -> tuple[tuple[str, Optional[str]], ...]:
    if raw == "_":
        return ()
    pairs: list[tuple[str, Optional[str]]] = []
    for item in raw.split("|"):
        if "=" in item:
            k, v = item.split("=", 1)
            pairs.append((k, v))
        else:
            pairs.append((item, None))
    return tuple(pairs)


def _format_misc(misc: tuple[tuple[str, Optional[str]], ...]) -> str:
    if not misc:
        return "_"
    return "|".join(k if v is None else f"{k}={v}" for k, v in misc)


def _build_sentence(
    sent_id: str,
    comments: list[str],
    rows: list[tuple[int, list[str], tuple[str, ...]]],
) -> Sentence:
    tokens: list[Token] = []
    for position, (line_no, cols, mwt) in enumerate(rows, start=1):
        index = int(cols[0])
        if index != position:
            raise ValidationError(
                f"line {line_no}: token id {index} breaks 1..n numbering "
                f"(expected {position})"
            )
        try:
            head = int(cols[6])
        except ValueError:
            raise ParseError(
                f"line {line_no}: HEAD column must be an integer, got {cols[6]!r}"
            ) from None
        tokens.append(
            Token(
                index=index,
                form=cols[1],
                lemma=cols[2],
                upos=cols[3],
                xpos=cols[4],
                feats=cols[5],
                head=head,
                deprel=cols[7],
                deps=cols[8],
                misc=_parse_misc(cols[9]),
                mwt_lines=mwt,
            )
        )
    n = len(tokens)
    for tok in tokens:
        if tok.head < 0 or tok.head > n:
            raise ValidationError(
                f"sentence {sent_id!r}: head {tok.head} of token {tok.index} "
                f"out of range 1..{n}"
            )
        if tok.head == tok.index:
            raise ValidationError(
                f"sentence {sent_id!r}: token {tok.index} is its own head"
            )
    _check_acyclic(sent_id, tokens)
    sentence = Sentence(
        sent_id=sent_id, tokens=tuple(tokens), comments=tuple(comments)
    )
    return replace(sentence, entities=decode_entities(sentence))


def _check_acyclic(sent_id: str, tokens: list[Token]) -> None:
    heads = {t.index: t.head for t in tokens}
    state: dict[int, int] = {}  # 0 visiting, 1 done
    for start in heads:
        path = []
        node = start
        while node != 0 and state.get(node) != 1:
            if state.get(node) == 0:
                raise ValidationError(
                    f"sentence {sent_id!r}: cyclic heads involving token {node}"
                )
            state[node] = 0
            path.append(node)
            node = heads[node]
        for seen in path:
            state[seen] = 1


def _derive_corpus_id(doc_id: str, fallback: str) -> str:
    return doc_id.split(":", 1)[0] if ":" in doc_id else fallback


def parse_conllu(
    text: str, corpus_id: str = "corpus", partition: str = "unlabeled"
) -> Corpus:
    """Parse CoNLL-U text into a :class:`Corpus`.

    ``# sent_id =`` and ``# newdoc id =`` comments are honored; all comment
    lines are preserved verbatim. Multiword-token range lines are attached
    as opaque lines to the following token. Documents whose id contains a
    ``:`` take the part before it as their corpus id.
    """
    if partition not in PARTITIONS:
        raise ValidationError(f"unknown partition {partition!r}")
    documents: list[Document] = []
    doc_sentences: list[Sentence] = []
    doc_id = ""
    doc_explicit = False
    sent_count = 0
    comments: list[str] = []
    rows: list[tuple[int, list[str], tuple[str, ...]]] = []
    pending_mwt: list[str] = []
    sent_id = ""
    seen_any = False

    def flush_sentence() -> None:
        nonlocal comments, rows, pending_mwt, sent_id, sent_count
        if not rows and not comments:
            return
        if pending_mwt:
            raise ParseError(
                "multiword token line not followed by a word line: "
                + pending_mwt[0]
            )
        if not rows:
            raise ParseError(
                f"comment block without token lines near {comments[0]!r}"
            )
        sent_count += 1
        this_id = sent_id or f"s{sent_count}"
        doc_sentences.append(_build_sentence(this_id, comments, rows))
        comments, rows, pending_mwt, sent_id = [], [], [], ""

    def flush_document() -> None:
        nonlocal doc_sentences, doc_id
        if not doc_sentences:
            return
        did = doc_id or corpus_id
        documents.append(
            Document(
                doc_id=did,
                corpus_id=_derive_corpus_id(did, corpus_id),
                sentences=tuple(doc_sentences),
                implicit=not doc_explicit,
            )
        )
        doc_sentences = []

    for line_no, line in enumerate(text.split("\n"), start=1):
        if line == "":
            flush_sentence()
            continue
        if line.startswith("#"):
            seen_any = True
            m = _SENT_ID_RE.match(line)
            if m:
                sent_id = m.group(1).strip()
            m = _NEWDOC_RE.match(line)
            if m:
                if rows:
                    raise ParseError(f"line {line_no}: newdoc inside a sentence")
                flush_document()
                doc_id = (m.group(1) or "").strip()
                doc_explicit = True
            comments.append(line)
            continue
        seen_any = True
        cols = line.split("\t")
        if len(cols) != 10:
            raise ParseError(
                f"line {line_no}: expected 10 tab-separated columns, got {len(cols)}"
            )
        if _MWT_ID_RE.match(cols[0]) or _EMPTY_ID_RE.match(cols[0]):
            pending_mwt.append(line)
            continue
        if not cols[0].isdigit():
            raise ParseError(f"line {line_no}: bad token id {cols[0]!r}")
        rows.append((line_no, cols, tuple(pending_mwt)))
        pending_mwt = []
    flush_sentence()
    flush_document()
    if not seen_any:
        raise ParseError("empty input")
    return Corpus(
        corpus_id=corpus_id, documents=tuple(documents), partition=partition
    )


def _token_line(tok: Token) -> str:
    return "\t".join(
        (
            str(tok.index),
            tok.form,
            tok.lemma,
            tok.upos,
            tok.xpos,
            tok.feats,
            str(tok.head),
            tok.deprel,
            tok.deps,
            _format_misc(tok.misc),
        )
    )


def serialize_sentence(sentence: Sentence) -> str:
    lines: list[str] = list(sentence.comments)
    if not any(_SENT_ID_RE.match(c) for c in sentence.comments):
        lines.insert(0, f"# sent_id = {sentence.sent_id}")
    for tok in sentence.tokens:
        lines.extend(tok.mwt_lines)
        lines.append(_token_line(tok))
    return "\n".join(lines)


def serialize_corpus(corpus: Corpus) -> str:
    """Serialize back to CoNLL-U. Inverse of :func:`parse_conllu` on
    token columns and comment lines; document boundaries that were not
    parsed from comments get a ``# newdoc id`` line synthesized."""
    blocks = []
    for doc in corpus.documents:
        for position, sentence in enumerate(doc.sentences):
            block = serialize_sentence(sentence)
            if (
                position == 0
                and not doc.implicit
                and not any(_NEWDOC_RE.match(c) for c in sentence.comments)
            ):
                block = f"# newdoc id = {doc.doc_id}\n" + block
            blocks.append(block)
    # every sentence block is terminated by a blank line, the last included
    return "\n\n".join(blocks) + "\n\n"


# --- validation ------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    doc_id: str
    sent_id: str
    rule: str
    message: str

    def __str__(self) -> str:
        return f"{self.doc_id}/{self.sent_id}: [{self.rule}] {self.message}"


def validate_corpus(corpus: Corpus) -> list[Violation]:
    """Check every structural invariant; violations are data, not failures."""
    violations: list[Violation] = []

    def bad(doc: Document, sent_id: str, rule: str, message: str) -> None:
        violations.append(Violation(doc.doc_id, sent_id, rule, message))

    seen_docs: set[str] = set()
    for doc in corpus.documents:
        if doc.doc_id in seen_docs:
            bad(doc, "", "unique-doc-id", f"duplicate doc_id {doc.doc_id!r}")
        seen_docs.add(doc.doc_id)
        if not doc.doc_id:
            bad(doc, "", "doc-id", "empty doc_id")
        seen_sents: set[str] = set()
        seen_entity_ids: set[int] = set()
        for sent in doc.sentences:
            if sent.sent_id in seen_sents:
                bad(doc, sent.sent_id, "unique-sent-id", "duplicate sent_id")
            seen_sents.add(sent.sent_id)
            n = len(sent)
            for position, tok in enumerate(sent.tokens, start=1):
                if tok.index != position:
                    bad(doc, sent.sent_id, "token-numbering",
                        f"token {tok.index} at position {position}")
                    break
            roots = [t.index for t in sent.tokens if t.head == 0]
            if len(roots) != 1:
                bad(doc, sent.sent_id, "single-root",
                    f"{len(roots)} root tokens")
            heads_ok = True
            for tok in sent.tokens:
                if tok.head < 0 or tok.head > n or tok.head == tok.index:
                    bad(doc, sent.sent_id, "head-range",
                        f"token {tok.index} head {tok.head}")
                    heads_ok = False
            if heads_ok:
                try:
                    _check_acyclic(sent.sent_id, list(sent.tokens))
                except ValidationError as exc:
                    bad(doc, sent.sent_id, "acyclic", str(exc))
            for span in sent.entities:
                in_bounds = 1 <= span.start and span.end <= n
                if not in_bounds:
                    bad(doc, sent.sent_id, "span-bounds",
                        f"span [{span.start},{span.end}] outside 1..{n}")
                if not (span.start <= span.head <= span.end):
                    bad(doc, sent.sent_id, "head-in-span",
                        f"head {span.head} outside [{span.start},{span.end}]")
                if span.entity_id in seen_entity_ids:
                    bad(doc, sent.sent_id, "unique-entity-id",
                        f"duplicate entity_id {span.entity_id}")
                seen_entity_ids.add(span.entity_id)
                head_in_bounds = in_bounds and span.start <= span.head <= span.end
                if (span.identity is not None and head_in_bounds
                        and not sent.is_named(span)):
                    bad(doc, sent.sent_id, "identity-on-named",
                        f"span [{span.start},{span.end}] has identity but "
                        f"its head is not PROPN")
            ordered = sorted(sent.entities, key=lambda s: (s.start, -s.end))
            for outer, inner in _crossing_pairs(ordered):
                bad(doc, sent.sent_id, "strict-nesting",
                    f"spans [{outer.start},{outer.end}] and "
                    f"[{inner.start},{inner.end}] cross")
    return violations


def descendant_counts(sentence: Sentence) -> dict[int, int]:
    """Subtree size (including self) for every token."""
    children: dict[int, list[int]] = {t.index: [] for t in sentence.tokens}
    for tok in sentence.tokens:
        if tok.head != 0:
            children[tok.head].append(tok.index)
    counts = {t.index: 1 for t in sentence.tokens}
    # accumulate bottom-up along an iterative post-order
    for tok in sentence.tokens:
        if tok.head != 0:
            continue
        order: list[int] = []
        stack = [tok.index]
        while stack:
            node = stack.pop()
            order.append(node)
            stack.extend(children[node])
        for node in reversed(order):
            counts[node] += sum(counts[c] for c in children[node])
    return counts


def subtree_range(sentence: Sentence, index: int) -> tuple[int, int]:
    """(min, max) token index over the subtree rooted at ``index``."""
    children: dict[int, list[int]] = {t.index: [] for t in sentence.tokens}
    for tok in sentence.tokens:
        if tok.head != 0:
            children[tok.head].append(tok.index)
    lo = hi = index
    stack = [index]
    while stack:
        node = stack.pop()
        lo = min(lo, node)
        hi = max(hi, node)
        stack.extend(children[node])
    return lo, hi
