"""Nested, typed entity recognition and semi-automatic entity linking
over dependency-parsed corpora."""

from nestrec.corpus import (
    ENTITY_TYPES,
    Corpus,
    CorpusError,
    Document,
    EntityDecodeError,
    EntitySpan,
    NestingError,
    ParseError,
    Sentence,
    Token,
    ValidationError,
    decode_entities,
    encode_entities,
    parse_conllu,
    serialize_corpus,
    span_head,
    validate_corpus,
)

__version__ = "0.1.0"

__all__ = [
    "ENTITY_TYPES",
    "Corpus",
    "CorpusError",
    "Document",
    "EntityDecodeError",
    "EntitySpan",
    "NestingError",
    "ParseError",
    "Sentence",
    "Token",
    "ValidationError",
    "decode_entities",
    "encode_entities",
    "parse_conllu",
    "serialize_corpus",
    "span_head",
    "validate_corpus",
    "__version__",
]
