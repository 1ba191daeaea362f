"""HTTP/JSON review service for link decisions.

Event-sourced: the only persistent state is the append-only decision log
(one JSON object per line). On startup the log is replayed against the base
link table, so a restart (or crash) reproduces the exact server state.
Reads are served from an immutable table snapshot; a single lock serializes
decision application and the snapshot swap, and every decision is durably
appended before the response goes out.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional
from urllib.parse import parse_qs, urlparse

from nestrec.corpus import Corpus, serialize_corpus
from nestrec.linker import (
    LinkDecision,
    LinkSuggestion,
    LinkTable,
    append_decision,
    apply_decisions,
    link_cascade,
    named_mentions,
    read_decisions,
)

CONTEXT_WINDOW = 10  # tokens on each side of the mention


@dataclass
class ReviewItem:
    item_id: str
    doc_id: str
    sent_id: str
    start: int
    end: int
    entity_id: int
    mention_text: str
    head_lemma: str
    corpus_id: str
    left_context: str
    right_context: str
    status: str = "pending"  # pending | resolved
    decision_id: Optional[str] = None
    accepted_article: Optional[str] = None

    @property
    def locator(self):
        return (self.doc_id, self.sent_id, self.start, self.end)

    def to_dict(self, suggestion: Optional[LinkSuggestion]) -> dict:
        return {
            "item_id": self.item_id,
            "doc_id": self.doc_id,
            "sent_id": self.sent_id,
            "start": self.start,
            "end": self.end,
            "mention_text": self.mention_text,
            "head_lemma": self.head_lemma,
            "corpus_id": self.corpus_id,
            "left_context": self.left_context,
            "right_context": self.right_context,
            "status": self.status,
            "decision_id": self.decision_id,
            "accepted_article": self.accepted_article,
            "suggestion": None
            if suggestion is None
            else {
                "article": suggestion.article,
                "rule_level": suggestion.rule_level,
                "support_count": suggestion.support_count,
            },
        }


class ApiError(Exception):
    def __init__(self, status: int, message: str) -> None:
        super().__init__(message)
        self.status = status
        self.message = message


class ReviewService:
    """Queue of named mentions awaiting link review."""

    def __init__(
        self, corpus: Corpus, base_table: LinkTable, decisions_path
    ) -> None:
        self.corpus = corpus
        self.base_table = base_table
        self.decisions_path = decisions_path
        self.lock = threading.Lock()
        self.items: dict[str, ReviewItem] = {}
        self._order: list[str] = []
        self._build_items()
        self.table = base_table
        self._replay()

    def _build_items(self) -> None:
        for doc, sent, span in named_mentions(self.corpus):
            left = sent.tokens[max(0, span.start - 1 - CONTEXT_WINDOW) : span.start - 1]
            right = sent.tokens[span.end : span.end + CONTEXT_WINDOW]
            item = ReviewItem(
                item_id=f"{doc.doc_id}/{sent.sent_id}/{span.entity_id}",
                doc_id=doc.doc_id,
                sent_id=sent.sent_id,
                start=span.start,
                end=span.end,
                entity_id=span.entity_id,
                mention_text=sent.text(span.start, span.end),
                head_lemma=sent.token(span.head).lemma,
                corpus_id=doc.corpus_id,
                left_context=" ".join(t.form for t in left),
                right_context=" ".join(t.form for t in right),
            )
            self.items[item.item_id] = item
            self._order.append(item.item_id)

    def _replay(self) -> None:
        decisions = read_decisions(self.decisions_path)
        self.table = apply_decisions(self.base_table, decisions)
        for decision in decisions:
            if decision.action in ("accept", "assign"):
                item = self._pending_at(decision.locator)
                if item is not None:
                    item.status = "resolved"
                    item.decision_id = decision.decision_id
                    item.accepted_article = decision.article

    def _pending_at(self, locator) -> Optional[ReviewItem]:
        for item_id in self._order:
            item = self.items[item_id]
            if item.status == "pending" and item.locator == locator:
                return item
        return None

    def suggestion_for(self, item: ReviewItem) -> Optional[LinkSuggestion]:
        return link_cascade(
            item.mention_text,
            item.head_lemma,
            item.corpus_id,
            self.table,
            exclude=self.table.suppressed_for(item.locator),
        )

    # -- endpoints -----------------------------------------------------------

    def queue(self, limit: Optional[int] = None) -> list[dict]:
        if limit is not None and limit < 0:
            raise ApiError(400, "limit must be nonnegative")
        out = []
        for item_id in self._order:
            item = self.items[item_id]
            if item.status != "pending":
                continue
            out.append(item.to_dict(self.suggestion_for(item)))
            if limit is not None and len(out) >= limit:
                break
        return out

    def decide(
        self,
        item_id: str,
        action: str,
        article: Optional[str],
        annotator: str,
    ) -> dict:
        if action not in ("accept", "reject", "assign"):
            raise ApiError(400, f"unknown action {action!r}")
        with self.lock:
            item = self.items.get(item_id)
            if item is None:
                raise ApiError(404, f"unknown item {item_id!r}")
            if item.status == "resolved":
                raise ApiError(409, f"item {item_id!r} already resolved")
            if action == "assign":
                if not article:
                    raise ApiError(422, "assign requires an article")
                decided = article
            else:
                suggestion = self.suggestion_for(item)
                if suggestion is None:
                    raise ApiError(
                        422, f"item {item_id!r} has no suggestion to {action}"
                    )
                decided = suggestion.article
            decision = LinkDecision(
                decision_id=str(uuid.uuid4()),
                doc_id=item.doc_id,
                sent_id=item.sent_id,
                start=item.start,
                end=item.end,
                action=action,
                article=decided,
                annotator=annotator,
                timestamp=datetime.now(timezone.utc).isoformat(),
                mention_text=item.mention_text,
                head_lemma=item.head_lemma,
                corpus_id=item.corpus_id,
            )
            append_decision(self.decisions_path, decision)  # durable first
            self.table = apply_decisions(self.table, [decision])
            if action in ("accept", "assign"):
                item.status = "resolved"
                item.decision_id = decision.decision_id
                item.accepted_article = decided
            return item.to_dict(self.suggestion_for(item))

    def stats(self) -> dict:
        pending = resolved = answered = 0
        per_level = {1: 0, 2: 0, 3: 0, 4: 0}
        for item_id in self._order:
            item = self.items[item_id]
            if item.status == "resolved":
                resolved += 1
                answered += 1
                continue
            pending += 1
            suggestion = self.suggestion_for(item)
            if suggestion is not None:
                answered += 1
                per_level[suggestion.rule_level] += 1
        total = pending + resolved
        return {
            "pending": pending,
            "resolved": resolved,
            "coverage": answered / total if total else 0.0,
            "per_rule_level": {str(k): v for k, v in per_level.items()},
        }

    def known_articles(self) -> list[dict]:
        """Article inventory with global frequencies (for the UI picker)."""
        freq: dict[str, int] = {}
        for counts in self.table.head.values():
            for article, count in counts.items():
                freq[article] = freq.get(article, 0) + count
        return [
            {"article": a, "count": c}
            for a, c in sorted(freq.items(), key=lambda ac: (-ac[1], ac[0]))
        ]

    def export_conllu(self) -> str:
        """The corpus with accepted identities written into entity markers.

        Sentences without accepted decisions serialize from their original
        annotation verbatim, so with an empty log the export equals the
        input byte for byte.
        """
        accepted: dict[tuple[str, str], dict[int, str]] = {}
        for item_id in self._order:
            item = self.items[item_id]
            if item.status == "resolved" and item.accepted_article:
                accepted.setdefault((item.doc_id, item.sent_id), {})[
                    item.entity_id
                ] = item.accepted_article

        def rewrite(doc, sent):
            updates = accepted.get((doc.doc_id, sent.sent_id))
            if not updates:
                return sent
            spans = [
                replace(span, identity=updates.get(span.entity_id, span.identity))
                for span in sent.entities
            ]
            return sent.with_entities(spans)

        return serialize_corpus(self.corpus.map_sentences(rewrite))


# -- HTTP layer ---------------------------------------------------------------


def make_handler(service: ReviewService):
    class ReviewHandler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):  # quiet by default
            pass

        def _send(self, status: int, payload, content_type="application/json") -> None:
            if content_type == "application/json":
                body = json.dumps(payload, ensure_ascii=False).encode("utf-8")
            else:
                body = payload.encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", f"{content_type}; charset=utf-8")
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header(
                "Access-Control-Allow-Headers", "Content-Type"
            )
            self.send_header(
                "Access-Control-Allow-Methods", "GET, POST, OPTIONS"
            )
            self.end_headers()
            self.wfile.write(body)

        def _error(self, status: int, message: str) -> None:
            self._send(status, {"error": message})

        def do_OPTIONS(self) -> None:  # CORS preflight
            self._send(204, "", content_type="text/plain")

        def do_GET(self) -> None:
            url = urlparse(self.path)
            try:
                if url.path == "/health":
                    self._send(200, {"status": "ok"})
                elif url.path == "/queue":
                    params = parse_qs(url.query)
                    limit = None
                    if "limit" in params:
                        try:
                            limit = int(params["limit"][0])
                        except ValueError:
                            raise ApiError(400, "invalid limit") from None
                    self._send(200, {"items": service.queue(limit)})
                elif url.path == "/stats":
                    self._send(200, service.stats())
                elif url.path == "/articles":
                    self._send(200, {"articles": service.known_articles()})
                elif url.path == "/export":
                    self._send(
                        200, service.export_conllu(), content_type="text/plain"
                    )
                else:
                    self._error(404, f"no route {url.path!r}")
            except ApiError as exc:
                self._error(exc.status, exc.message)

        def do_POST(self) -> None:
            url = urlparse(self.path)
            if url.path != "/decision":
                self._error(404, f"no route {url.path!r}")
                return
            try:
                length = int(self.headers.get("Content-Length", "0"))
                try:
                    body = json.loads(self.rfile.read(length) or b"{}")
                except json.JSONDecodeError:
                    raise ApiError(400, "invalid JSON body") from None
                if not isinstance(body, dict) or "item_id" not in body:
                    raise ApiError(400, "item_id required")
                item = service.decide(
                    item_id=body.get("item_id", ""),
                    action=body.get("action", ""),
                    article=body.get("article"),
                    annotator=body.get("annotator", "anonymous"),
                )
                self._send(200, {"item": item})
            except ApiError as exc:
                self._error(exc.status, exc.message)

    return ReviewHandler


def make_server(service: ReviewService, port: int, host: str = "127.0.0.1"):
    server = ThreadingHTTPServer((host, port), make_handler(service))
    server.daemon_threads = True
    return server
