"""Command-line pipeline: convert, detect, train, classify, build resources,
link, evaluate, export, validate, serve.

Exit codes: 0 success, 2 environment/I-O problems, 3 data validation
failures. Errors are reported as one machine-readable JSON line on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from nestrec import crf, distant, kb, linker, mentions, metrics
from nestrec.corpus import (
    Corpus,
    CorpusError,
    parse_conllu,
    serialize_corpus,
    validate_corpus,
)
from nestrec.util import atomic_write_text

EXIT_OK = 0
EXIT_ENV = 2
EXIT_DATA = 3


class CliError(Exception):
    def __init__(self, code: int, message: str) -> None:
        super().__init__(message)
        self.code = code
        self.message = message


def _fail(code: int, message: str) -> "CliError":
    return CliError(code, message)


def _read_corpus(path: str, corpus_id: str = "", partition: str = "unlabeled") -> Corpus:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise _fail(EXIT_ENV, f"cannot read {path}: {exc}") from exc
    cid = corpus_id or Path(path).stem
    try:
        return parse_conllu(text, corpus_id=cid, partition=partition)
    except CorpusError as exc:
        raise _fail(EXIT_DATA, f"{path}: {exc}") from exc


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise _fail(EXIT_ENV, f"cannot read {path}: {exc}") from exc


def _write_out(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    try:
        atomic_write_text(path, text)
    except OSError as exc:
        raise _fail(EXIT_ENV, f"cannot write {path}: {exc}") from exc


def _seed(args) -> int:
    env = os.environ.get("NESTREC_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise _fail(EXIT_ENV, f"NESTREC_SEED must be an integer, got {env!r}")
    return args.seed


def _detect_candidates(sentence, method: str, inventory, include_pron: bool):
    if method == "noun":
        return mentions.detect_noun(sentence, include_pron=include_pron)
    if method == "lookup":
        return mentions.detect_lookup(sentence, inventory)
    if method == "parse":
        return mentions.detect_parse(sentence, include_pron=include_pron)
    raise _fail(EXIT_ENV, f"unknown detection method {method!r}")


def cmd_convert(args) -> int:
    corpus = _read_corpus(args.input)
    if args.canonical_entities:
        corpus = corpus.map_sentences(
            lambda doc, sent: sent.with_entities(sent.entities)
        )
    if args.strip_entities:
        corpus = corpus.map_sentences(lambda doc, sent: sent.with_entities([]))
    _write_out(args.output, serialize_corpus(corpus))
    return EXIT_OK


def cmd_validate(args) -> int:
    corpus = _read_corpus(args.input)
    violations = validate_corpus(corpus)
    for violation in violations:
        print(violation)
    print(f"{len(violations)} violation(s)")
    return EXIT_DATA if violations else EXIT_OK


def cmd_detect(args) -> int:
    corpus = _read_corpus(args.input)
    inventory = None
    if args.method == "lookup":
        if not args.inventory:
            raise _fail(EXIT_ENV, "--method lookup requires --inventory")
        inventory = mentions.LookupInventory.load(_read_text(args.inventory))
    next_id: dict[str, int] = {}

    def annotate(doc, sent):
        cands = _detect_candidates(sent, args.method, inventory, args.include_pron)
        first = next_id.get(doc.doc_id, 1)
        spans = mentions.candidates_to_spans(cands, first_id=first)
        next_id[doc.doc_id] = first + len(spans)
        return sent.with_entities(spans)

    _write_out(args.output, serialize_corpus(corpus.map_sentences(annotate)))
    return EXIT_OK


def cmd_build_inventory(args) -> int:
    corpus = _read_corpus(args.train, partition="train")
    inventory = mentions.build_lookup_inventory(corpus)
    _write_out(args.out, inventory.dump())
    print(f"inventory: {len(inventory)} sequence(s)", file=sys.stderr)
    return EXIT_OK


def cmd_build_kb(args) -> int:
    corpus = _read_corpus(args.train, partition="train")
    base = kb.build_kb_from_training(corpus)
    _write_out(args.out, base.dump())
    print(f"kb: {len(base)} entrie(s)", file=sys.stderr)
    return EXIT_OK


def cmd_build_links(args) -> int:
    corpora = [_read_corpus(path) for path in args.input]
    table = linker.build_link_table(corpora)
    _write_out(args.out, table.dump())
    print(f"link table: {table.n_entries()} entrie(s)", file=sys.stderr)
    return EXIT_OK


def cmd_train(args) -> int:
    corpus = _read_corpus(args.train, partition="train")
    sentences = [sent for _, sent in corpus.sentences()]
    if not any(sent.entities for sent in sentences):
        raise _fail(EXIT_DATA, f"{args.train}: no gold entities to train on")
    cfg = crf.TrainConfig(
        l2=args.l2, max_iters=args.max_iters, tol=args.tol, seed=_seed(args)
    )
    try:
        model = crf.train(sentences, cfg)
    except ValueError as exc:
        raise _fail(EXIT_DATA, str(exc)) from exc
    model.save(args.out)
    for iteration, objective in model.train_log:
        print(f"iter {iteration}\tobjective {objective:.6f}", file=sys.stderr)
    status = "converged" if model.converged else "stopped"
    final = model.train_log[-1][1] if model.train_log else float("nan")
    print(f"{status} after {model.n_iters} iteration(s), objective {final:.6f}")
    if args.dev:
        dev = _read_corpus(args.dev, partition="dev")
        total = correct = 0
        for _, sent in dev.sentences():
            gold = crf.gold_labels(sent)
            pred = model.decode(sent)
            total += len(gold)
            correct += sum(g == p for g, p in zip(gold, pred))
        acc = correct / total if total else 0.0
        print(f"dev token-label accuracy: {acc:.4f}")
    return EXIT_OK


def cmd_classify(args) -> int:
    corpus = _read_corpus(args.input)
    base = None
    if args.method in ("kb", "crf+kb"):
        if not args.kb:
            raise _fail(EXIT_ENV, f"--method {args.method} requires --kb")
        base = kb.KnowledgeBase.load(_read_text(args.kb))
    model = None
    if args.method in ("crf", "crf+kb"):
        if not args.model:
            raise _fail(EXIT_ENV, f"--method {args.method} requires --model")
        try:
            model = crf.CRFModel.load(args.model)
        except OSError as exc:
            raise _fail(EXIT_ENV, f"cannot read {args.model}: {exc}") from exc
        except ValueError as exc:
            raise _fail(EXIT_DATA, f"{args.model}: {exc}") from exc
    next_id: dict[str, int] = {}

    def annotate(doc, sent):
        if args.candidates == "gold":
            cands = [
                mentions.MentionCandidate(s.start, s.end, s.head, "parse")
                for s in sent.entities
            ]
        else:
            cands = mentions.detect_parse(sent, include_pron=args.include_pron)
        if args.method == "majority":
            typed = kb.classify_majority(sent, cands)
        elif args.method == "kb":
            typed = kb.classify_kb_only(sent, cands, base)
        elif args.method == "crf":
            typed = kb.classify_crf_only(
                sent, cands, model, o_threshold=args.o_threshold
            )
        else:
            typed = kb.classify_hybrid(
                sent,
                cands,
                base,
                model,
                o_threshold=args.o_threshold,
                discard_first=not args.no_discard_first,
            )
        first = next_id.get(doc.doc_id, 1)
        spans = [
            t.to_entity(first + i)
            for i, t in enumerate(
                sorted(typed, key=lambda t: (t.start, -t.end, t.etype))
            )
        ]
        next_id[doc.doc_id] = first + len(spans)
        return sent.with_entities(spans)

    _write_out(args.output, serialize_corpus(corpus.map_sentences(annotate)))
    return EXIT_OK


def cmd_link(args) -> int:
    corpus = _read_corpus(args.input)
    table = linker.LinkTable.load(_read_text(args.table))

    def annotate(doc, sent):
        spans = list(sent.entities)
        changed = False
        for i, span in enumerate(spans):
            if not sent.is_named(span):
                continue
            text = sent.text(span.start, span.end)
            head_lemma = sent.token(span.head).lemma
            if args.method == "cascade":
                suggestion = linker.link_cascade(
                    text, head_lemma, doc.corpus_id, table
                )
                article = suggestion.article if suggestion else None
            elif args.method == "exact":
                article = linker.link_exact_baseline(text, table)
            else:
                article = linker.link_head_baseline(head_lemma, table)
            if span.identity != article:
                spans[i] = replace(span, identity=article)
                changed = True
        return sent.with_entities(spans) if changed else sent

    _write_out(args.output, serialize_corpus(corpus.map_sentences(annotate)))
    return EXIT_OK


def _report(args, tsv: str, payload: dict) -> int:
    sys.stdout.write(tsv)
    if args.json_out:
        _write_out(args.json_out, json.dumps(payload, indent=2) + "\n")
    if args.tsv_out:
        _write_out(args.tsv_out, tsv)
    return EXIT_OK


def _eval_mentions(gold: Corpus, pred: Corpus, args) -> int:
    exact = metrics.evaluate_spans(gold, pred, mode="exact", typed=False)
    fuzzy = metrics.evaluate_spans(gold, pred, mode="fuzzy", typed=False)
    tsv = (
        "method\texact_R\texact_P\texact_F1\tfuzzy_R\tfuzzy_P\tfuzzy_F1\n"
        f"pred\t{exact.recall:.3f}\t{exact.precision:.3f}\t{exact.f1:.3f}"
        f"\t{fuzzy.recall:.3f}\t{fuzzy.precision:.3f}\t{fuzzy.f1:.3f}\n"
    )
    payload = {
        "task": "mentions",
        "exact span match": {
            "R": exact.recall, "P": exact.precision, "F1": exact.f1,
        },
        "fuzzy head span": {
            "R": fuzzy.recall, "P": fuzzy.precision, "F1": fuzzy.f1,
        },
    }
    return _report(args, tsv, payload)


def _eval_classification(gold: Corpus, pred: Corpus, args) -> int:
    span = metrics.evaluate_spans(gold, pred, mode="exact", typed=True)
    head = metrics.evaluate_spans(gold, pred, mode="fuzzy", typed=True)
    tsv = (
        "method\tspan_R\tspan_P\tspan_F1\thead_R\thead_P\thead_F1\n"
        f"pred\t{span.recall:.3f}\t{span.precision:.3f}\t{span.f1:.3f}"
        f"\t{head.recall:.3f}\t{head.precision:.3f}\t{head.f1:.3f}\n"
    )
    payload = {
        "task": "classification",
        "span match": {"R": span.recall, "P": span.precision, "F1": span.f1},
        "head match": {"R": head.recall, "P": head.precision, "F1": head.f1},
    }
    return _report(args, tsv, payload)


def _eval_linking(gold: Corpus, pred: Corpus, args) -> int:
    pred_by_key = {}
    for doc, sent, span in linker.named_mentions(pred):
        pred_by_key[(doc.doc_id, sent.sent_id, span.start, span.end)] = span
    gold_articles = []
    predictions = []
    for doc, sent, span in linker.named_mentions(gold):
        if span.identity is None:
            continue
        gold_articles.append(span.identity)
        hit = pred_by_key.get((doc.doc_id, sent.sent_id, span.start, span.end))
        predictions.append(hit.identity if hit is not None else None)
    if not gold_articles:
        raise _fail(EXIT_DATA, "gold corpus has no linked mentions")
    acc, cov, no_err = linker.evaluate_linking(gold_articles, predictions)
    tsv = (
        "method\tacc\tcov\tno_err\n"
        f"pred\t{acc:.3f}\t{cov:.3f}\t{no_err:.3f}\n"
    )
    payload = {"task": "linking", "acc": acc, "cov": cov, "no_err": no_err}
    return _report(args, tsv, payload)


def _eval_agreement(gold: Corpus, pred: Corpus, args) -> int:
    pairs = metrics.paired_sentences(gold, pred)
    rows = {}
    for typed in (True, False):
        tags_a: list[str] = []
        tags_b: list[str] = []
        for a, b in pairs:
            bio_a = metrics.deepest_bio_labels(a)
            bio_b = metrics.deepest_bio_labels(b)
            if not typed:
                bio_a = [t if t == "O" else t[:2] for t in bio_a]
                bio_b = [t if t == "O" else t[:2] for t in bio_b]
            tags_a.extend(bio_a)
            tags_b.extend(bio_b)
        kappa = metrics.cohen_kappa(tags_a, tags_b)
        matched = n_gold = n_pred = 0
        for a, b in pairs:
            alignment = metrics.align_spans(
                a.entities, b.entities, mode="exact", typed=typed
            )
            m, ng, npred = alignment.counts
            matched, n_gold, n_pred = matched + m, n_gold + ng, n_pred + npred
        prf = metrics.prf_from_counts(matched, n_gold, n_pred)
        head_acc = (
            metrics.head_accuracy(
                [a.entities for a, _ in pairs], [b.entities for _, b in pairs]
            )
            if typed
            else None
        )
        rows["typed" if typed else "untyped"] = (kappa, prf, head_acc)
    lines = ["\tkappa\tF1\tprecision\trecall\thead acc"]
    payload = {"task": "agreement"}
    for name in ("typed", "untyped"):
        kappa, prf, head_acc = rows[name]
        head_s = f"{head_acc:.3f}" if head_acc is not None else "N/A"
        lines.append(
            f"{name}\t{kappa:.3f}\t{prf.f1:.3f}\t{prf.precision:.3f}"
            f"\t{prf.recall:.3f}\t{head_s}"
        )
        payload[name] = {
            "kappa": kappa,
            "F1": prf.f1,
            "precision": prf.precision,
            "recall": prf.recall,
            "head acc": head_acc,
        }
    return _report(args, "\n".join(lines) + "\n", payload)


def cmd_evaluate(args) -> int:
    gold = _read_corpus(args.gold)
    pred = _read_corpus(args.pred)
    try:
        if args.task == "mentions":
            return _eval_mentions(gold, pred, args)
        if args.task == "classification":
            return _eval_classification(gold, pred, args)
        if args.task == "linking":
            return _eval_linking(gold, pred, args)
        return _eval_agreement(gold, pred, args)
    except ValueError as exc:
        raise _fail(EXIT_DATA, str(exc)) from exc


def cmd_export(args) -> int:
    corpus = _read_corpus(args.input)
    if args.what == "network":
        if not args.lemma:
            raise _fail(EXIT_ENV, "--what network requires --lemma")
        _write_out(args.out, distant.term_network(corpus, args.lemma).to_json() + "\n")
    elif args.what == "treemap":
        _write_out(args.out, distant.treemap(corpus).to_json() + "\n")
    else:
        rows = distant.type_proportions(corpus, group_by=args.group_by)
        _write_out(args.out, distant.proportions_tsv(rows))
    return EXIT_OK


def cmd_serve(args) -> int:
    from nestrec.server import ReviewService, make_server

    corpus = _read_corpus(args.corpus)
    table = linker.LinkTable.load(_read_text(args.links))
    service = ReviewService(corpus, table, args.decisions)
    try:
        server = make_server(service, args.port, host=args.host)
    except OSError as exc:
        raise _fail(EXIT_ENV, f"cannot bind port {args.port}: {exc}") from exc
    print(
        f"review server on http://{args.host}:{server.server_address[1]}/ "
        f"({len(service.items)} item(s))",
        file=sys.stderr,
    )
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nestrec",
        description="Nested entity recognition and linking over "
        "dependency-parsed corpora",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="parse and re-serialize CoNLL-U")
    p.add_argument("--input", required=True)
    p.add_argument("--output", default=None)
    p.add_argument("--canonical-entities", action="store_true",
                   help="re-encode entity markers canonically")
    p.add_argument("--strip-entities", action="store_true")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("validate", help="report corpus invariant violations")
    p.add_argument("--input", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("detect", help="predict entity span candidates")
    p.add_argument("--method", choices=("noun", "lookup", "parse"), required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--inventory", default=None,
                   help="lookup inventory file (required for --method lookup)")
    p.add_argument("--output", default=None)
    p.add_argument("--include-pron", action="store_true",
                   help="treat pronouns as span heads too")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("build-inventory", help="collect training span strings")
    p.add_argument("--train", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_inventory)

    p = sub.add_parser("build-kb", help="derive a knowledge base from training")
    p.add_argument("--train", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_kb)

    p = sub.add_parser("build-links", help="build the link frequency table")
    p.add_argument("--input", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_links)

    p = sub.add_parser("train", help="train the CRF classifier")
    p.add_argument("--train", required=True)
    p.add_argument("--dev", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--l2", type=float, default=1.0)
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0,
                   help="overridden by NESTREC_SEED when set")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify", help="type entity span candidates")
    p.add_argument("--method", choices=("majority", "kb", "crf", "crf+kb"),
                   required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--kb", default=None)
    p.add_argument("--model", default=None)
    p.add_argument("--candidates", choices=("parse", "gold"), default="parse")
    p.add_argument("--o-threshold", type=float, default=0.95)
    p.add_argument("--no-discard-first", action="store_true",
                   help="consult the KB before the over-threshold-O discard")
    p.add_argument("--include-pron", action="store_true")
    p.add_argument("--output", default=None)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("link", help="attach article identifiers to named spans")
    p.add_argument("--method", choices=("cascade", "exact", "head"),
                   default="cascade")
    p.add_argument("--table", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", default=None)
    p.set_defaults(func=cmd_link)

    p = sub.add_parser("evaluate", help="score predictions against gold")
    p.add_argument("--task", choices=("mentions", "classification", "linking",
                                      "agreement"), required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--json-out", default=None)
    p.add_argument("--tsv-out", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export", help="distant-reading aggregations")
    p.add_argument("--what", choices=("network", "treemap", "proportions"),
                   required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--lemma", default=None)
    p.add_argument("--group-by", choices=("document", "corpus"),
                   default="corpus")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("serve", help="run the link review service")
    p.add_argument("--port", type=int, required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--corpus", required=True)
    p.add_argument("--links", required=True)
    p.add_argument("--decisions", required=True)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(json.dumps({"error": exc.message, "code": exc.code}),
              file=sys.stderr)
        return exc.code
    except CorpusError as exc:
        print(json.dumps({"error": str(exc), "code": EXIT_DATA}),
              file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(json.dumps({"error": str(exc), "code": EXIT_ENV}),
              file=sys.stderr)
        return EXIT_ENV


if __name__ == "__main__":
    sys.exit(main())
