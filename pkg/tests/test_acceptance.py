"""Acceptance suite.

Prints one line per criterion (PASS/FAIL; skipped criteria are reported by
pytest as skips with the blocking reason). The corpus-free property suite
always runs. The published-treebank reproductions (mention detection,
classification, linking score targets) need the UD Coptic-Scriptorium
treebank on disk: set NESTREC_UD_COPTIC_DIR to a directory containing
cop_scriptorium-ud-{train,dev,test}.conllu (see README). Desk-scale
runtime budgets and orderings are additionally exercised on a seeded
synthetic treebank-sized corpus, which stands in for scale only and makes
no claim about the published scores.
"""

import itertools
import math
import random
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import (
    make_corpus,
    make_sentence,
    random_nested_spans,
    random_parsed_sentence,
)
from corpusgen import make_split
from nestrec import kb, linker, mentions, metrics
from nestrec.corpus import (
    EntitySpan,
    decode_entities,
    parse_conllu,
    validate_corpus,
)
from nestrec.crf import (
    LABEL_INDEX,
    LABELS,
    N_LABELS,
    TrainConfig,
    log_likelihood_and_gradient,
    train,
    zero_model,
)


def report(name: str, ok: bool, detail: str = "") -> None:
    """One line per criterion, shown in the pytest terminal summary."""
    from conftest import record_acceptance

    status = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    line = f"{status}  {name}{suffix}"
    record_acceptance(line)
    print(line, file=sys.stderr)


# --------------------------------------------------------------------------
# Property suite — runs with no corpus
# --------------------------------------------------------------------------


def _random_model(rng, n_feats=4, scale=1.0):
    model = zero_model([f"f{i}" for i in range(n_feats)])
    model.feature_weights[:] = np.array(
        [[rng.uniform(-scale, scale) for _ in LABELS] for _ in range(n_feats)]
    )
    model.transition_weights[:] = np.array(
        [[rng.uniform(-scale, scale) for _ in LABELS] for _ in LABELS]
    )
    return model


def _random_batch(rng, model, n_sentences=2, max_len=4):
    batch = []
    for _ in range(n_sentences):
        n = rng.randint(1, max_len)
        feats = [
            frozenset(
                rng.sample(sorted(model.feature_index), rng.randint(1, 3))
            )
            for _ in range(n)
        ]
        labels = [LABELS[rng.randrange(N_LABELS)] for _ in range(n)]
        batch.append((feats, labels))
    return batch


class TestPropertySuite:
    def test_a_gradient_matches_finite_differences(self):
        rng = random.Random(101)
        eps = 1e-6
        worst = 0.0
        for _ in range(50):
            model = _random_model(rng)
            batch = _random_batch(rng, model)
            _, (g_w, g_t) = log_likelihood_and_gradient(model, batch, l2=0.7)
            for _ in range(12):
                if rng.random() < 0.7:
                    fi = rng.randrange(len(model.feature_index))
                    li = rng.randrange(N_LABELS)
                    ref = model.feature_weights
                    analytic = g_w[fi, li]
                    key = (fi, li)
                else:
                    fi = rng.randrange(N_LABELS)
                    li = rng.randrange(N_LABELS)
                    ref = model.transition_weights
                    analytic = g_t[fi, li]
                    key = (fi, li)
                w0 = ref[key]
                ref[key] = w0 + eps
                up, _ = log_likelihood_and_gradient(model, batch, l2=0.7)
                ref[key] = w0 - eps
                dn, _ = log_likelihood_and_gradient(model, batch, l2=0.7)
                ref[key] = w0
                numeric = (up - dn) / (2 * eps)
                rel = abs(analytic - numeric) / max(1.0, abs(numeric))
                worst = max(worst, rel)
        ok = worst < 1e-4
        report("property (a) CRF gradient vs finite differences", ok,
               f"worst rel err {worst:.2e} over 50 instances")
        assert ok

    def test_b_viterbi_and_marginals_match_enumeration(self):
        rng = random.Random(103)
        worst = 0.0
        for _ in range(60):
            model = _random_model(rng)
            n = rng.randint(1, 4)
            feats = [
                frozenset(rng.sample(sorted(model.feature_index), 2))
                for _ in range(n)
            ]
            e = model.emissions(feats)
            T = model.transition_weights
            scores = {}
            for seq in itertools.product(range(N_LABELS), repeat=n):
                s = sum(e[t, y] for t, y in enumerate(seq))
                s += sum(T[a, b] for a, b in zip(seq, seq[1:]))
                scores[seq] = s
            best = max(sorted(scores), key=lambda seq: scores[seq])
            got = [LABEL_INDEX[l] for l in model.decode_scores(e)]
            assert tuple(got) == best
            log_z = math.log(sum(math.exp(s) for s in scores.values()))
            marg = np.zeros((n, N_LABELS))
            for seq, s in scores.items():
                p = math.exp(s - log_z)
                for t, y in enumerate(seq):
                    marg[t, y] += p
            got_marg = model.marginal_scores(e)
            worst = max(worst, float(np.abs(got_marg - marg).max()))
        ok = worst < 1e-8
        report("property (b) Viterbi/marginals vs enumeration", ok,
               f"worst marginal err {worst:.2e} over 60 instances")
        assert ok

    def test_c_entity_encoding_round_trip_1000(self):
        rng = random.Random(107)
        failures = 0
        for _ in range(1000):
            n = rng.randint(1, 12)
            sent = random_parsed_sentence(rng, n)
            spans = random_nested_spans(rng, sent, with_identity=True)
            decoded = decode_entities(sent.with_entities(spans))
            want = tuple(
                sorted(spans, key=lambda s: (s.start, -s.end, s.entity_id))
            )
            if decoded != want:
                failures += 1
        ok = failures == 0
        report("property (c) entity encoding round-trip x1000", ok,
               f"{failures} failure(s)")
        assert ok

    def test_d_kappa_identity_and_chance(self):
        rng = random.Random(109)
        tags = ["O"] + [
            f"{p}-{t}" for p in ("B", "I")
            for t in ("person", "place", "abstract")
        ]
        identical = [rng.choice(tags) for _ in range(500)]
        k_same = metrics.cohen_kappa(identical, identical)
        a = [rng.choice(tags) for _ in range(10_000)]
        b = [rng.choice(tags) for _ in range(10_000)]
        k_rand = metrics.cohen_kappa(a, b)
        ok = k_same == 1.0 and abs(k_rand) < 0.05
        report("property (d) kappa identity=1 and |chance|<0.05", ok,
               f"identity {k_same}, chance {k_rand:.4f}")
        assert ok

    def test_e_fuzzy_ge_exact_untyped_ge_typed(self):
        rng = random.Random(113)
        ok = True
        for _ in range(200):
            n = rng.randint(2, 9)
            sent = random_parsed_sentence(rng, n)
            gold = random_nested_spans(rng, sent)
            pred = random_nested_spans(rng, sent)
            counts = {
                (mode, typed): len(
                    metrics.align_spans(gold, pred, mode, typed).matched
                )
                for mode in ("exact", "fuzzy")
                for typed in (True, False)
            }
            ok &= counts[("fuzzy", True)] >= counts[("exact", True)]
            ok &= counts[("fuzzy", False)] >= counts[("exact", False)]
            ok &= counts[("exact", False)] >= counts[("exact", True)]
            ok &= counts[("fuzzy", False)] >= counts[("fuzzy", True)]
        report("property (e) fuzzy>=exact and untyped>=typed x200", ok)
        assert ok

    def test_f_nesting_validator_rejects_every_crossing(self):
        rng = random.Random(127)
        rejected = 0
        total = 200
        for _ in range(total):
            n = rng.randint(4, 12)
            sent = random_parsed_sentence(rng, n)
            start_a = rng.randint(1, n - 3)
            end_a = start_a + rng.randint(1, 2)
            start_b = rng.randint(start_a + 1, end_a)
            end_b = rng.randint(end_a + 1, min(n, end_a + 3))
            from nestrec.corpus import Sentence

            bad = Sentence(
                sent.sent_id,
                sent.tokens,
                entities=(
                    EntitySpan(start_a, end_a, "person", start_a, 1),
                    EntitySpan(start_b, end_b, "place", start_b, 2),
                ),
            )
            violations = validate_corpus(make_corpus([bad]))
            if any(v.rule == "strict-nesting" for v in violations):
                rejected += 1
        ok = rejected == total
        report("property (f) nesting validator rejects crossings", ok,
               f"{rejected}/{total}")
        assert ok

    def test_g_decision_log_replay_byte_identical(self, tmp_path):
        from nestrec.server import ReviewService

        def propn(form, sent_id, identity=None):
            return make_sentence(
                [(form, form, "PROPN", 0, "root")],
                sent_id=sent_id,
                entities=[EntitySpan(1, 1, "person", 1, 1, identity)],
            )

        corpus = make_corpus(
            [propn("Iohannes", "s1"), propn("Paulos", "s2"),
             propn("Bibrus", "s3")],
            corpus_id="mark",
            doc_id="mark:d1",
        )
        seed = make_corpus(
            [propn("Iohannes", "t1", "John_the_Baptist"),
             propn("Paulos", "t2", "Paul_the_Apostle")],
            corpus_id="mark",
            doc_id="mark:seed",
        )
        table = linker.build_link_table([seed])
        log_path = tmp_path / "decisions.jsonl"
        first = ReviewService(corpus, table, log_path)
        ids = [item["item_id"] for item in first.queue()]
        first.decide(ids[0], "accept", None, "annotator-a")
        first.decide(ids[1], "reject", None, "annotator-a")
        first.decide(ids[2], "assign", "Bibrus_(Dormition)", "annotator-b")
        replayed = ReviewService(corpus, table, log_path)
        same_export = replayed.export_conllu() == first.export_conllu()
        same_stats = replayed.stats() == first.stats()
        same_queue = replayed.queue() == first.queue()
        ok = same_export and same_stats and same_queue
        report("property (g) decision-log replay reproduces state", ok,
               f"export={same_export} stats={same_stats} queue={same_queue}")
        assert ok


# --------------------------------------------------------------------------
# Published-treebank reproductions (Tables 3-5)
# --------------------------------------------------------------------------

UD_DIR = Path(
    __import__("os").environ.get(
        "NESTREC_UD_COPTIC_DIR", Path(__file__).parent.parent / "data" / "ud-coptic"
    )
)
UD_FILES = {
    part: UD_DIR / f"cop_scriptorium-ud-{part}.conllu"
    for part in ("train", "dev", "test")
}
TREEBANK_PRESENT = all(p.is_file() for p in UD_FILES.values())

requires_treebank = pytest.mark.skipif(
    not TREEBANK_PRESENT,
    reason=(
        "UD Coptic-Scriptorium treebank not available (no network in this "
        "environment); place cop_scriptorium-ud-{train,dev,test}.conllu under "
        f"{UD_DIR} or set NESTREC_UD_COPTIC_DIR — see README"
    ),
)

if not TREEBANK_PRESENT:
    from conftest import record_acceptance

    for _criterion in (
        "Table 3 mention detection (parse/noun/lookup F1 targets)",
        "Table 4 classification (majority/kb/crf/crf+kb F1 targets)",
        "Table 5 linking (cascade acc/cov/no_err targets)",
    ):
        record_acceptance(
            f"SKIP  {_criterion} — needs the UD Coptic-Scriptorium treebank "
            "on disk; see README for fetch instructions"
        )


@pytest.fixture(scope="module")
def treebank():
    corpora = {}
    for part, path in UD_FILES.items():
        corpora[part] = parse_conllu(
            path.read_text(encoding="utf-8"),
            corpus_id="scriptorium",
            partition=part,
        )
    return corpora


def _detect(corpus, method, inventory=None):
    def annotate(doc, sent):
        if method == "noun":
            cands = mentions.detect_noun(sent)
        elif method == "lookup":
            cands = mentions.detect_lookup(sent, inventory)
        else:
            cands = mentions.detect_parse(sent)
        return sent.with_entities(mentions.candidates_to_spans(cands))

    return corpus.map_sentences(annotate)


def _classify(corpus, method, base, model, o_threshold=0.95):
    def annotate(doc, sent):
        cands = mentions.detect_parse(sent)
        if method == "majority":
            typed = kb.classify_majority(sent, cands)
        elif method == "kb":
            typed = kb.classify_kb_only(sent, cands, base)
        elif method == "crf":
            typed = kb.classify_crf_only(sent, cands, model, o_threshold)
        else:
            typed = kb.classify_hybrid(sent, cands, base, model, o_threshold)
        spans = [
            t.to_entity(i + 1)
            for i, t in enumerate(
                sorted(typed, key=lambda t: (t.start, -t.end, t.etype))
            )
        ]
        return sent.with_entities(spans)

    return corpus.map_sentences(annotate)


def _link_predictions(test_corpus, table):
    gold, cascade, exact, head = [], [], [], []
    for doc, sent, span in linker.named_mentions(test_corpus):
        if span.identity is None:
            continue
        text = sent.text(span.start, span.end)
        head_lemma = sent.token(span.head).lemma
        gold.append(span.identity)
        suggestion = linker.link_cascade(text, head_lemma, doc.corpus_id, table)
        cascade.append(suggestion.article if suggestion else None)
        exact.append(linker.link_exact_baseline(text, table))
        head.append(linker.link_head_baseline(head_lemma, table))
    return gold, cascade, exact, head


@requires_treebank
class TestTreebankMentionDetection:
    """Table 3 reproduction at the paper's stated tolerances."""

    def test_parse_noun_lookup_scores_and_runtime(self, treebank):
        train_c, test_c = treebank["train"], treebank["test"]
        inventory = mentions.build_lookup_inventory(train_c)
        started = time.monotonic()
        results = {}
        lookup_exact = None
        for method in ("noun", "lookup", "parse"):
            pred = _detect(test_c, method, inventory)
            exact = metrics.evaluate_spans(test_c, pred, "exact", typed=False)
            fuzzy = metrics.evaluate_spans(test_c, pred, "fuzzy", typed=False)
            results[method] = (exact.f1, fuzzy.f1)
            if method == "lookup":
                lookup_exact = exact
        elapsed = time.monotonic() - started
        # lookup has few false positives but low recall on held-out data
        assert lookup_exact is not None
        assert lookup_exact.precision >= lookup_exact.recall
        checks = {
            "parse exact F1 0.870±0.05":
                abs(results["parse"][0] - 0.870) <= 0.05,
            "parse fuzzy F1 0.938±0.05":
                abs(results["parse"][1] - 0.938) <= 0.05,
            "noun exact F1 0.117±0.05":
                abs(results["noun"][0] - 0.117) <= 0.05,
            "noun fuzzy F1 0.812±0.05":
                abs(results["noun"][1] - 0.812) <= 0.05,
            "lookup exact F1 0.455±0.07":
                abs(results["lookup"][0] - 0.455) <= 0.07,
            "runtime < 10 s": elapsed < 10.0,
        }
        for name, ok in checks.items():
            report(f"Table 3 {name}", ok, f"got {results}")
        assert all(checks.values())


@requires_treebank
class TestTreebankClassification:
    """Table 4 reproduction: head-match F1 per method plus the ordering."""

    def test_methods_and_ordering(self, treebank):
        train_c, test_c = treebank["train"], treebank["test"]
        sentences = [s for _, s in train_c.sentences()]
        started = time.monotonic()
        model = train(sentences, TrainConfig(l2=1.0, max_iters=200))
        train_time = time.monotonic() - started
        base = kb.build_kb_from_training(train_c)
        scores = {}
        for method in ("majority", "kb", "crf", "crf+kb"):
            pred = _classify(test_c, method, base, model)
            scores[method] = metrics.evaluate_spans(
                test_c, pred, "fuzzy", typed=True
            ).f1
        checks = {
            "majority head F1 0.232±0.05": abs(scores["majority"] - 0.232) <= 0.05,
            "kb head F1 0.717±0.05": abs(scores["kb"] - 0.717) <= 0.05,
            "crf head F1 0.846±0.06": abs(scores["crf"] - 0.846) <= 0.06,
            "crf+kb head F1 0.879±0.06": abs(scores["crf+kb"] - 0.879) <= 0.06,
            "ordering crf+kb>crf>kb>majority":
                scores["crf+kb"] > scores["crf"] > scores["kb"] > scores["majority"],
            "training < 10 min": train_time < 600.0,
        }
        for name, ok in checks.items():
            report(f"Table 4 {name}", ok, f"got {scores}")
        assert all(checks.values())


@requires_treebank
class TestTreebankLinking:
    """Table 5 reproduction."""

    def test_cascade_and_baselines(self, treebank):
        table = linker.build_link_table([treebank["train"], treebank["dev"]])
        gold, cascade, exact, head = _link_predictions(treebank["test"], table)
        acc_c, cov_c, noerr_c = linker.evaluate_linking(gold, cascade)
        acc_e, _, _ = linker.evaluate_linking(gold, exact)
        acc_h, _, _ = linker.evaluate_linking(gold, head)
        checks = {
            "cascade acc 0.460±0.08": abs(acc_c - 0.460) <= 0.08,
            "cascade cov 0.500±0.08": abs(cov_c - 0.500) <= 0.08,
            "cascade no_err 0.960±0.04": abs(noerr_c - 0.960) <= 0.04,
            "cascade >= head >= exact accuracy": acc_c >= acc_h >= acc_e,
        }
        for name, ok in checks.items():
            report(
                f"Table 5 {name}", ok,
                f"cascade=({acc_c:.3f},{cov_c:.3f},{noerr_c:.3f}) "
                f"head={acc_h:.3f} exact={acc_e:.3f}",
            )
        assert all(checks.values())


# --------------------------------------------------------------------------
# Desk-scale stand-ins on the seeded synthetic treebank (always run).
# These exercise runtime budgets and the pipeline at the paper's data scale;
# they do not claim the published Table 3-5 values.
# --------------------------------------------------------------------------


@pytest.fixture(scope="module")
def synthetic_split():
    train_c, dev_c, test_c = make_split(
        seed=202408, train_tokens=30_000, dev_tokens=10_000, test_tokens=10_000
    )
    assert not validate_corpus(train_c)
    assert not validate_corpus(dev_c)
    assert not validate_corpus(test_c)
    return train_c, dev_c, test_c


@pytest.fixture(scope="module")
def synthetic_model(synthetic_split):
    train_c, _, _ = synthetic_split
    sentences = [s for _, s in train_c.sentences()]
    started = time.monotonic()
    model = train(sentences, TrainConfig(l2=1.0, max_iters=200))
    model.wall_time = time.monotonic() - started
    return model


class TestSyntheticScale:
    def test_detection_runtime_under_budget(self, synthetic_split):
        train_c, _, test_c = synthetic_split
        inventory = mentions.build_lookup_inventory(train_c)
        started = time.monotonic()
        for method in ("noun", "lookup", "parse"):
            _detect(test_c, method, inventory)
        elapsed = time.monotonic() - started
        ok = elapsed < 10.0
        report(
            "stand-in: detection over 10K-token partition < 10 s", ok,
            f"{elapsed:.1f}s for all three methods",
        )
        assert ok

    def test_training_runtime_under_budget(self, synthetic_model):
        ok = synthetic_model.wall_time < 600.0
        report(
            "stand-in: CRF training on 30K tokens < 10 min", ok,
            f"{synthetic_model.wall_time:.0f}s, "
            f"{synthetic_model.n_iters} iterations",
        )
        assert ok
        values = [v for _, v in synthetic_model.train_log]
        assert all(b <= a + 1e-9 for a, b in zip(values, values[1:]))

    def test_classification_order_at_scale(
        self, synthetic_split, synthetic_model
    ):
        train_c, _, test_c = synthetic_split
        base = kb.build_kb_from_training(train_c)
        scores = {}
        for method in ("majority", "kb", "crf", "crf+kb"):
            pred = _classify(test_c, method, base, synthetic_model)
            scores[method] = metrics.evaluate_spans(
                test_c, pred, "fuzzy", typed=True
            ).f1
        # at this scale the CRF can saturate, so the hybrid may only tie it
        ok = (
            scores["crf+kb"] >= scores["crf"]
            and scores["crf"] > scores["kb"] > scores["majority"]
        )
        report(
            "stand-in: crf+kb >= crf > kb > majority at 30K tokens", ok,
            " ".join(f"{m}={s:.3f}" for m, s in scores.items()),
        )
        assert ok

    def test_strict_ordering_in_low_data_regime(self):
        train_c, _, test_c = make_split(
            seed=99, train_tokens=2500, dev_tokens=600, test_tokens=600
        )
        sentences = [s for _, s in train_c.sentences()]
        model = train(sentences, TrainConfig(l2=1.0, max_iters=120))
        base = kb.build_kb_from_training(train_c)
        scores = {}
        for method in ("majority", "kb", "crf", "crf+kb"):
            pred = _classify(test_c, method, base, model)
            scores[method] = metrics.evaluate_spans(
                test_c, pred, "fuzzy", typed=True
            ).f1
        ok = (
            scores["crf+kb"] > scores["crf"] > scores["kb"] > scores["majority"]
        )
        report(
            "stand-in: strict crf+kb > crf > kb > majority (low-data)", ok,
            " ".join(f"{m}={s:.3f}" for m, s in scores.items()),
        )
        assert ok

    def test_linking_invariants_at_scale(self, synthetic_split):
        train_c, dev_c, test_c = synthetic_split
        table = linker.build_link_table([train_c, dev_c])
        gold, cascade, exact, head = _link_predictions(test_c, table)
        acc_c, cov_c, noerr_c = linker.evaluate_linking(gold, cascade)
        acc_e, cov_e, noerr_e = linker.evaluate_linking(gold, exact)
        acc_h, cov_h, noerr_h = linker.evaluate_linking(gold, head)
        ok = (
            cov_c >= cov_h
            and cov_c >= cov_e
            and acc_c <= cov_c
            and noerr_c >= 1 - cov_c
            and cov_c < 1.0  # first-appearance names force abstention
        )
        report(
            "stand-in: linking invariants at scale", ok,
            f"cascade=({acc_c:.3f},{cov_c:.3f},{noerr_c:.3f})",
        )
        assert ok


class TestNotReproducibleAtDeskScale:
    """Table 2 agreement values need the unpublished double-annotated data;
    the neural sequence rows are out of scope. The property suite above is
    the substitute; this records the fact visibly."""

    def test_agreement_data_not_published(self):
        report(
            "Table 2 agreement values: substituted by property suite "
            "(double-annotated data not published)",
            True,
        )

    def test_sequence_rows_out_of_scope(self):
        report(
            "Table 3/4 'sequence' rows: out of scope (neural tagger)",
            True,
        )
