import json

from conftest import make_corpus, make_sentence
from nestrec.corpus import Corpus, Document, EntitySpan
from nestrec.distant import (
    proportions_tsv,
    term_network,
    treemap,
    type_proportions,
)


def pp_sentence(nouns, sent_id="s1"):
    """'place of X' spans headed by 'place' for each X."""
    spec = [
        ("place", "place", "NOUN", 0, "root"),
        ("of", "of", "ADP", 1, "case"),
        (nouns, nouns, "NOUN", 1, "nmod"),
    ]
    return make_sentence(
        spec, sent_id=sent_id, entities=[EntitySpan(1, 3, "place", 1, 1)]
    )


class TestTermNetwork:
    def test_absent_lemma_empty(self):
        corpus = make_corpus([pp_sentence("dwelling")])
        net = term_network(corpus, "nonexistent")
        assert net.nodes == {}
        assert net.edges == {}

    def test_hand_counted_example(self):
        corpus = make_corpus(
            [pp_sentence("dwelling", "s1"), pp_sentence("wedding", "s2")]
        )
        net = term_network(corpus, "place")
        assert net.nodes["of"] == 2
        assert net.nodes["place"] == 2
        assert net.edges[("place", "of")] == 2
        assert net.edges[("of", "dwelling")] == 1

    def test_focus_form_frequency_equals_span_count(self):
        corpus = make_corpus(
            [pp_sentence("dwelling", "s1"), pp_sentence("wedding", "s2")]
        )
        net = term_network(corpus, "place")
        n_spans = sum(
            1
            for _, s in corpus.sentences()
            for sp in s.entities
            if s.token(sp.head).lemma == "place"
        )
        assert net.nodes["place"] == n_spans

    def test_json_schema(self):
        corpus = make_corpus([pp_sentence("dwelling")])
        data = json.loads(term_network(corpus, "place").to_json())
        assert data["focus"] == "place"
        assert {"word", "count"} <= set(data["nodes"][0])
        assert {"from", "to", "count"} <= set(data["edges"][0])


class TestTreemap:
    def test_empty_corpus(self):
        corpus = make_corpus([make_sentence([("x", "x", "NOUN", 0, "root")])])
        root = treemap(corpus)
        assert root.count == 0
        assert root.children == []

    def test_named_split_and_counts(self):
        named = make_sentence(
            [("John", "John", "PROPN", 0, "root")],
            sent_id="s1",
            entities=[EntitySpan(1, 1, "person", 1, 1)],
        )
        common1 = pp_sentence("dwelling", "s2")
        common2 = pp_sentence("wedding", "s3")
        root = treemap(make_corpus([named, common1, common2]))
        by_label = {c.label: c for c in root.children}
        assert by_label["named"].count == 1
        assert by_label["non-named"].count == 2
        person = {c.label: c for c in by_label["named"].children}["person"]
        assert person.children[0].label == "John"
        assert person.children[0].count == 1

    def test_total_equals_mention_count(self):
        sents = [pp_sentence("dwelling", "s1"), pp_sentence("wedding", "s2")]
        corpus = make_corpus(sents)
        total_mentions = sum(len(s.entities) for _, s in corpus.sentences())
        assert treemap(corpus).count == total_mentions


class TestTypeProportions:
    def two_type_corpus(self):
        person = make_sentence(
            [("rome", "rome", "NOUN", 0, "root")],
            sent_id="s1",
            entities=[EntitySpan(1, 1, "person", 1, 1)],
        )
        abstract = make_sentence(
            [("agape", "agape", "NOUN", 0, "root")],
            sent_id="s2",
            entities=[EntitySpan(1, 1, "abstract", 1, 1)],
        )
        return make_corpus([person, abstract])

    def test_even_split(self):
        rows = type_proportions(self.two_type_corpus())
        assert len(rows) == 1
        row = rows[0]
        assert row.percentages["person"] == 50.0
        assert row.percentages["abstract"] == 50.0
        assert row.person_abstract_ratio == 1.0

    def test_zero_entity_document(self):
        corpus = make_corpus([make_sentence([("x", "x", "NOUN", 0, "root")])])
        row = type_proportions(corpus)[0]
        assert row.percentages == {}
        assert row.person_abstract_ratio is None
        assert row.ratio_str() == "n/a"

    def test_percentages_sum_to_hundred(self):
        rows = type_proportions(self.two_type_corpus())
        assert abs(sum(rows[0].percentages.values()) - 100.0) < 0.01

    def test_group_by_document(self):
        c = self.two_type_corpus()
        doc = c.documents[0]
        split = Corpus(
            corpus_id="c",
            documents=(
                Document("c:d1", "c", (doc.sentences[0],)),
                Document("c:d2", "c", (doc.sentences[1],)),
            ),
        )
        rows = type_proportions(split, group_by="document")
        assert {r.group for r in rows} == {"c:d1", "c:d2"}

    def test_tsv_shape(self):
        tsv = proportions_tsv(type_proportions(self.two_type_corpus()))
        header, row = tsv.strip().split("\n")
        assert header.split("\t")[0] == "group"
        assert header.split("\t")[-1] == "person_abstract_ratio"
        assert row.split("\t")[-1] == "1.00"
