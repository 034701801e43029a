"""End-to-end extraction mechanics and graph export."""

import pytest

from ctie.corpus import NO_RELATION, OntologySchema, load_corpus
from ctie.errors import EmptyInput, ModelNotLoaded, UnknownFormat
from ctie.evaluation import SpanPrediction
from ctie.extract import (
    ExtractionResult,
    Extractor,
    Triple,
    export_graph,
    import_graph,
)
from ctie.model import ModelConfig, init_params, save_checkpoint
from ctie.mslr import build_vocab

from helpers import SMOKE_CORPUS


@pytest.fixture(scope="module")
def extractor():
    corpus = load_corpus(SMOKE_CORPUS, OntologySchema.default())
    vocab = build_vocab(corpus.sentences)
    config = ModelConfig(
        vocab_size=len(vocab),
        num_ner_labels=corpus.types.num_bio_labels,
        num_relations=corpus.types.num_relations,
        num_entity_types=corpus.types.num_entity_types,
        embed_dim=8, hidden_dim=4, dropout=0.0,
    )
    params = init_params(config, seed=77)
    return Extractor(
        params=params, config=config, vocab=vocab, types=corpus.types,
        ontology=OntologySchema.default(),
    )


def g_span(i, s, e, t):
    return SpanPrediction(i, s, e, t)


class TestExtract:
    def test_empty_input(self, extractor):
        with pytest.raises(EmptyInput):
            extractor.extract_text("   ")

    def test_fewer_than_two_entities_yields_no_triples(self, extractor):
        result = extractor.extract_tokens(
            ("just", "words"), spans=[g_span(0, 0, 1, "Tool")]
        )
        assert result.triples == []
        assert len(result.spans) == 1

    def test_confidence_floor_above_one_drops_everything(self, extractor):
        spans = [g_span(0, 0, 1, "HackOrg"), g_span(0, 2, 3, "Tool")]
        result = extractor.extract_tokens(
            ("APT28", "uses", "Mimikatz"), spans=spans, confidence_floor=1.0 + 1e-9
        )
        assert result.triples == []
        assert len(result.dropped) == 2

    def test_deterministic(self, extractor):
        tokens = tuple("APT28 used Mimikatz to target banking networks".split())
        spans = [g_span(0, 0, 1, "HackOrg"), g_span(0, 2, 3, "Tool"),
                 g_span(0, 5, 7, "Org")]
        a = extractor.extract_tokens(tokens, spans=spans)
        b = extractor.extract_tokens(tokens, spans=spans)
        assert [t.key for t in a.triples] == [t.key for t in b.triples]
        assert [t.confidence for t in a.triples] == [t.confidence for t in b.triples]

    def test_every_pair_classified(self, extractor):
        tokens = tuple("APT28 used Mimikatz against banks".split())
        spans = [g_span(0, 0, 1, "HackOrg"), g_span(0, 2, 3, "Tool"),
                 g_span(0, 4, 5, "Org")]
        result = extractor.extract_tokens(tokens, spans=spans)
        assert len(result.triples) + len(result.dropped) == 6

    def test_triples_never_no_relation_and_confidence_positive(self, extractor):
        tokens = tuple("APT28 used Mimikatz against banks in 2014".split())
        spans = [g_span(0, 0, 1, "HackOrg"), g_span(0, 2, 3, "Tool"),
                 g_span(0, 4, 5, "Org"), g_span(0, 6, 7, "Time")]
        result = extractor.extract_tokens(tokens, spans=spans)
        for t in result.triples:
            assert t.relation != NO_RELATION
            assert 0.0 < t.confidence <= 1.0

    def test_ontology_filter_invariant(self, extractor):
        # with the filter on, every emitted triple satisfies domain/range
        schema = extractor.ontology
        tokens = tuple("APT28 used Mimikatz against banks in 2014 says FireEye".split())
        spans = [g_span(0, 0, 1, "HackOrg"), g_span(0, 2, 3, "Tool"),
                 g_span(0, 4, 5, "Org"), g_span(0, 6, 7, "Time"),
                 g_span(0, 8, 9, "SecTeam")]
        result = extractor.extract_tokens(tokens, spans=spans, ontology_filter=True)
        for t in result.triples:
            assert schema.admits(t.relation, t.head_type, t.tail_type)

    def test_decoded_spans_used_when_none_supplied(self, extractor):
        result = extractor.extract_text("APT28 used Mimikatz against banks")
        assert isinstance(result, ExtractionResult)
        for t in result.triples:
            span_keys = {(s.start, s.end) for s in result.spans}
            assert t.head_span in span_keys and t.tail_span in span_keys

    def test_surface_text_joins_tokens(self, extractor):
        tokens = tuple("Cozy Bear used Cobalt Strike".split())
        spans = [g_span(0, 0, 2, "HackOrg"), g_span(0, 3, 5, "Tool")]
        result = extractor.extract_tokens(tokens, spans=spans)
        surfaces = {t.head for t in result.triples} | {t.tail for t in result.triples}
        if surfaces:
            assert surfaces <= {"Cozy Bear", "Cobalt Strike"}

    def test_model_not_loaded(self):
        bare = Extractor(params=None, config=None, vocab=None, types=None,
                         ontology=OntologySchema.default())
        with pytest.raises(ModelNotLoaded):
            bare.extract_text("anything")

    def test_unknown_span_type_rejected(self, extractor):
        from ctie.errors import SchemaError

        spans = [g_span(0, 0, 1, "HackOrg"), g_span(0, 2, 3, "NotAType")]
        with pytest.raises(SchemaError):
            extractor.extract_tokens(("a", "b", "c"), spans=spans)

    def test_checkpoint_round_trip(self, extractor, tmp_path):
        path = tmp_path / "model.ckpt"
        save_checkpoint(
            path, extractor.params, extractor.config,
            extras={
                "vocab": extractor.vocab.to_list(),
                "types": extractor.types.to_dict(),
            },
        )
        loaded = Extractor.from_checkpoint(path)
        a = extractor.extract_text("APT28 used Mimikatz against banks")
        b = loaded.extract_text("APT28 used Mimikatz against banks")
        assert [t.key for t in a.triples] == [t.key for t in b.triples]


def make_triple(head, head_type, rel, tail, tail_type, conf=0.9, sent=0):
    return Triple(
        head=head, head_type=head_type, relation=rel, tail=tail,
        tail_type=tail_type, confidence=conf, sentence_index=sent,
        head_span=(0, 1), tail_span=(2, 3),
    )


def wrap(triples, sent=0):
    return ExtractionResult(
        sentence_index=sent, tokens=("x",), spans=[], triples=list(triples)
    )


class TestExportGraph:
    def test_one_triple_two_nodes_one_edge(self):
        blob = export_graph([wrap([make_triple("APT28", "HackOrg", "uses", "Mimikatz", "Tool")])])
        graph = import_graph(blob)
        assert graph == [("APT28", "HackOrg", "uses", "Mimikatz", "Tool")]
        import json

        doc = json.loads(blob)
        assert len(doc["nodes"]) == 2
        assert len(doc["edges"]) == 1

    def test_shared_head_deduplicated(self):
        triples = [
            make_triple("APT28", "HackOrg", "uses", "Mimikatz", "Tool"),
            make_triple("APT28", "HackOrg", "targets", "banks", "Org"),
        ]
        import json

        doc = json.loads(export_graph([wrap(triples)]))
        assert len(doc["nodes"]) == 3
        assert len(doc["edges"]) == 2

    def test_empty_results_are_valid_documents(self):
        import json

        doc = json.loads(export_graph([]))
        assert doc == {"edges": [], "nodes": []}
        csv_blob = export_graph([], fmt="csv").decode()
        assert csv_blob.splitlines()[0].startswith("head,")

    def test_csv_columns(self):
        blob = export_graph(
            [wrap([make_triple("APT28", "HackOrg", "uses", "Mimikatz", "Tool", conf=0.75)])],
            fmt="csv",
        ).decode()
        lines = blob.splitlines()
        assert lines[0] == "head,head_type,relation,tail,tail_type,confidence,sentence_id"
        assert lines[1] == "APT28,HackOrg,uses,Mimikatz,Tool,0.75,0"

    def test_round_trip_multiset(self):
        triples = [
            make_triple("APT28", "HackOrg", "uses", "Mimikatz", "Tool"),
            make_triple("APT28", "HackOrg", "uses", "Mimikatz", "Tool", sent=1),
            make_triple("banks", "Org", "targetedBy", "APT28", "HackOrg"),
        ]
        results = [wrap([t], sent=t.sentence_index) for t in triples]
        rebuilt = import_graph(export_graph(results))
        assert sorted(rebuilt) == sorted(t.key for t in triples)

    def test_unknown_format(self):
        with pytest.raises(UnknownFormat):
            export_graph([], fmt="graphml")

    def test_deterministic_bytes(self):
        triples = [make_triple("A", "Org", "locatedAt", "B", "Area")]
        results = [wrap(triples)]
        assert export_graph(results) == export_graph(results)
