import pytest

from accord.corpus import DemarcatedContext, demarcate
from accord.extraction import (
    ExtractorConfig,
    RelationType,
    ScorerProtocolError,
    ScorerTransportError,
    classify_binary,
    classify_binary_batch,
    classify_relations,
    find_structures,
)
from conftest import make_context

RULE = ExtractorConfig(backend="rule")


def _demarcated(text: str, concept: str, context_id: str = "ctx-1") -> DemarcatedContext:
    context, mention = make_context(text, concept, context_id)
    return demarcate(context, mention)


class TestRuleBinary:
    def test_is_a_pattern_positive(self):
        dem = _demarcated(
            "variational autoencoder is a generative model that works well",
            "variational autoencoder",
        )
        prediction = classify_binary(dem, RULE)
        assert prediction.label is True
        assert prediction.score == 1.0

    def test_no_pattern_negative(self):
        dem = _demarcated("we evaluate beam search extensively", "beam search")
        prediction = classify_binary(dem, RULE)
        assert prediction.label is False
        assert prediction.score == 0.0

    def test_label_consistent_with_threshold(self):
        dem = _demarcated("we evaluate beam search extensively", "beam search")
        prediction = classify_binary(dem, RULE)
        assert prediction.label == (prediction.score >= RULE.binary_threshold)

    def test_deterministic(self):
        dem = _demarcated(
            "beam search is a decoding algorithm that explores candidates",
            "beam search",
        )
        assert classify_binary(dem, RULE) == classify_binary(dem, RULE)


class TestRuleRelations:
    def test_coordination_predicts_compare(self):
        dem = _demarcated(
            "models, such as variational autoencoders (vaes) and generative"
            " adversarial networks, learn manifolds.",
            "variational autoencoders",
        )
        result = classify_relations(dem, RULE)
        assert RelationType.COMPARE in result.predicted

    def test_utilized_for_predicts_used_for(self):
        dem = _demarcated(
            "word representation has been widely utilized for a variety of tasks.",
            "word representation",
        )
        result = classify_relations(dem, RULE)
        assert RelationType.USED_FOR in result.predicted

    def test_all_four_scores_populated(self):
        dem = _demarcated("we evaluate beam search extensively", "beam search")
        result = classify_relations(dem, RULE)
        assert set(result.scores) == set(RelationType)

    def test_part_of_direct(self):
        dem = _demarcated(
            "the attention mechanism is a component of the transformer"
            " architecture used everywhere.",
            "attention mechanism",
        )
        result = classify_relations(dem, RULE)
        assert RelationType.PART_OF in result.predicted

    def test_consists_of_reversed(self):
        dem = _demarcated(
            "the transformer consists of an encoder and a decoder.", "decoder"
        )
        result = classify_relations(dem, RULE)
        assert RelationType.PART_OF in result.predicted

    def test_are_both_compares(self):
        dem = _demarcated(
            "beam search and importance sampling are both approximate methods.",
            "beam search",
        )
        result = classify_relations(dem, RULE)
        assert RelationType.COMPARE in result.predicted


class TestStructures:
    def test_hypernym_group_recovered(self):
        dem = _demarcated(
            "recently, deep generative models such as variational autoencoders"
            " (vaes) have become increasingly popular for modelling real-valued"
            " data, such as images.",
            "variational autoencoders",
        )
        structures = find_structures(dem.text_with_markers)
        isa = [s for s in structures if s.relation is RelationType.IS_A]
        assert isa and isa[0].reference == "deep generative models"
        assert "have become increasingly popular" in isa[0].predicate

    def test_compare_partner_after_target(self):
        dem = _demarcated(
            "some such models, including variational autoencoders (vaes) and"
            " generative adversarial networks (gans), learn an explicit"
            " low-dimensional manifold.",
            "variational autoencoders",
        )
        structures = find_structures(dem.text_with_markers)
        compare = [s for s in structures if s.relation is RelationType.COMPARE]
        assert compare and compare[0].reference == "generative adversarial networks"

    def test_compare_partner_before_target(self):
        dem = _demarcated(
            "algorithms, including principal component analysis, autoencoders"
            " (ae), variational autoencoders (vae), and their sparse variants.",
            "variational autoencoders",
        )
        structures = find_structures(dem.text_with_markers)
        compare = [s for s in structures if s.relation is RelationType.COMPARE]
        assert compare and compare[0].reference == "autoencoders"

    def test_citation_brackets_skipped_in_predicate(self):
        dem = _demarcated(
            "models such as variational autoencoders [10] learn manifolds"
            " [3, 4].",
            "variational autoencoders",
        )
        structures = find_structures(dem.text_with_markers)
        isa = [s for s in structures if s.relation is RelationType.IS_A]
        assert isa[0].predicate == "learn manifolds"


class TestRemoteBackend:
    def _config(self, url, **kwargs):
        return ExtractorConfig(backend="remote", endpoint=url, **kwargs)

    def test_binary_score_above_threshold(self, stub_server):
        def respond(payload):
            item = payload["items"][0]
            return 200, {"items": [{"context_id": item["context_id"], "score": 0.9}]}

        server = stub_server(respond)
        dem = _demarcated("anything goes here", "anything")
        prediction = classify_binary(dem, self._config(server.url))
        assert prediction.label is True and prediction.score == 0.9

    def test_relations_threshold_arithmetic(self, stub_server):
        def respond(payload):
            item = payload["items"][0]
            return 200, {
                "items": [
                    {
                        "context_id": item["context_id"],
                        "scores": {
                            "is-a": 0.9,
                            "compare": 0.6,
                            "part-of": 0.1,
                            "used-for": 0.2,
                        },
                    }
                ]
            }

        server = stub_server(respond)
        dem = _demarcated("anything goes here", "anything")
        result = classify_relations(dem, self._config(server.url))
        assert result.predicted == frozenset(
            {RelationType.IS_A, RelationType.COMPARE}
        )

    def test_malformed_payload_is_protocol_error(self, stub_server):
        server = stub_server(lambda payload: (200, {"unexpected": True}))
        dem = _demarcated("anything goes here", "anything", context_id="ctx-9")
        with pytest.raises(ScorerProtocolError) as excinfo:
            classify_binary(dem, self._config(server.url))
        assert excinfo.value.context_id == "ctx-9"

    def test_score_out_of_range_rejected(self, stub_server):
        def respond(payload):
            item = payload["items"][0]
            return 200, {"items": [{"context_id": item["context_id"], "score": 1.7}]}

        server = stub_server(respond)
        dem = _demarcated("anything goes here", "anything")
        with pytest.raises(ScorerProtocolError):
            classify_binary(dem, self._config(server.url))

    def test_transient_500s_retried(self, stub_server):
        calls = {"n": 0}

        def respond(payload):
            calls["n"] += 1
            if calls["n"] < 3:
                return 500, {"error": "boom"}
            item = payload["items"][0]
            return 200, {"items": [{"context_id": item["context_id"], "score": 0.8}]}

        server = stub_server(respond)
        dem = _demarcated("anything goes here", "anything")
        prediction = classify_binary(dem, self._config(server.url, max_attempts=3))
        assert prediction.score == 0.8
        assert calls["n"] == 3

    def test_unreachable_carries_context_id(self):
        cfg = self._config("http://127.0.0.1:1/score", max_attempts=2, timeout_s=0.2)
        dem = _demarcated("anything goes here", "anything", context_id="ctx-7")
        with pytest.raises(ScorerTransportError) as excinfo:
            classify_binary(dem, cfg)
        assert excinfo.value.context_id == "ctx-7"

    def test_batch_isolates_failures(self, stub_server):
        def respond(payload):
            item = payload["items"][0]
            if item["context_id"] == "bad":
                return 200, {"items": []}
            return 200, {"items": [{"context_id": item["context_id"], "score": 0.6}]}

        server = stub_server(respond)
        items = [
            _demarcated("one text here", "one", context_id="ok-1"),
            _demarcated("two text here", "two", context_id="bad"),
            _demarcated("three text here", "three", context_id="ok-2"),
        ]
        results, failures = classify_binary_batch(items, self._config(server.url))
        assert {r.context_id for r in results} == {"ok-1", "ok-2"}
        assert [f.context_id for f in failures] == ["bad"]


class TestConfig:
    def test_thresholds_validated(self):
        with pytest.raises(ValueError):
            ExtractorConfig(binary_threshold=0.0)
        with pytest.raises(ValueError):
            ExtractorConfig(relation_threshold=1.0)

    def test_remote_requires_endpoint(self):
        with pytest.raises(ValueError):
            ExtractorConfig(backend="remote")

    def test_unknown_backend_rejected(self):
        with pytest.raises(ValueError):
            ExtractorConfig(backend="magic")
