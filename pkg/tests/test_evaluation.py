import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from accord.corpus import Lexicon, LexiconEntry
from accord.evaluation import (
    AnnotatedDescription,
    AnnotationRecord,
    PreferenceBallot,
    cohen_kappa,
    corpus_stats,
    f1_binary,
    fleiss_kappa,
    load_annotations,
    load_ballots,
    ols_slope,
    preference_agreement,
    preference_summary,
    validate_annotation,
)
from accord.extraction import RelationType

TABLE_STYLE_TEXT = (
    "word embedding is a word representation that captures semantic and"
    " syntactic similarities between words. it has been widely utilized for"
    " a variety of tasks, such as sentence classification, relation"
    " classification, and sentiment analysis, since the introduction of"
    " word2vec software."
)


def table_style_record(label=True, window_size=2, descriptions=None):
    if descriptions is None:
        descriptions = (
            AnnotatedDescription(
                target="sentence classification",
                relation=RelationType.IS_A,
                reference="task",
                text=(
                    "sentence classification is a task that word embedding has"
                    " been utilized for since the introduction of word2vec"
                    " software."
                ),
            ),
            AnnotatedDescription(
                target="sentence classification",
                relation=RelationType.COMPARE,
                reference="relation classification",
                text=(
                    "sentence classification is like relation classification in"
                    " that they are both tasks that word embedding has been used"
                    " for since the introduction of word2vec software."
                ),
            ),
            AnnotatedDescription(
                target="relation classification",
                relation=RelationType.COMPARE,
                reference="sentiment analysis",
                text=(
                    "relation classification is like sentiment analysis in that"
                    " they are both tasks that word embedding has been used for"
                    " since the introduction of word2vec software."
                ),
            ),
            AnnotatedDescription(
                target="word representation",
                relation=RelationType.USED_FOR,
                reference="sentence classification",
                text=(
                    "word representation has been used for sentence"
                    " classification since the introduction of word2vec"
                    " software."
                ),
            ),
        )
    return AnnotationRecord(
        context_id="c1",
        text=TABLE_STYLE_TEXT,
        window_size=window_size,
        target="word representation",
        label=label,
        annotator_id="ann-1",
        descriptions=descriptions,
    )


class TestValidateAnnotation:
    def test_table_style_record_clean(self):
        assert validate_annotation(table_style_record()) == []

    def test_empty_elaboration_for_is_a_flagged(self):
        record = table_style_record(
            descriptions=(
                AnnotatedDescription(
                    target="word embedding",
                    relation=RelationType.IS_A,
                    reference="word representation",
                    text="word embedding is a word representation.",
                ),
            )
        )
        violations = validate_annotation(record)
        assert any("elaboration" in v for v in violations)

    def test_used_for_merged_elaboration_allowed(self):
        record = table_style_record(
            descriptions=(
                AnnotatedDescription(
                    target="word representation",
                    relation=RelationType.USED_FOR,
                    reference="sentence classification",
                    text="word representation has been used for sentence classification.",
                ),
            )
        )
        assert validate_annotation(record) == []

    def test_unmentioned_reference_flagged_unless_relaxed(self):
        record = AnnotationRecord(
            context_id="c2",
            text="recurrent neural networks process sequences step by step.",
            window_size=1,
            target="recurrent neural networks",
            label=True,
            annotator_id="ann-1",
            descriptions=(
                AnnotatedDescription(
                    target="recurrent neural network",
                    relation=RelationType.IS_A,
                    reference="neural network",
                    text=(
                        "recurrent neural network is a neural network that"
                        " processes sequences step by step."
                    ),
                ),
            ),
        )
        strict = validate_annotation(record)
        assert any("reference" in v for v in strict)
        relaxed = validate_annotation(record, allow_head_noun_reference=True)
        assert relaxed == []

    def test_bad_window_size_flagged(self):
        record = table_style_record(window_size=3)
        assert any("window_size" in v for v in validate_annotation(record))

    def test_descriptions_on_negative_label_flagged(self):
        record = table_style_record(label=False)
        assert any("negative" in v for v in validate_annotation(record))

    def test_lexicon_membership_checked(self):
        lexicon = Lexicon([LexiconEntry("beam search", 1.0)])
        violations = validate_annotation(table_style_record(), lexicon)
        assert any("lexicon" in v for v in violations)


class TestCorpusStats:
    def test_hand_counted_example(self):
        records = [
            table_style_record(descriptions=table_style_record().descriptions[:2]),
            table_style_record(descriptions=table_style_record().descriptions[:3]),
            table_style_record(label=False, descriptions=()),
        ]
        stats = corpus_stats(records)
        assert stats.records == 3
        assert stats.positives == 2
        assert stats.negatives == 1
        assert stats.descriptions == 5

    def test_empty_input_all_zero(self):
        stats = corpus_stats([])
        assert (stats.records, stats.positives, stats.descriptions) == (0, 0, 0)

    def test_per_relation_and_window_breakdowns(self):
        stats = corpus_stats([table_style_record()])
        assert stats.descriptions_per_relation["compare"] == 2
        assert stats.windows_per_size == {2: 1}


class TestCohenKappa:
    def test_perfect_agreement(self):
        report = cohen_kappa([1, 1, 0, 0], [1, 1, 0, 0])
        assert report.kappa == 1.0
        assert report.n_items == 4

    def test_worked_example_zero(self):
        report = cohen_kappa([1, 0, 1, 0], [1, 1, 0, 0])
        assert abs(report.kappa) < 1e-12

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            cohen_kappa([1, 0], [1])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            cohen_kappa([], [])

    def test_degenerate_single_category(self):
        assert cohen_kappa([1, 1], [1, 1]).kappa == 1.0
        assert cohen_kappa([1, 1, 1], [1, 1, 0]).kappa == 0.0

    @given(
        st.lists(st.booleans(), min_size=1, max_size=50),
        st.randoms(use_true_random=False),
    )
    @settings(max_examples=100)
    def test_symmetric(self, a, rng):
        b = [rng.random() < 0.5 for _ in a]
        assert math.isclose(
            cohen_kappa(a, b).kappa, cohen_kappa(b, a).kappa, abs_tol=1e-12
        )

    def test_invariant_under_relabeling(self):
        a = [1, 0, 1, 1, 0]
        b = [1, 1, 0, 1, 0]
        swapped_a = ["x" if v else "y" for v in a]
        swapped_b = ["x" if v else "y" for v in b]
        assert math.isclose(
            cohen_kappa(a, b).kappa,
            cohen_kappa(swapped_a, swapped_b).kappa,
            abs_tol=1e-12,
        )


def _fleiss_oracle(matrix):
    """Direct transcription of the standard formula, kept independent of
    the implementation under test."""
    n_items = len(matrix)
    raters = sum(matrix[0])
    p_bar = 0.0
    for row in matrix:
        p_bar += (sum(v * v for v in row) - raters) / (raters * (raters - 1))
    p_bar /= n_items
    total = sum(sum(row) for row in matrix)
    p_e = sum(
        (sum(row[j] for row in matrix) / total) ** 2 for j in range(len(matrix[0]))
    )
    return (p_bar - p_e) / (1 - p_e)


class TestFleissKappa:
    def test_unanimous_is_one(self):
        report = fleiss_kappa([[3, 0], [0, 3], [3, 0]])
        assert report.kappa == 1.0

    def test_alternating_two_by_two_is_minus_one(self):
        report = fleiss_kappa([[1, 1], [1, 1]])
        assert abs(report.kappa + 1.0) < 1e-12

    def test_worked_three_item_fixture(self):
        matrix = [[3, 0], [2, 1], [0, 3]]
        report = fleiss_kappa(matrix)
        assert math.isclose(report.kappa, _fleiss_oracle(matrix), abs_tol=1e-12)
        assert math.isclose(report.kappa, 22 / 40, abs_tol=1e-12)

    def test_ragged_rater_counts_rejected(self):
        with pytest.raises(ValueError):
            fleiss_kappa([[2, 1], [1, 1]])

    def test_single_rater_rejected(self):
        with pytest.raises(ValueError):
            fleiss_kappa([[1, 0], [0, 1]])

    def test_random_matrices_match_oracle(self):
        rng = random.Random(11)
        for _ in range(200):
            raters = rng.randint(2, 6)
            categories = rng.randint(2, 4)
            rows = []
            for _ in range(rng.randint(1, 10)):
                row = [0] * categories
                for _ in range(raters):
                    row[rng.randrange(categories)] += 1
                rows.append(row)
            expected_denominator = 1 - sum(
                (sum(row[j] for row in rows) / (len(rows) * raters)) ** 2
                for j in range(categories)
            )
            report = fleiss_kappa(rows)
            if expected_denominator == 0:
                continue
            assert math.isclose(report.kappa, _fleiss_oracle(rows), abs_tol=1e-12)


class TestF1Binary:
    def test_baseline_formula(self):
        gold = [1] * 5 + [0] * 5
        report = f1_binary([1] * 10, gold)
        assert math.isclose(report.baseline_f1, 2 / 3, abs_tol=1e-12)

    def test_perfect_prediction(self):
        gold = [1, 0, 1, 1, 0]
        report = f1_binary(gold, gold)
        assert report.f1 == 1.0

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            f1_binary([1], [1, 0])

    def test_baseline_equals_explicit_all_positive(self):
        rng = random.Random(5)
        for _ in range(200):
            gold = [rng.random() < 0.4 for _ in range(rng.randint(1, 60))]
            report = f1_binary([rng.random() < 0.5 for _ in gold], gold)
            explicit = f1_binary([True] * len(gold), gold)
            assert math.isclose(report.baseline_f1, explicit.f1, abs_tol=1e-12)

    def test_zero_division_conventions(self):
        report = f1_binary([0, 0], [0, 0])
        assert report.precision == report.recall == report.f1 == 0.0


def ballot(participant, concept, choice="generate_stratify", votes=None, expertise=3):
    return PreferenceBallot(
        participant_id=participant,
        concept=concept,
        expertise=expertise,
        set_choice=choice,
        votes=votes or {},
    )


class TestPreferenceSummary:
    def test_unanimous_choice_counts(self):
        ballots = [ballot(f"p{i}", "bert") for i in range(3)]
        summary = preference_summary(ballots, n_boot=100, seed=0)
        assert summary.set_counts["bert"]["generate_stratify"] == 3
        assert summary.set_counts["bert"]["extract_stratify"] == 0

    def test_want_votes_counted(self):
        votes = {f"d{i}": "want" for i in range(3)}
        votes.update({f"d{i}": "neutral" for i in range(3, 6)})
        ballots = [ballot("p1", "bert", votes=votes)]
        summary = preference_summary(ballots, n_boot=100, seed=0)
        assert summary.mean_wanted[0] == 3.0

    def test_reordering_invariance(self):
        ballots = [
            ballot("p1", "bert"),
            ballot("p2", "bert", choice="generate_naive"),
            ballot("p1", "gpt", choice="extract_stratify"),
        ]
        forward = preference_summary(ballots, n_boot=200, seed=42)
        backward = preference_summary(list(reversed(ballots)), n_boot=200, seed=42)
        assert forward.variant_medians == backward.variant_medians
        assert forward.set_counts == backward.set_counts

    def test_seed_reproducibility(self):
        ballots = [ballot(f"p{i}", c) for i in range(4) for c in ("bert", "gpt")]
        first = preference_summary(ballots, n_boot=500, seed=7)
        second = preference_summary(ballots, n_boot=500, seed=7)
        assert first == second

    def test_empty_ballots_rejected(self):
        with pytest.raises(ValueError):
            preference_summary([])

    def test_expertise_validated(self):
        with pytest.raises(ValueError):
            ballot("p1", "bert", expertise=6)


class TestPreferenceAgreement:
    def test_unanimous_votes_kappa_one(self):
        votes_a = {"d1": "want", "d2": "not_want"}
        ballots = [
            ballot("p1", "bert", votes=votes_a),
            ballot("p2", "bert", votes=dict(votes_a)),
        ]
        reports = preference_agreement(ballots)
        assert reports["bert"].kappa == 1.0

    def test_collapsed_categories(self):
        ballots = [
            ballot("p1", "bert", votes={"d1": "neutral", "d2": "want"}),
            ballot("p2", "bert", votes={"d1": "not_want", "d2": "want"}),
        ]
        full = preference_agreement(ballots)
        collapsed = preference_agreement(ballots, collapse_to_binary=True)
        # neutral and not_want merge, so collapsed agreement is perfect
        assert collapsed["bert"].kappa == 1.0
        assert full["bert"].kappa < 1.0

    def test_differing_vote_sets_rejected(self):
        ballots = [
            ballot("p1", "bert", votes={"d1": "want"}),
            ballot("p2", "bert", votes={"d2": "want"}),
        ]
        with pytest.raises(ValueError):
            preference_agreement(ballots)


class TestOlsSlope:
    def test_constant_y_zero_slope(self):
        fit = ols_slope([1, 2, 3], [5, 5, 5])
        assert fit.slope == 0.0
        assert fit.intercept == 5.0

    def test_unit_line(self):
        fit = ols_slope([0, 1], [0, 1])
        assert fit.slope == 1.0 and fit.intercept == 0.0

    def test_hand_computed_fixture(self):
        fit = ols_slope([1, 2, 4], [2, 3, 6])
        assert math.isclose(fit.slope, 19 / 14, abs_tol=1e-12)
        assert math.isclose(fit.intercept, 0.5, abs_tol=1e-12)

    def test_constant_x_rejected(self):
        with pytest.raises(ValueError):
            ols_slope([2, 2, 2], [1, 2, 3])

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            ols_slope([1], [1, 2])


class TestFileFormats:
    def test_annotations_round_trip(self, tmp_path):
        path = tmp_path / "annotations.jsonl"
        path.write_text(
            '{"context_id": "c1", "text": "bert is a model that works.",'
            ' "window_size": 1, "target": "bert", "label": true,'
            ' "annotator_id": "a1", "descriptions": [{"target": "bert",'
            ' "relation": "is-a", "reference": "model",'
            ' "text": "bert is a model that works."}]}\n',
            encoding="utf-8",
        )
        records = load_annotations(path)
        assert len(records) == 1
        assert records[0].descriptions[0].relation is RelationType.IS_A

    def test_ballots_round_trip(self, tmp_path):
        path = tmp_path / "ballots.jsonl"
        path.write_text(
            '{"participant_id": "p1", "concept": "bert", "expertise": 4,'
            ' "set_choice": "generate_stratify", "votes": {"d1": "want"}}\n',
            encoding="utf-8",
        )
        ballots = load_ballots(path)
        assert ballots[0].votes == {"d1": "want"}
