"""Validation and statistics: annotation-schema checks against the
description criteria, corpus statistics, agreement coefficients (Cohen's
and Fleiss' kappa), binary classification F1 with the always-positive
baseline, user-preference summaries, and the agreement-vs-expertise
regression."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import CLOSE_MARKER, OPEN_MARKER, Lexicon, marked_span
from .extraction import FUNCTION_WORDS, RelationType
from .textnorm import normalize_concept, singularize_word, tokenize_with_spans

SET_VARIANTS = ("generate_stratify", "extract_stratify", "generate_naive")
VOTE_VALUES = ("want", "neutral", "not_want")


@dataclass(frozen=True)
class AnnotatedDescription:
    target: str
    relation: RelationType
    reference: str
    text: str


@dataclass(frozen=True)
class AnnotationRecord:
    context_id: str
    text: str
    window_size: int
    target: str
    label: bool
    annotator_id: str
    descriptions: tuple[AnnotatedDescription, ...] = ()


@dataclass(frozen=True)
class AgreementReport:
    kind: str
    kappa: float
    n_items: int


@dataclass(frozen=True)
class EvalReport:
    precision: float
    recall: float
    f1: float
    n: int
    baseline_f1: float


@dataclass(frozen=True)
class PreferenceBallot:
    participant_id: str
    concept: str
    expertise: int
    set_choice: str
    votes: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 1 <= self.expertise <= 5:
            raise ValueError(f"expertise must be in [1, 5], got {self.expertise}")
        if self.set_choice not in SET_VARIANTS:
            raise ValueError(f"unknown set variant {self.set_choice!r}")
        for vote in self.votes.values():
            if vote not in VOTE_VALUES:
                raise ValueError(f"unknown vote {vote!r}")


@dataclass(frozen=True)
class RegressionFit:
    slope: float
    intercept: float


@dataclass(frozen=True)
class CorpusStats:
    records: int
    positives: int
    negatives: int
    descriptions: int
    descriptions_per_relation: dict[str, int]
    windows_per_size: dict[int, int]

    def as_dict(self) -> dict:
        return {
            "records": self.records,
            "positives": self.positives,
            "negatives": self.negatives,
            "descriptions": self.descriptions,
            "descriptions_per_relation": dict(self.descriptions_per_relation),
            "windows_per_size": {str(k): v for k, v in self.windows_per_size.items()},
        }


# ---------------------------------------------------------------------------
# Annotation validation.
# ---------------------------------------------------------------------------

def _text_contains(text: str, phrase: str) -> bool:
    """Standalone containment on singularized token streams.

    Plural surface forms still count ("task" matches "tasks"), but an
    occurrence embedded in a longer compound does not: "neural network"
    inside "recurrent neural networks" is a mention of the longer concept,
    not of the reference. An occurrence stands alone when preceded by a
    function word, punctuation, or the text start.
    """
    tokens = tokenize_with_spans(text)
    stream = [singularize_word(t.norm) for t in tokens]
    needle = [singularize_word(t.norm) for t in tokenize_with_spans(phrase)]
    if not needle:
        return False
    for i in range(len(stream) - len(needle) + 1):
        if stream[i : i + len(needle)] != needle:
            continue
        if i == 0:
            return True
        previous = tokens[i - 1]
        gap = text[previous.char_end : tokens[i].char_start]
        if any(not c.isspace() for c in gap):
            return True
        if previous.norm in FUNCTION_WORDS:
            return True
    return False


def _has_elaboration(description: AnnotatedDescription) -> bool:
    """A description with no elaboration ends with its reference concept."""
    text = " ".join(description.text.lower().split()).rstrip(" .")
    reference = " ".join(description.reference.lower().split())
    return not text.endswith(reference)


def validate_annotation(
    rec: AnnotationRecord,
    lexicon: Lexicon | None = None,
    allow_head_noun_reference: bool = False,
) -> list[str]:
    """Check a labeled context and its hand-authored descriptions against
    the description criteria; violations come back as data, not errors."""
    violations: list[str] = []
    if rec.window_size not in (1, 2):
        violations.append(f"window_size {rec.window_size} not in (1, 2)")
    if rec.descriptions and not rec.label:
        violations.append("descriptions present on a negative-labeled context")
    if OPEN_MARKER in rec.text and CLOSE_MARKER in rec.text:
        plain, start, end = marked_span(rec.text)
        marked = plain[start:end]
        if normalize_concept(marked) != normalize_concept(rec.target):
            violations.append(
                f"marked target {marked!r} differs from record target {rec.target!r}"
            )
    if lexicon is not None and rec.target not in lexicon:
        violations.append(f"target {rec.target!r} not in lexicon")
    for i, description in enumerate(rec.descriptions):
        if not _text_contains(rec.text, description.target):
            violations.append(
                f"description {i}: target {description.target!r} not in context"
            )
        if not _text_contains(rec.text, description.reference):
            head = ""
            reference_tokens = tokenize_with_spans(description.reference)
            if reference_tokens:
                head = singularize_word(reference_tokens[-1].norm)
            context_words = {
                singularize_word(t.norm) for t in tokenize_with_spans(rec.text)
            }
            # The relaxation accepts the head noun even embedded in a longer
            # compound ("network" inside "recurrent neural networks").
            if not (allow_head_noun_reference and head and head in context_words):
                violations.append(
                    f"description {i}: reference {description.reference!r} "
                    "not in context"
                )
        if description.relation is not RelationType.USED_FOR and not _has_elaboration(
            description
        ):
            violations.append(
                f"description {i}: empty elaboration for "
                f"{description.relation.value} description"
            )
    return violations


def corpus_stats(records: Sequence[AnnotationRecord]) -> CorpusStats:
    positives = sum(1 for r in records if r.label)
    per_relation: Counter[str] = Counter()
    per_window: Counter[int] = Counter()
    descriptions = 0
    for record in records:
        per_window[record.window_size] += 1
        descriptions += len(record.descriptions)
        for description in record.descriptions:
            per_relation[description.relation.value] += 1
    return CorpusStats(
        records=len(records),
        positives=positives,
        negatives=len(records) - positives,
        descriptions=descriptions,
        descriptions_per_relation=dict(per_relation),
        windows_per_size=dict(per_window),
    )


# ---------------------------------------------------------------------------
# Agreement coefficients.
# ---------------------------------------------------------------------------

def cohen_kappa(a: Sequence, b: Sequence) -> AgreementReport:
    """Chance-corrected two-annotator agreement over paired labels.

    kappa = (p_o - p_e) / (1 - p_e) with p_e from the marginal label
    frequencies. Degenerate p_e = 1 is defined as 1.0 under perfect
    observed agreement, else 0.0.
    """
    if len(a) != len(b):
        raise ValueError(f"label lists differ in length: {len(a)} vs {len(b)}")
    if not a:
        raise ValueError("label lists must be nonempty")
    n = len(a)
    observed = sum(1 for x, y in zip(a, b) if x == y) / n
    counts_a = Counter(a)
    counts_b = Counter(b)
    expected = sum(
        (counts_a[label] / n) * (counts_b[label] / n)
        for label in set(counts_a) | set(counts_b)
    )
    if expected >= 1.0:
        kappa = 1.0 if observed == 1.0 else 0.0
    else:
        kappa = (observed - expected) / (1.0 - expected)
    return AgreementReport(kind="cohen", kappa=kappa, n_items=n)


def fleiss_kappa(counts: Sequence[Sequence[int]]) -> AgreementReport:
    """Multi-rater agreement from an items x categories vote-count matrix.

    Every item must carry the same number of ratings n >= 2. Unanimity
    across categories yields exactly 1.0; the degenerate all-one-category
    case is likewise defined as 1.0.
    """
    if not counts:
        raise ValueError("vote-count matrix must be nonempty")
    rows = [list(row) for row in counts]
    width = len(rows[0])
    if any(len(row) != width for row in rows):
        raise ValueError("vote-count rows must have equal width")
    if any(v < 0 for row in rows for v in row):
        raise ValueError("vote counts must be nonnegative")
    raters = sum(rows[0])
    if raters < 2:
        raise ValueError(f"need >= 2 ratings per item, got {raters}")
    if any(sum(row) != raters for row in rows):
        raise ValueError("ragged rater counts: all items need the same n")
    n_items = len(rows)
    p_observed = sum(
        (sum(v * v for v in row) - raters) / (raters * (raters - 1)) for row in rows
    ) / n_items
    total = n_items * raters
    proportions = [sum(row[j] for row in rows) / total for j in range(width)]
    p_expected = sum(p * p for p in proportions)
    if p_expected >= 1.0:
        kappa = 1.0 if p_observed == 1.0 else 0.0
    else:
        kappa = (p_observed - p_expected) / (1.0 - p_expected)
    return AgreementReport(kind="fleiss", kappa=kappa, n_items=n_items)


# ---------------------------------------------------------------------------
# Classification metrics.
# ---------------------------------------------------------------------------

def f1_binary(pred: Sequence, gold: Sequence) -> EvalReport:
    """Precision/recall/F1 over the positive class plus the F1 of the
    always-positive baseline, 2p / (n + p)."""
    if len(pred) != len(gold):
        raise ValueError(f"label lists differ in length: {len(pred)} vs {len(gold)}")
    if not pred:
        raise ValueError("label lists must be nonempty")
    tp = sum(1 for p, g in zip(pred, gold) if p and g)
    fp = sum(1 for p, g in zip(pred, gold) if p and not g)
    fn = sum(1 for p, g in zip(pred, gold) if not p and g)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    n = len(gold)
    p = sum(1 for g in gold if g)
    baseline = 2 * p / (n + p) if n + p else 0.0
    return EvalReport(precision=precision, recall=recall, f1=f1, n=n, baseline_f1=baseline)


# ---------------------------------------------------------------------------
# User-study summaries.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PreferenceSummary:
    set_counts: dict[str, dict[str, int]]
    variant_medians: dict[str, tuple[float, float, float]]
    mean_wanted: tuple[float, float, float]

    def as_dict(self) -> dict:
        return {
            "set_counts": {c: dict(v) for c, v in self.set_counts.items()},
            "variant_medians": {
                variant: {"median": m, "ci95": [lo, hi]}
                for variant, (m, lo, hi) in self.variant_medians.items()
            },
            "mean_wanted": {
                "mean": self.mean_wanted[0],
                "ci95": [self.mean_wanted[1], self.mean_wanted[2]],
            },
        }


def _bootstrap_ci(
    values: Sequence[float],
    statistic,
    n_boot: int,
    rng: np.random.Generator,
) -> tuple[float, float]:
    data = np.asarray(values, dtype=float)
    if len(data) == 1:
        return float(data[0]), float(data[0])
    stats = np.empty(n_boot)
    for i in range(n_boot):
        sample = rng.choice(data, size=len(data), replace=True)
        stats[i] = statistic(sample)
    return float(np.percentile(stats, 2.5)), float(np.percentile(stats, 97.5))


def preference_summary(
    ballots: Sequence[PreferenceBallot],
    n_boot: int = 10_000,
    seed: int | None = None,
) -> PreferenceSummary:
    """Per-concept set-variant preference counts, per-variant medians with
    bootstrap 95% CIs (percentile method), and the mean number of wanted
    descriptions per (participant, concept)."""
    if not ballots:
        raise ValueError("ballots must be nonempty")
    rng = np.random.default_rng(seed)
    concepts = sorted({b.concept for b in ballots})
    set_counts: dict[str, dict[str, int]] = {
        concept: {variant: 0 for variant in SET_VARIANTS} for concept in concepts
    }
    for ballot in ballots:
        set_counts[ballot.concept][ballot.set_choice] += 1
    variant_medians: dict[str, tuple[float, float, float]] = {}
    for variant in SET_VARIANTS:
        per_concept = [set_counts[c][variant] for c in concepts]
        median = float(np.median(per_concept))
        lo, hi = _bootstrap_ci(per_concept, np.median, n_boot, rng)
        variant_medians[variant] = (median, lo, hi)
    wanted = [
        sum(1 for vote in ballot.votes.values() if vote == "want")
        for ballot in ballots
    ]
    mean = float(np.mean(wanted))
    lo, hi = _bootstrap_ci(wanted, np.mean, n_boot, rng)
    return PreferenceSummary(
        set_counts=set_counts,
        variant_medians=variant_medians,
        mean_wanted=(mean, lo, hi),
    )


def preference_agreement(
    ballots: Sequence[PreferenceBallot],
    collapse_to_binary: bool = False,
) -> dict[str, AgreementReport]:
    """Per-concept Fleiss' kappa over the per-description preference votes.

    Items are the concept's descriptions, categories the three vote values
    (or want/other when collapsed); every participant must have voted on
    the same description set.
    """
    by_concept: dict[str, list[PreferenceBallot]] = {}
    for ballot in ballots:
        by_concept.setdefault(ballot.concept, []).append(ballot)
    reports: dict[str, AgreementReport] = {}
    for concept, group in sorted(by_concept.items()):
        description_ids = sorted(group[0].votes)
        for ballot in group:
            if sorted(ballot.votes) != description_ids:
                raise ValueError(
                    f"ballots for {concept!r} vote on differing description sets"
                )
        categories: tuple[str, ...] = VOTE_VALUES
        if collapse_to_binary:
            categories = ("want", "other")
        matrix = []
        for description_id in description_ids:
            row = [0] * len(categories)
            for ballot in group:
                vote = ballot.votes[description_id]
                if collapse_to_binary:
                    vote = "want" if vote == "want" else "other"
                row[categories.index(vote)] += 1
            matrix.append(row)
        reports[concept] = fleiss_kappa(matrix)
    return reports


def ols_slope(x: Sequence[float], y: Sequence[float]) -> RegressionFit:
    """Exact least-squares line through the points; constant x is an error."""
    if len(x) != len(y):
        raise ValueError(f"coordinate lists differ in length: {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise ValueError("need at least 2 points")
    mean_x = sum(x) / len(x)
    mean_y = sum(y) / len(y)
    sxx = sum((xi - mean_x) ** 2 for xi in x)
    if sxx == 0:
        raise ValueError("x values are constant; slope undefined")
    sxy = sum((xi - mean_x) * (yi - mean_y) for xi, yi in zip(x, y))
    slope = sxy / sxx
    return RegressionFit(slope=slope, intercept=mean_y - slope * mean_x)


# ---------------------------------------------------------------------------
# File formats.
# ---------------------------------------------------------------------------

def load_annotations(path: str | Path) -> list[AnnotationRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            payload = json.loads(line)
            records.append(
                AnnotationRecord(
                    context_id=payload["context_id"],
                    text=payload["text"],
                    window_size=payload["window_size"],
                    target=payload["target"],
                    label=payload["label"],
                    annotator_id=payload["annotator_id"],
                    descriptions=tuple(
                        AnnotatedDescription(
                            target=d["target"],
                            relation=RelationType.from_wire(d["relation"]),
                            reference=d["reference"],
                            text=d["text"],
                        )
                        for d in payload.get("descriptions", [])
                    ),
                )
            )
    return records


def load_ballots(path: str | Path) -> list[PreferenceBallot]:
    ballots = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            payload = json.loads(line)
            ballots.append(
                PreferenceBallot(
                    participant_id=payload["participant_id"],
                    concept=payload["concept"],
                    expertise=payload["expertise"],
                    set_choice=payload["set_choice"],
                    votes=dict(payload.get("votes", {})),
                )
            )
    return ballots
