"""Stratified description-set selection: lexicon-filter references, rank
them by candidate frequency, keep the best-scored description per
(target, reference, relation) triple, and assemble the final set. Also
computes per-relation diversity metrics over the candidate pool."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import Lexicon
from .extraction import RELATION_ORDER, RelationType
from .textnorm import normalize_concept


@dataclass(frozen=True)
class DescriptionRecord:
    description_id: str
    target: str
    relation: RelationType
    reference: str
    elaboration: str
    text: str
    context_id: str
    paper_id: str
    score: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must be in [0, 1], got {self.score}")


@dataclass(frozen=True)
class SelectionConfig:
    k: int = 3
    relations: tuple[RelationType, ...] = (RelationType.COMPARE, RelationType.IS_A)
    set_size_cap: int | None = None

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if not self.relations:
            raise ValueError("relations must be nonempty")
        if len(set(self.relations)) != len(self.relations):
            raise ValueError("relations must be duplicate-free")
        if self.set_size_cap is not None and self.set_size_cap < 1:
            raise ValueError("set_size_cap must be positive when set")


@dataclass(frozen=True)
class DescriptionSet:
    target: str
    entries: tuple[DescriptionRecord, ...]
    produced_with: SelectionConfig


@dataclass(frozen=True)
class DiversityCell:
    candidate_count: int
    unique_reference_count: int


@dataclass(frozen=True)
class DiversityReport:
    cells: dict[tuple[str, RelationType], DiversityCell] = field(default_factory=dict)

    def cell(self, target: str, relation: RelationType) -> DiversityCell:
        return self.cells.get(
            (normalize_concept(target), relation), DiversityCell(0, 0)
        )


def _norm_ref(record: DescriptionRecord) -> str:
    return normalize_concept(record.reference)


def _matches_target(record: DescriptionRecord, target: str) -> bool:
    return normalize_concept(record.target) == normalize_concept(target)


def filter_by_lexicon(
    descs: Sequence[DescriptionRecord], lexicon: Lexicon
) -> list[DescriptionRecord]:
    """Keep records whose reference is a lexicon concept; comparison is on
    normalized (lowercase, head-singularized) concept strings, order
    preserved."""
    normalized = {normalize_concept(concept) for concept in lexicon.concepts()}
    return [record for record in descs if _norm_ref(record) in normalized]


def rank_references(
    descs: Sequence[DescriptionRecord],
    target: str,
    relation: RelationType,
    k: int,
) -> list[str]:
    """Top-k normalized reference concepts for (target, relation), by
    descending candidate frequency; ties broken by higher maximum
    description score, then lexicographically."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    counts: Counter[str] = Counter()
    max_score: dict[str, float] = {}
    for record in descs:
        if record.relation is not relation or not _matches_target(record, target):
            continue
        reference = _norm_ref(record)
        counts[reference] += 1
        if record.score > max_score.get(reference, -1.0):
            max_score[reference] = record.score
    ranked = sorted(
        counts, key=lambda ref: (-counts[ref], -max_score[ref], ref)
    )
    return ranked[:k]


def best_per_triple(
    descs: Sequence[DescriptionRecord],
) -> dict[tuple[str, str, RelationType], DescriptionRecord]:
    """One record per (target, reference, relation) triple: the max-score
    record, ties broken by shorter text then description_id."""
    best: dict[tuple[str, str, RelationType], DescriptionRecord] = {}
    for record in descs:
        key = (normalize_concept(record.target), _norm_ref(record), record.relation)
        incumbent = best.get(key)
        if incumbent is None or _beats(record, incumbent):
            best[key] = record
    return best


def _beats(challenger: DescriptionRecord, incumbent: DescriptionRecord) -> bool:
    return (
        -challenger.score,
        len(challenger.text),
        challenger.description_id,
    ) < (-incumbent.score, len(incumbent.text), incumbent.description_id)


def build_set(
    descs: Sequence[DescriptionRecord],
    target: str,
    cfg: SelectionConfig = SelectionConfig(),
) -> DescriptionSet:
    """Assemble the stratified set: per relation (in config order) the
    top-k references' best descriptions, then apply the size cap.

    Expects lexicon-filtered candidates; a target with no candidates
    yields an empty set.
    """
    best = best_per_triple(descs)
    target_key = normalize_concept(target)
    entries: list[DescriptionRecord] = []
    for relation in cfg.relations:
        for reference in rank_references(descs, target, relation, cfg.k):
            entries.append(best[(target_key, reference, relation)])
    if cfg.set_size_cap is not None:
        entries = entries[: cfg.set_size_cap]
    return DescriptionSet(target=target_key, entries=tuple(entries), produced_with=cfg)


def diversity_report(
    descs: Sequence[DescriptionRecord],
    targets: Iterable[str] | None = None,
) -> DiversityReport:
    """Candidate and unique-reference counts per (target, relation); every
    relation is reported for each target, zeros included."""
    if targets is None:
        seen: list[str] = []
        for record in descs:
            name = normalize_concept(record.target)
            if name not in seen:
                seen.append(name)
        target_keys = seen
    else:
        target_keys = [normalize_concept(t) for t in targets]
    cells: dict[tuple[str, RelationType], DiversityCell] = {}
    for target in target_keys:
        for relation in RELATION_ORDER:
            matching = [
                record
                for record in descs
                if record.relation is relation and _matches_target(record, target)
            ]
            references = {_norm_ref(record) for record in matching}
            cells[(target, relation)] = DiversityCell(
                candidate_count=len(matching),
                unique_reference_count=len(references),
            )
    return DiversityReport(cells=cells)


# ---------------------------------------------------------------------------
# JSON Lines serialization (the select stage's output feeds the service).
# ---------------------------------------------------------------------------

def record_to_json(record: DescriptionRecord) -> dict:
    return {
        "description_id": record.description_id,
        "target": record.target,
        "relation": record.relation.value,
        "reference": record.reference,
        "elaboration": record.elaboration,
        "text": record.text,
        "context_id": record.context_id,
        "paper_id": record.paper_id,
        "score": record.score,
    }


def record_from_json(payload: dict) -> DescriptionRecord:
    return DescriptionRecord(
        description_id=payload["description_id"],
        target=payload["target"],
        relation=RelationType.from_wire(payload["relation"]),
        reference=payload["reference"],
        elaboration=payload["elaboration"],
        text=payload["text"],
        context_id=payload["context_id"],
        paper_id=payload["paper_id"],
        score=payload["score"],
    )


def set_to_json(description_set: DescriptionSet) -> dict:
    cfg = description_set.produced_with
    return {
        "target": description_set.target,
        "entries": [record_to_json(r) for r in description_set.entries],
        "produced_with": {
            "k": cfg.k,
            "relations": [r.value for r in cfg.relations],
            "set_size_cap": cfg.set_size_cap,
        },
    }


def set_from_json(payload: dict) -> DescriptionSet:
    cfg = payload["produced_with"]
    return DescriptionSet(
        target=payload["target"],
        entries=tuple(record_from_json(r) for r in payload["entries"]),
        produced_with=SelectionConfig(
            k=cfg["k"],
            relations=tuple(RelationType.from_wire(r) for r in cfg["relations"]),
            set_size_cap=cfg["set_size_cap"],
        ),
    )


def write_records(path: str | Path, records: Iterable[DescriptionRecord]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record_to_json(record)) + "\n")


def read_records(path: str | Path) -> list[DescriptionRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                records.append(record_from_json(json.loads(line)))
    return records


def write_sets(path: str | Path, sets: Iterable[DescriptionSet]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for description_set in sets:
            handle.write(json.dumps(set_to_json(description_set)) + "\n")


def read_sets(path: str | Path) -> list[DescriptionSet]:
    sets = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                sets.append(set_from_json(json.loads(line)))
    return sets
