"""Corpus ingestion: paper records, scored concept lexicon, sentence
splitting, candidate context windowing, concept mention matching, and
target demarcation."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

SECTION_KINDS = ("abstract", "introduction", "related_work")

OPEN_MARKER = "<<"
CLOSE_MARKER = ">>"

# Periods ending these strings never terminate a sentence.
ABBREVIATIONS = (
    "et al.", "e.g.", "i.e.", "etc.", "cf.", "vs.", "resp.", "approx.",
    "fig.", "figs.", "eq.", "eqs.", "sec.", "secs.", "ref.", "refs.",
    "no.", "al.",
)

_OPENING = "([{"
_CLOSING = ")]}"


class CorpusError(ValueError):
    """Malformed corpus or lexicon input."""


class DemarcationError(ValueError):
    """Mention cannot be demarcated in its context."""


@dataclass(frozen=True)
class PaperSection:
    kind: str
    text: str


@dataclass(frozen=True)
class PaperRecord:
    paper_id: str
    title: str
    sections: tuple[PaperSection, ...]
    url: str | None = None


@dataclass(frozen=True)
class LexiconEntry:
    concept: str
    score: float


class Lexicon:
    """Scored concept strings, lowercased and deduplicated (max score wins)."""

    def __init__(self, entries: Iterable[LexiconEntry] = ()):
        self._scores: dict[str, float] = {}
        for entry in entries:
            self.add(entry.concept, entry.score)

    def add(self, concept: str, score: float) -> None:
        concept = concept.lower().strip()
        if not concept:
            raise CorpusError("lexicon concept must be nonempty")
        if score < 0:
            raise CorpusError(f"lexicon score must be >= 0, got {score}")
        existing = self._scores.get(concept)
        if existing is None or score > existing:
            self._scores[concept] = score

    def __contains__(self, concept: str) -> bool:
        return concept.lower().strip() in self._scores

    def __len__(self) -> int:
        return len(self._scores)

    def __iter__(self) -> Iterator[LexiconEntry]:
        for concept in sorted(self._scores):
            yield LexiconEntry(concept, self._scores[concept])

    def score(self, concept: str) -> float:
        return self._scores[concept.lower().strip()]

    def concepts(self) -> list[str]:
        return sorted(self._scores)


@dataclass(frozen=True)
class Sentence:
    text: str
    char_start: int
    char_end: int
    index: int


@dataclass(frozen=True)
class ConceptMention:
    concept: str
    char_start: int
    char_end: int
    score: float


@dataclass(frozen=True)
class CandidateContext:
    context_id: str
    paper_id: str
    text: str
    window_size: int
    mentions: tuple[ConceptMention, ...] = field(default_factory=tuple)


@dataclass(frozen=True)
class DemarcatedContext:
    context_id: str
    target_concept: str
    text_with_markers: str


def load_corpus(path: str | Path) -> list[PaperRecord]:
    """Read paper records from a JSON Lines file.

    Raises CorpusError naming the offending line for malformed JSON, schema
    violations, or duplicate paper ids.
    """
    records: list[PaperRecord] = []
    seen: dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
            record = _parse_record(payload, lineno)
            if record.paper_id in seen:
                raise CorpusError(
                    f"line {lineno}: duplicate paper_id {record.paper_id!r} "
                    f"(first seen on line {seen[record.paper_id]})"
                )
            seen[record.paper_id] = lineno
            records.append(record)
    return records


def _parse_record(payload: object, lineno: int) -> PaperRecord:
    if not isinstance(payload, dict):
        raise CorpusError(f"line {lineno}: expected a JSON object")
    paper_id = payload.get("paper_id")
    if not isinstance(paper_id, str) or not paper_id.strip():
        raise CorpusError(f"line {lineno}: missing or empty 'paper_id'")
    title = payload.get("title")
    if not isinstance(title, str):
        raise CorpusError(f"line {lineno}: missing 'title'")
    url = payload.get("url")
    if url is not None and not isinstance(url, str):
        raise CorpusError(f"line {lineno}: 'url' must be a string")
    raw_sections = payload.get("sections")
    if not isinstance(raw_sections, list) or not raw_sections:
        raise CorpusError(f"line {lineno}: missing or empty 'sections'")
    sections = []
    for i, raw in enumerate(raw_sections):
        if not isinstance(raw, dict):
            raise CorpusError(f"line {lineno}: sections[{i}] must be an object")
        kind = raw.get("kind")
        if kind not in SECTION_KINDS:
            raise CorpusError(
                f"line {lineno}: sections[{i}].kind must be one of {SECTION_KINDS}"
            )
        text = raw.get("text")
        if not isinstance(text, str) or not text.strip():
            raise CorpusError(f"line {lineno}: sections[{i}].text must be nonempty")
        sections.append(PaperSection(kind=kind, text=text))
    return PaperRecord(
        paper_id=paper_id, title=title, url=url, sections=tuple(sections)
    )


def load_lexicon(path: str | Path, min_score: float) -> Lexicon:
    """Read a ``concept<TAB>score`` TSV, keeping entries with
    score >= min_score. ``#`` lines are comments; duplicate concepts keep
    their maximum score."""
    lexicon = Lexicon()
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            parts = stripped.split("\t")
            if len(parts) != 2:
                raise CorpusError(
                    f"line {lineno}: expected 'concept<TAB>score', got {stripped!r}"
                )
            concept, raw_score = parts
            try:
                score = float(raw_score)
            except ValueError as exc:
                raise CorpusError(
                    f"line {lineno}: non-numeric score {raw_score!r}"
                ) from exc
            if score < 0:
                raise CorpusError(f"line {lineno}: negative score {score}")
            if score >= min_score:
                lexicon.add(concept, score)
    return lexicon


def _is_abbreviation_dot(text: str, dot_index: int) -> bool:
    prefix = text[: dot_index + 1].lower()
    for abbrev in ABBREVIATIONS:
        if not prefix.endswith(abbrev):
            continue
        before = dot_index - len(abbrev)
        if before < 0 or not (text[before].isalnum() or text[before] == "."):
            return True
    return False


def split_sentences(text: str) -> list[Sentence]:
    """Deterministic rule-based sentence splitting.

    Splits after sentence-final ``.!?`` followed by whitespace (or end of
    text), guarded by the abbreviation list and suppressed inside brackets
    so citation groups never split. Every non-whitespace character lands in
    exactly one sentence; worst case the whole text is one sentence.
    """
    sentences: list[Sentence] = []
    n = len(text)
    start = 0
    depth = 0
    i = 0

    def emit(raw_start: int, raw_end: int) -> None:
        seg_start = raw_start
        while seg_start < raw_end and text[seg_start].isspace():
            seg_start += 1
        seg_end = raw_end
        while seg_end > seg_start and text[seg_end - 1].isspace():
            seg_end -= 1
        if seg_end > seg_start:
            sentences.append(
                Sentence(
                    text=text[seg_start:seg_end],
                    char_start=seg_start,
                    char_end=seg_end,
                    index=len(sentences),
                )
            )

    while i < n:
        ch = text[i]
        if ch in _OPENING:
            depth += 1
        elif ch in _CLOSING:
            depth = max(0, depth - 1)
        elif ch in ".!?" and depth == 0:
            end = i
            while end + 1 < n and text[end + 1] in ".!?":
                end += 1
            at_end = end + 1 >= n
            boundary = at_end or text[end + 1].isspace()
            if boundary and not (ch == "." and _is_abbreviation_dot(text, end)):
                emit(start, end + 1)
                start = end + 1
            i = end
        i += 1
    emit(start, n)
    return sentences


_CONCEPT_PATTERNS: dict[str, re.Pattern[str]] = {}


def _concept_pattern(concept: str) -> re.Pattern[str]:
    pattern = _CONCEPT_PATTERNS.get(concept)
    if pattern is None:
        pattern = re.compile(
            r"(?<![a-z0-9])" + re.escape(concept) + r"(?![a-z0-9])"
        )
        _CONCEPT_PATTERNS[concept] = pattern
    return pattern


def match_concepts(text: str, lexicon: Lexicon) -> list[ConceptMention]:
    """Case-insensitive, word-boundary lexicon matching.

    Overlapping hits are resolved longest-concept-first (ties by earlier
    position, then concept string); the surviving mentions are returned
    sorted by start offset.
    """
    lowered = text.lower()
    raw: list[tuple[int, int, LexiconEntry]] = []
    for entry in lexicon:
        for match in _concept_pattern(entry.concept).finditer(lowered):
            raw.append((match.start(), match.end(), entry))
    raw.sort(key=lambda hit: (-(hit[1] - hit[0]), hit[0], hit[2].concept))
    taken: list[tuple[int, int]] = []
    mentions: list[ConceptMention] = []
    for start, end, entry in raw:
        if any(start < t_end and t_start < end for t_start, t_end in taken):
            continue
        taken.append((start, end))
        mentions.append(
            ConceptMention(
                concept=entry.concept,
                char_start=start,
                char_end=end,
                score=entry.score,
            )
        )
    mentions.sort(key=lambda m: m.char_start)
    return mentions


def iter_windows(
    sentence_count: int, window_sizes: Iterable[int]
) -> Iterator[tuple[int, int]]:
    """Yield (first, last) inclusive sentence-index windows, size-1 windows
    first. A section of m sentences yields m + (m-1) = 2m-1 windows when
    both sizes are requested."""
    sizes = sorted(set(window_sizes))
    for size in sizes:
        if size not in (1, 2):
            raise ValueError(f"window size must be 1 or 2, got {size}")
        for first in range(sentence_count - size + 1):
            yield first, first + size - 1


def build_candidate_contexts(
    record: PaperRecord,
    lexicon: Lexicon,
    window_sizes: Iterable[int] = (1, 2),
) -> list[CandidateContext]:
    """Enumerate 1-2 sentence windows over each section and keep those
    containing at least one lexicon mention.

    Window text is the covered sentences joined by a single space; mentions
    are recomputed against the window text. Output order is deterministic:
    sections in record order, size-1 windows before size-2.
    """
    sizes = tuple(window_sizes)
    if not sizes:
        raise ValueError("window_sizes must be nonempty")
    candidates: list[CandidateContext] = []
    for section in record.sections:
        sentences = split_sentences(section.text)
        for first, last in iter_windows(len(sentences), sizes):
            window_text = " ".join(s.text for s in sentences[first : last + 1])
            mentions = match_concepts(window_text, lexicon)
            if not mentions:
                continue
            candidates.append(
                CandidateContext(
                    context_id=f"{record.paper_id}:{section.kind}:{first}-{last}",
                    paper_id=record.paper_id,
                    text=window_text,
                    window_size=last - first + 1,
                    mentions=tuple(mentions),
                )
            )
    return candidates


def demarcate(context: CandidateContext, mention: ConceptMention) -> DemarcatedContext:
    """Wrap the mention span in ``<<`` ``>>`` markers.

    Rejects mentions that fall outside the context text, spans that do not
    match the mention's concept, and texts already containing markers
    (demarcation is not stackable).
    """
    text = context.text
    if OPEN_MARKER in text or CLOSE_MARKER in text:
        raise DemarcationError(
            f"context {context.context_id} already contains marker tokens"
        )
    if not (0 <= mention.char_start < mention.char_end <= len(text)):
        raise DemarcationError(
            f"mention span [{mention.char_start}, {mention.char_end}) out of "
            f"bounds for context {context.context_id}"
        )
    span = text[mention.char_start : mention.char_end]
    if span.lower() != mention.concept.lower():
        raise DemarcationError(
            f"span {span!r} does not match concept {mention.concept!r}"
        )
    marked = (
        text[: mention.char_start]
        + OPEN_MARKER
        + span
        + CLOSE_MARKER
        + text[mention.char_end :]
    )
    return DemarcatedContext(
        context_id=context.context_id,
        target_concept=mention.concept,
        text_with_markers=marked,
    )


def strip_markers(text_with_markers: str) -> str:
    """Remove the single ``<<`` ``>>`` pair, restoring the original text."""
    if (
        text_with_markers.count(OPEN_MARKER) != 1
        or text_with_markers.count(CLOSE_MARKER) != 1
    ):
        raise DemarcationError("expected exactly one marked span")
    open_at = text_with_markers.index(OPEN_MARKER)
    close_at = text_with_markers.index(CLOSE_MARKER)
    if close_at < open_at:
        raise DemarcationError("marker tokens out of order")
    return (
        text_with_markers[:open_at]
        + text_with_markers[open_at + len(OPEN_MARKER) : close_at]
        + text_with_markers[close_at + len(CLOSE_MARKER) :]
    )


def marked_span(text_with_markers: str) -> tuple[str, int, int]:
    """Return (plain_text, start, end) where [start, end) is the target span
    in the marker-free text."""
    plain = strip_markers(text_with_markers)
    open_at = text_with_markers.index(OPEN_MARKER)
    close_at = text_with_markers.index(CLOSE_MARKER)
    return plain, open_at, close_at - len(OPEN_MARKER)


def write_candidates(path: str | Path, candidates: Iterable[CandidateContext]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for candidate in candidates:
            handle.write(json.dumps(candidate_to_json(candidate)) + "\n")


def read_candidates(path: str | Path) -> list[CandidateContext]:
    candidates = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                candidates.append(candidate_from_json(json.loads(line)))
    return candidates


def candidate_to_json(candidate: CandidateContext) -> dict:
    return {
        "context_id": candidate.context_id,
        "paper_id": candidate.paper_id,
        "text": candidate.text,
        "window_size": candidate.window_size,
        "mentions": [
            {
                "concept": m.concept,
                "char_start": m.char_start,
                "char_end": m.char_end,
                "score": m.score,
            }
            for m in candidate.mentions
        ],
    }


def candidate_from_json(payload: dict) -> CandidateContext:
    return CandidateContext(
        context_id=payload["context_id"],
        paper_id=payload["paper_id"],
        text=payload["text"],
        window_size=payload["window_size"],
        mentions=tuple(
            ConceptMention(
                concept=m["concept"],
                char_start=m["char_start"],
                char_end=m["char_end"],
                score=m["score"],
            )
            for m in payload["mentions"]
        ),
    )
