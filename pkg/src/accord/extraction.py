"""Two-stage context classification: a binary gate (does the context
describe the demarcated target in terms of another concept) followed by
multilabel relation typing. Two interchangeable backends: a deterministic
rule-based baseline built on hypernym/coordination patterns, and an HTTP
client for a remote scorer."""

from __future__ import annotations

import enum
import json
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import requests

from .corpus import DemarcatedContext, marked_span, split_sentences

SCORER_TOKEN_ENV = "ACCORD_SCORER_TOKEN"


class RelationType(enum.Enum):
    COMPARE = "compare"
    IS_A = "is-a"
    PART_OF = "part-of"
    USED_FOR = "used-for"

    @classmethod
    def from_wire(cls, value: str) -> "RelationType":
        for member in cls:
            if member.value == value:
                return member
        raise ValueError(f"unknown relation {value!r}")


# Display/stratification order used throughout: compare first, then is-a.
RELATION_ORDER = (
    RelationType.COMPARE,
    RelationType.IS_A,
    RelationType.PART_OF,
    RelationType.USED_FOR,
)


class ScorerError(RuntimeError):
    """Remote scorer failure, carrying the affected context id."""

    def __init__(self, message: str, context_id: str | None = None):
        super().__init__(message)
        self.context_id = context_id


class ScorerTransportError(ScorerError):
    """Network-level failure (connection, timeout, HTTP 5xx)."""


class ScorerProtocolError(ScorerError):
    """Remote scorer returned a malformed or incomplete payload."""


@dataclass(frozen=True)
class BinaryPrediction:
    context_id: str
    label: bool
    score: float


@dataclass(frozen=True)
class RelationScores:
    context_id: str
    scores: dict[RelationType, float]
    predicted: frozenset[RelationType]


@dataclass(frozen=True)
class ScorerFailure:
    context_id: str
    error: str


@dataclass
class ExtractorConfig:
    backend: str = "rule"
    binary_threshold: float = 0.5
    relation_threshold: float = 0.5
    endpoint: str | None = None
    timeout_s: float = 10.0
    max_attempts: int = 3
    max_in_flight: int = 4

    def __post_init__(self) -> None:
        if self.backend not in ("rule", "remote"):
            raise ValueError(f"backend must be 'rule' or 'remote', got {self.backend!r}")
        for name in ("binary_threshold", "relation_threshold"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ValueError(f"{name} must be in (0, 1), got {value}")
        if self.backend == "remote" and not self.endpoint:
            raise ValueError("remote backend requires an endpoint")


# ---------------------------------------------------------------------------
# Rule backend: shallow pattern structures around the demarcated target.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StructureMatch:
    """One pattern hit: the relation it signals plus the surface pieces a
    template generator needs (reference phrase, coordination group noun,
    trailing predicate)."""

    relation: RelationType
    cue: str
    reference: str | None = None
    group: str | None = None
    predicate: str | None = None


# Words that terminate a noun chunk in either direction.
_CHUNK_STOP = frozenset("""
    that which who whose whom where when while whereas
    in on at by with within from into onto over under between against
    during without toward towards via per of
    since because although though if unless until
    and or but nor
    to than then thus hence therefore
    is are was were be been being am
    has have had having
    can could will would shall should may might must
    do does did done not no
    we they it he she i you this these those there their its our his her them
    such as also both each either neither all any
    e.g i.e etc
""".split())

# Determiners skipped at the start of a forward chunk.
_ARTICLE_SKIP = frozenset({"a", "an", "the"})

# Everything that cannot extend a noun compound leftward; used to decide
# whether a phrase occurrence stands alone or sits inside a longer compound.
FUNCTION_WORDS = _CHUNK_STOP | _ARTICLE_SKIP

# Leading modifiers trimmed from a backward (group) chunk.
_GROUP_TRIM = frozenset({
    "a", "an", "the", "some", "such", "other", "these", "those", "several",
    "many", "various", "numerous", "multiple", "different", "certain",
    "most", "more", "new", "novel", "recent", "popular", "existing",
})

_WORD_RE = re.compile(r"[a-z0-9][a-z0-9\-']*", re.IGNORECASE)

_ISA_DIRECT_RE = re.compile(r"\s+is\s+(?:a|an)\s+", re.IGNORECASE)
_APPOSITIVE_RE = re.compile(r",\s+(?:a|an)\s+", re.IGNORECASE)
_PARTOF_DIRECT_RE = re.compile(
    r"\s+(?:is|are)\s+(?:a\s+|an\s+)?(?:component|part)s?\s+of\s+", re.IGNORECASE
)
_CONSISTS_RE = re.compile(r"\bconsists?\s+of\s+", re.IGNORECASE)
_COORD_CUE_RE = re.compile(r"\b(?:such\s+as|including|like)\s+", re.IGNORECASE)
_USEDFOR_RE = re.compile(
    r"\b(?:(?:has|have)\s+been\s+|(?:is|are|was|were)\s+|been\s+)?"
    r"(?:widely\s+|commonly\s+|often\s+|extensively\s+)?"
    r"(?:(?:used|utilized)\s+for|applied\s+to)\s+",
    re.IGNORECASE,
)
_CONNECTOR_RE = re.compile(r"\s*(?:,\s*(?:and\s+|or\s+)?|\s+(?:and|or)\s+)")
_BOTH_AFTER_RE = re.compile(r"\s+and\s+", re.IGNORECASE)
_ARE_BOTH_RE = re.compile(r"\s+are\s+both\s+", re.IGNORECASE)


def _skip_spaces(text: str, pos: int) -> int:
    while pos < len(text) and text[pos] == " ":
        pos += 1
    return pos


def _skip_article(text: str, pos: int) -> int:
    """Position after any leading article (and following spaces)."""
    pos = _skip_spaces(text, pos)
    match = _WORD_RE.match(text, pos)
    if match and match.group().lower() in _ARTICLE_SKIP:
        return _skip_spaces(text, match.end())
    return pos


def _skip_enclosed(text: str, pos: int) -> int:
    """Skip any run of parenthesized / bracketed groups (citations,
    abbreviation glosses) starting at pos."""
    while True:
        probe = _skip_spaces(text, pos)
        if probe < len(text) and text[probe] in "([":
            closer = ")" if text[probe] == "(" else "]"
            end = text.find(closer, probe + 1)
            if end == -1:
                return pos
            pos = end + 1
        else:
            return pos


def read_chunk_forward(text: str, pos: int, limit: int) -> tuple[str, int, int] | None:
    """Longest run of chunk-able words from pos (articles skipped at the
    front), stopping at punctuation or a stop word. Returns the raw slice
    with its [start, end) span."""
    i = _skip_spaces(text, pos)
    start = None
    end = None
    while i < limit:
        match = _WORD_RE.match(text, i)
        if match is None or match.start() != i:
            break
        word = match.group().lower()
        if word in _CHUNK_STOP:
            break
        if start is None and word in _ARTICLE_SKIP:
            i = _skip_spaces(text, match.end())
            continue
        if start is None:
            start = match.start()
        end = match.end()
        nxt = match.end()
        if nxt < limit and text[nxt] == " ":
            i = nxt + 1
        else:
            break
    if start is None or end is None:
        return None
    return text[start:end], start, end


def _read_chunk_backward(text: str, pos: int) -> tuple[str, int, int] | None:
    """Noun chunk ending immediately before pos (one trailing comma
    tolerated), with leading group modifiers trimmed."""
    i = pos - 1
    while i >= 0 and text[i] == " ":
        i -= 1
    if i >= 0 and text[i] == ",":
        i -= 1
        while i >= 0 and text[i] == " ":
            i -= 1
    words: list[tuple[str, int, int]] = []
    while i >= 0 and (text[i].isalnum() or text[i] in "-'"):
        j = i
        while j >= 0 and (text[j].isalnum() or text[j] in "-'"):
            j -= 1
        word = text[j + 1 : i + 1].lower()
        if word in _CHUNK_STOP:
            break
        words.insert(0, (word, j + 1, i + 1))
        i = j
        while i >= 0 and text[i] == " ":
            i -= 1
    while words and words[0][0] in _GROUP_TRIM:
        words.pop(0)
    if not words:
        return None
    start = words[0][1]
    end = words[-1][2]
    return text[start:end], start, end


# A trailing fragment starting with one of these is coordination debris or
# an anaphor, not a predicate worth templating.
_PREDICATE_REJECT = frozenset({
    "and", "or", "but", "nor", "their", "its", "his", "her", "this",
    "these", "those", "they", "it", "we", "he", "she",
})

# Bracketed citation groups: numeric lists or anything carrying a year.
_CITATION_BRACKET_RE = re.compile(
    r"\s*\[(?:[\d\s,;\-]+|[^\]]*\b(?:19|20)\d{2}[^\]]*)\]"
)


def _clean_predicate(text: str) -> str | None:
    cleaned = _CITATION_BRACKET_RE.sub("", text)
    cleaned = " ".join(cleaned.split()).strip().lstrip(",;").strip()
    if cleaned.endswith("."):
        cleaned = cleaned[:-1].rstrip()
    if not cleaned:
        return None
    first = cleaned.split(None, 1)[0].lower()
    if first in _PREDICATE_REJECT:
        return None
    return cleaned


def _walk_list_members(
    text: str, pos: int, limit: int, stop: int | None = None
) -> tuple[list[tuple[str, int, int]], int]:
    """Consume comma/and-separated chunk members (with trailing citation
    groups) starting at pos. A candidate member is only accepted when a
    separator or clause boundary follows, so trailing verb phrases end the
    list; walking also halts at ``stop`` (used to stop right before the
    demarcated target). Returns (members, position after the last accepted
    member and its connector)."""
    members: list[tuple[str, int, int]] = []
    cursor = pos
    while True:
        probe = _skip_spaces(text, cursor)
        if stop is not None and probe >= stop:
            break
        chunk = read_chunk_forward(text, probe, limit)
        if chunk is None or (stop is not None and chunk[2] > stop):
            break
        after = _skip_enclosed(text, chunk[2])
        boundary = _skip_spaces(text, after)
        if boundary < limit and text[boundary] not in ",.;:)]":
            lookahead = _CONNECTOR_RE.match(text, after)
            if lookahead is None:
                break
        members.append(chunk)
        cursor = after
        connector = _CONNECTOR_RE.match(text, cursor)
        if connector is None:
            break
        cursor = connector.end()
    return members, cursor


def _coordination_structures(
    plain: str, t_start: int, t_end: int, sent_start: int, sent_end: int
) -> list[StructureMatch]:
    """Detect the target inside a "such as/including/like" coordination and
    derive the hypernym (is-a) and co-member (compare) readings."""
    structures: list[StructureMatch] = []
    best_cue = None
    for match in _COORD_CUE_RE.finditer(plain, sent_start, t_start):
        best_cue = match
    if best_cue is None:
        return structures

    # Walk list members from the cue; the target must be reachable as the
    # next element for the cue to govern it.
    members_before, cursor = _walk_list_members(
        plain, best_cue.end(), t_start, stop=t_start
    )
    if _skip_article(plain, cursor) != t_start:
        return structures

    after_target = _skip_enclosed(plain, t_end)
    members_after: list[tuple[str, int, int]] = []
    connector = _CONNECTOR_RE.match(plain, after_target)
    if connector is not None:
        members_after, walked_to = _walk_list_members(
            plain, connector.end(), sent_end
        )
        if members_after:
            after_target = _skip_enclosed(plain, walked_to)
    predicate = _clean_predicate(plain[after_target:sent_end])

    cue_text = " ".join(best_cue.group().split()).lower()
    group = _read_chunk_backward(plain, best_cue.start())
    if group is not None:
        structures.append(
            StructureMatch(
                relation=RelationType.IS_A,
                cue=cue_text,
                reference=group[0],
                group=group[0],
                predicate=predicate,
            )
        )
    partner = None
    if members_after:
        partner = members_after[0][0]
    elif members_before:
        partner = members_before[-1][0]
    if partner is not None:
        structures.append(
            StructureMatch(
                relation=RelationType.COMPARE,
                cue=cue_text,
                reference=partner,
                group=group[0] if group else None,
                predicate=predicate,
            )
        )
    return structures


def find_structures(text_with_markers: str) -> list[StructureMatch]:
    """All rule-pattern hits for the demarcated target, most specific
    first. Deterministic for fixed input."""
    plain, t_start, t_end = marked_span(text_with_markers)
    sentences = split_sentences(plain)
    sent_start, sent_end = 0, len(plain)
    for sentence in sentences:
        if sentence.char_start <= t_start < sentence.char_end:
            sent_start, sent_end = sentence.char_start, sentence.char_end
            break

    structures: list[StructureMatch] = []

    partof = _PARTOF_DIRECT_RE.match(plain, t_end)
    if partof is not None:
        chunk = read_chunk_forward(plain, partof.end(), sent_end)
        if chunk is not None:
            structures.append(
                StructureMatch(
                    relation=RelationType.PART_OF,
                    cue=" ".join(partof.group().split()).lower(),
                    reference=chunk[0],
                    predicate=_clean_predicate(plain[chunk[2] : sent_end]),
                )
            )
    else:
        isa = _ISA_DIRECT_RE.match(plain, t_end)
        if isa is not None:
            chunk = read_chunk_forward(plain, isa.end(), sent_end)
            if chunk is not None:
                structures.append(
                    StructureMatch(
                        relation=RelationType.IS_A,
                        cue="is a",
                        reference=chunk[0],
                        predicate=_clean_predicate(plain[chunk[2] : sent_end]),
                    )
                )
        else:
            appositive = _APPOSITIVE_RE.match(plain, t_end)
            if appositive is not None:
                chunk = read_chunk_forward(plain, appositive.end(), sent_end)
                if chunk is not None:
                    structures.append(
                        StructureMatch(
                            relation=RelationType.IS_A,
                            cue=", a",
                            reference=chunk[0],
                            predicate=_clean_predicate(plain[chunk[2] : sent_end]),
                        )
                    )

    structures.extend(
        _coordination_structures(plain, t_start, t_end, sent_start, sent_end)
    )

    # "<<T>> and <other> are both <pred>"
    both_and = _BOTH_AFTER_RE.match(plain, t_end)
    if both_and is not None:
        chunk = read_chunk_forward(plain, both_and.end(), sent_end)
        if chunk is not None:
            are_both = _ARE_BOTH_RE.match(plain, chunk[2])
            if are_both is not None:
                structures.append(
                    StructureMatch(
                        relation=RelationType.COMPARE,
                        cue="are both",
                        reference=chunk[0],
                        predicate=_clean_predicate(plain[are_both.end() : sent_end]),
                    )
                )

    # "<whole NP> consists of ... <<T>>" (target listed among the parts).
    for match in _CONSISTS_RE.finditer(plain, sent_start, t_start):
        members, cursor = _walk_list_members(
            plain, match.end(), t_start, stop=t_start
        )
        if _skip_article(plain, cursor) != t_start:
            continue
        whole = _read_chunk_backward(plain, match.start())
        if whole is not None:
            structures.append(
                StructureMatch(
                    relation=RelationType.PART_OF,
                    cue="consists of",
                    reference=whole[0],
                    predicate=None,
                )
            )
            break

    for match in _USEDFOR_RE.finditer(plain):
        chunk = read_chunk_forward(plain, match.end(), len(plain))
        cue_text = " ".join(match.group().split()).lower()
        if chunk is None:
            structures.append(
                StructureMatch(relation=RelationType.USED_FOR, cue=cue_text)
            )
        else:
            structures.append(
                StructureMatch(
                    relation=RelationType.USED_FOR,
                    cue=cue_text,
                    reference=chunk[0],
                    predicate=_clean_predicate(plain[chunk[2] :]),
                )
            )
        break

    return structures


def _rule_relation_scores(input: DemarcatedContext) -> dict[RelationType, float]:
    found = {s.relation for s in find_structures(input.text_with_markers)}
    return {r: (1.0 if r in found else 0.0) for r in RELATION_ORDER}


# ---------------------------------------------------------------------------
# Remote backend.
# ---------------------------------------------------------------------------

def _auth_headers() -> dict[str, str]:
    token = os.environ.get(SCORER_TOKEN_ENV)
    if token:
        return {"Authorization": f"Bearer {token}"}
    return {}


def _post_with_retries(
    endpoint: str,
    payload: dict,
    timeout_s: float,
    max_attempts: int,
    context_id: str | None,
) -> dict:
    last_error: Exception | None = None
    for attempt in range(max_attempts):
        try:
            response = requests.post(
                endpoint,
                json=payload,
                headers=_auth_headers(),
                timeout=timeout_s,
            )
            if response.status_code >= 500:
                raise ScorerTransportError(
                    f"scorer returned HTTP {response.status_code}", context_id
                )
            if response.status_code != 200:
                raise ScorerProtocolError(
                    f"scorer returned HTTP {response.status_code}", context_id
                )
            try:
                return response.json()
            except (json.JSONDecodeError, ValueError) as exc:
                raise ScorerProtocolError(
                    f"scorer returned non-JSON body: {exc}", context_id
                ) from exc
        except ScorerProtocolError:
            raise
        except (requests.RequestException, ScorerTransportError) as exc:
            last_error = exc
            if attempt + 1 < max_attempts:
                time.sleep(min(0.1 * 2**attempt, 1.0))
    raise ScorerTransportError(
        f"scorer unreachable after {max_attempts} attempts: {last_error}", context_id
    )


def _remote_binary_score(input: DemarcatedContext, cfg: ExtractorConfig) -> float:
    payload = {
        "mode": "binary",
        "items": [{"context_id": input.context_id, "text": input.text_with_markers}],
    }
    body = _post_with_retries(
        cfg.endpoint, payload, cfg.timeout_s, cfg.max_attempts, input.context_id
    )
    items = body.get("items")
    if not isinstance(items, list):
        raise ScorerProtocolError("response missing 'items' list", input.context_id)
    for item in items:
        if isinstance(item, dict) and item.get("context_id") == input.context_id:
            score = item.get("score")
            if not isinstance(score, (int, float)) or not 0.0 <= score <= 1.0:
                raise ScorerProtocolError(
                    f"score {score!r} not in [0, 1]", input.context_id
                )
            return float(score)
    raise ScorerProtocolError(
        f"no score returned for {input.context_id}", input.context_id
    )


def _remote_relation_scores(
    input: DemarcatedContext, cfg: ExtractorConfig
) -> dict[RelationType, float]:
    payload = {
        "mode": "relations",
        "items": [{"context_id": input.context_id, "text": input.text_with_markers}],
    }
    body = _post_with_retries(
        cfg.endpoint, payload, cfg.timeout_s, cfg.max_attempts, input.context_id
    )
    items = body.get("items")
    if not isinstance(items, list):
        raise ScorerProtocolError("response missing 'items' list", input.context_id)
    for item in items:
        if isinstance(item, dict) and item.get("context_id") == input.context_id:
            raw = item.get("scores")
            if not isinstance(raw, dict):
                raise ScorerProtocolError("missing 'scores' map", input.context_id)
            scores: dict[RelationType, float] = {}
            for relation in RELATION_ORDER:
                value = raw.get(relation.value)
                if not isinstance(value, (int, float)) or not 0.0 <= value <= 1.0:
                    raise ScorerProtocolError(
                        f"score for {relation.value!r} missing or out of range",
                        input.context_id,
                    )
                scores[relation] = float(value)
            return scores
    raise ScorerProtocolError(
        f"no scores returned for {input.context_id}", input.context_id
    )


# ---------------------------------------------------------------------------
# Public classification operations.
# ---------------------------------------------------------------------------

def classify_binary(input: DemarcatedContext, cfg: ExtractorConfig) -> BinaryPrediction:
    """Stage 1: does the context describe the target in terms of another
    concept."""
    if cfg.backend == "rule":
        score = 1.0 if any(_rule_relation_scores(input).values()) else 0.0
    else:
        score = _remote_binary_score(input, cfg)
    return BinaryPrediction(
        context_id=input.context_id,
        label=score >= cfg.binary_threshold,
        score=score,
    )


def classify_relations(input: DemarcatedContext, cfg: ExtractorConfig) -> RelationScores:
    """Stage 2: multilabel relation typing used for prompt routing and as
    the selection score."""
    if cfg.backend == "rule":
        scores = _rule_relation_scores(input)
    else:
        scores = _remote_relation_scores(input, cfg)
    predicted = frozenset(
        relation
        for relation, score in scores.items()
        if score >= cfg.relation_threshold
    )
    return RelationScores(
        context_id=input.context_id, scores=scores, predicted=predicted
    )


def classify_binary_batch(
    inputs: list[DemarcatedContext], cfg: ExtractorConfig
) -> tuple[list[BinaryPrediction], list[ScorerFailure]]:
    """Classify many contexts; a remote failure on one context never stops
    the batch."""
    return _run_batch(inputs, cfg, classify_binary)


def classify_relations_batch(
    inputs: list[DemarcatedContext], cfg: ExtractorConfig
) -> tuple[list[RelationScores], list[ScorerFailure]]:
    return _run_batch(inputs, cfg, classify_relations)


def _run_batch(inputs, cfg, op):
    results = []
    failures: list[ScorerFailure] = []
    if cfg.backend == "rule":
        for item in inputs:
            results.append(op(item, cfg))
        return results, failures
    with ThreadPoolExecutor(max_workers=max(1, cfg.max_in_flight)) as pool:
        futures = [(item, pool.submit(op, item, cfg)) for item in inputs]
        for item, future in futures:
            try:
                results.append(future.result())
            except ScorerError as exc:
                failures.append(ScorerFailure(item.context_id, str(exc)))
    return results, failures
