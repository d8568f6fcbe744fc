"""Description generation: relation-routed few-shot prompts for a remote
text-generation API, a deterministic template backend for offline runs,
plus parsing of generated descriptions into (target, relation, reference,
elaboration) and the first-pass quality filters."""

from __future__ import annotations

import itertools
import json
import os
import re
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import requests

from .corpus import CandidateContext, DemarcatedContext, marked_span
from .extraction import RelationType, StructureMatch, find_structures, read_chunk_forward
from .textnorm import normalize_concept, singularize_word, tokenize_with_spans

GENERATOR_TOKEN_ENV = "ACCORD_GENERATOR_TOKEN"

INSTRUCTION = "Describe the provided concept in terms of another concept in the text"

UNRESOLVED_REFERENCE_PHRASES = (
    "our work",
    "this paper",
    "this work",
    "we propose",
    "our method",
    "our approach",
)

# Elaborations opening with one of these join the description head with a
# comma instead of plain juxtaposition.
_COMMA_JOINERS = frozenset({
    "since", "because", "as", "for", "when", "where", "which", "while",
    "due", "despite", "unlike", "in", "with", "by", "at", "on", "over",
    "after", "before", "under", "e.g", "i.e",
})


class GenerationError(RuntimeError):
    def __init__(self, message: str, context_id: str | None = None):
        super().__init__(message)
        self.context_id = context_id


class PromptConfigurationError(GenerationError):
    """Exemplar bank cannot supply the routed relation."""


class GeneratorTransportError(GenerationError):
    """Remote generator unreachable within the retry budget."""


class UnparseableGenerationError(GenerationError):
    """The backend produced no usable description text."""


class DescriptionParseError(ValueError):
    """Description text matches no relation template."""


@dataclass(frozen=True)
class FewShotExample:
    relation: RelationType
    extraction: str
    description: str


@dataclass(frozen=True)
class Prompt:
    instruction: str
    examples: tuple[FewShotExample, ...]
    query: str
    context_id: str
    relation: RelationType

    def render(self) -> str:
        parts = [self.instruction, ""]
        for example in self.examples:
            parts.append(f"Text: {example.extraction}")
            parts.append(f"Description: {example.description}")
            parts.append("")
        parts.append(f"Text: {self.query}")
        parts.append("Description:")
        return "\n".join(parts)


@dataclass(frozen=True)
class RawGeneration:
    context_id: str
    relation: RelationType
    text: str
    backend: str


@dataclass(frozen=True)
class ParsedDescription:
    target: str
    relation: RelationType
    reference: str
    elaboration: str
    text: str

    def __post_init__(self) -> None:
        if normalize_concept(self.target) == normalize_concept(self.reference):
            raise DescriptionParseError(
                f"target and reference coincide: {self.target!r}"
            )
        if not self.elaboration and self.relation is not RelationType.USED_FOR:
            raise DescriptionParseError(
                f"missing elaboration for {self.relation.value} description"
            )


@dataclass(frozen=True)
class FilterVerdict:
    accepted: bool
    reasons: tuple[str, ...] = ()


@dataclass(frozen=True)
class FilterConfig:
    # Footnote-style relaxation: accept a reference whose head noun appears
    # in the context even when the full phrase does not.
    allow_head_noun_reference: bool = False


@dataclass
class GeneratorConfig:
    endpoint: str | None = None
    max_tokens: int = 100
    temperature: float = 0.0
    timeout_s: float = 30.0
    max_attempts: int = 3


# ---------------------------------------------------------------------------
# Exemplar bank and prompt assembly.
# ---------------------------------------------------------------------------

class ExemplarBank:
    """Hand-picked (extraction, description) pairs per relation, in file
    order. Each description must mention its extraction's demarcated target
    exactly once."""

    def __init__(self, examples: Iterable[FewShotExample]):
        self._by_relation: dict[RelationType, list[FewShotExample]] = {}
        for i, example in enumerate(examples):
            _validate_exemplar(example, i)
            self._by_relation.setdefault(example.relation, []).append(example)

    def for_relation(self, relation: RelationType) -> list[FewShotExample]:
        return list(self._by_relation.get(relation, []))

    def __len__(self) -> int:
        return sum(len(v) for v in self._by_relation.values())


def _count_normalized_phrase(text: str, phrase: str) -> int:
    tokens = [singularize_word(t.norm) for t in tokenize_with_spans(text)]
    needle = [singularize_word(t.norm) for t in tokenize_with_spans(phrase)]
    if not needle:
        return 0
    return sum(
        1
        for i in range(len(tokens) - len(needle) + 1)
        if tokens[i : i + len(needle)] == needle
    )


def _validate_exemplar(example: FewShotExample, index: int) -> None:
    try:
        plain, start, end = marked_span(example.extraction)
        target = plain[start:end]
    except Exception as exc:
        raise PromptConfigurationError(
            f"exemplar {index}: extraction must demarcate one target ({exc})"
        ) from exc
    occurrences = _count_normalized_phrase(example.description, target)
    if occurrences != 1:
        raise PromptConfigurationError(
            f"exemplar {index}: description mentions target {target!r} "
            f"{occurrences} times, expected exactly once"
        )


def load_exemplar_bank(path: str | Path | None = None) -> ExemplarBank:
    """Load a JSON Lines exemplar bank; defaults to the packaged bank."""
    if path is None:
        path = Path(__file__).parent / "data" / "exemplar_bank.jsonl"
    examples = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            payload = json.loads(line)
            examples.append(
                FewShotExample(
                    relation=RelationType.from_wire(payload["relation"]),
                    extraction=payload["extraction"],
                    description=payload["description"],
                )
            )
    return ExemplarBank(examples)


def build_prompt(
    context: DemarcatedContext, relation: RelationType, bank: ExemplarBank
) -> Prompt:
    """Assemble the fixed instruction, five exemplars of the routed
    relation (in bank order), and the demarcated query."""
    exemplars = bank.for_relation(relation)
    if len(exemplars) < 5:
        raise PromptConfigurationError(
            f"exemplar bank has {len(exemplars)} {relation.value} examples, "
            "need at least 5"
        )
    return Prompt(
        instruction=INSTRUCTION,
        examples=tuple(exemplars[:5]),
        query=context.text_with_markers,
        context_id=context.context_id,
        relation=relation,
    )


# ---------------------------------------------------------------------------
# Backends.
# ---------------------------------------------------------------------------

def generate_remote(prompt: Prompt, cfg: GeneratorConfig) -> RawGeneration:
    """Call the remote completion endpoint; keep the first paragraph of the
    completion. Transport failures are retried up to cfg.max_attempts."""
    if not cfg.endpoint:
        raise GeneratorTransportError("no generator endpoint configured")
    headers = {}
    token = os.environ.get(GENERATOR_TOKEN_ENV)
    if token:
        headers["Authorization"] = f"Bearer {token}"
    payload = {
        "prompt": prompt.render(),
        "max_tokens": cfg.max_tokens,
        "temperature": cfg.temperature,
    }
    last_error: Exception | None = None
    body = None
    for attempt in range(cfg.max_attempts):
        try:
            response = requests.post(
                cfg.endpoint, json=payload, headers=headers, timeout=cfg.timeout_s
            )
            if response.status_code >= 500:
                raise requests.HTTPError(f"HTTP {response.status_code}")
            body = response.json()
            break
        except (requests.RequestException, ValueError) as exc:
            last_error = exc
            if attempt + 1 < cfg.max_attempts:
                time.sleep(min(0.1 * 2**attempt, 1.0))
    if body is None:
        raise GeneratorTransportError(
            f"generator unreachable after {cfg.max_attempts} attempts: {last_error}",
            prompt.context_id,
        )
    completion = body.get("text") if isinstance(body, dict) else None
    if not isinstance(completion, str):
        raise UnparseableGenerationError(
            "generator response missing 'text'", prompt.context_id
        )
    text = re.split(r"\n\s*\n", completion.strip(), maxsplit=1)[0].strip()
    if not text:
        raise UnparseableGenerationError("empty completion", prompt.context_id)
    return RawGeneration(
        context_id=prompt.context_id,
        relation=prompt.relation,
        text=text,
        backend="remote",
    )


def _elaboration_join(elaboration: str) -> str:
    first = elaboration.split()[0].lower().strip(".,") if elaboration.split() else ""
    return ", " if first in _COMMA_JOINERS else " "


def render_description(
    relation: RelationType, target: str, reference: str, elaboration: str
) -> str:
    """Surface template per relation; the inverse of parse_description for
    elaborations that open with a connective."""
    elaboration = elaboration.strip()
    if relation is RelationType.COMPARE:
        if not elaboration:
            raise ValueError("compare descriptions require an elaboration")
        return f"{target} is like {reference} in that {elaboration}."
    if relation is RelationType.IS_A:
        article = "an" if reference[:1].lower() in "aeiou" else "a"
        head = f"{target} is {article} {reference}"
    elif relation is RelationType.PART_OF:
        head = f"{target} is part of {reference}"
    elif relation is RelationType.USED_FOR:
        head = f"{target} has been used for {reference}"
    else:  # pragma: no cover - exhaustive over RelationType
        raise ValueError(f"unknown relation {relation}")
    if not elaboration:
        if relation is not RelationType.USED_FOR:
            raise ValueError(f"{relation.value} descriptions require an elaboration")
        return head + "."
    return f"{head}{_elaboration_join(elaboration)}{elaboration}."


def _structure_elaboration(relation: RelationType, structure: StructureMatch) -> str | None:
    predicate = structure.predicate
    if relation is RelationType.COMPARE:
        if structure.group and predicate:
            first = predicate.split()[0].lower()
            if first == "that" or first in _COMMA_JOINERS:
                body = f"{structure.group} {predicate}"
            else:
                body = f"{structure.group} that {predicate}"
        elif structure.group:
            body = structure.group
        elif predicate:
            body = predicate
        else:
            return None
        return f"they are both {body}"
    if predicate is None:
        return "" if relation is RelationType.USED_FOR else None
    first = predicate.split()[0].lower()
    if relation is RelationType.USED_FOR or first == "that" or first in _COMMA_JOINERS:
        return predicate
    return f"that {predicate}"


def generate_template(
    context: DemarcatedContext, relation: RelationType
) -> RawGeneration:
    """Offline deterministic backend: refill the relation's canonical
    template with (target, reference, elaboration) recovered from the
    context by the extraction pattern machinery."""
    target = normalize_concept(context.target_concept)
    for structure in find_structures(context.text_with_markers):
        if structure.relation is not relation or not structure.reference:
            continue
        reference = normalize_concept(structure.reference)
        if reference == target:
            continue
        elaboration = _structure_elaboration(relation, structure)
        if elaboration is None:
            continue
        text = render_description(relation, target, reference, elaboration)
        return RawGeneration(
            context_id=context.context_id,
            relation=relation,
            text=text,
            backend="template",
        )
    raise UnparseableGenerationError(
        f"no {relation.value} pattern matches context", context.context_id
    )


# ---------------------------------------------------------------------------
# Parsing and filtering.
# ---------------------------------------------------------------------------

_PARSE_CUES: list[tuple[re.Pattern[str], RelationType]] = [
    (re.compile(r"\bis\s+(?:like|similar\s+to)\s+", re.IGNORECASE), RelationType.COMPARE),
    (
        re.compile(
            r"\b(?:is|are)\s+(?:a\s+|an\s+)?(?:component|part)s?\s+of\s+",
            re.IGNORECASE,
        ),
        RelationType.PART_OF,
    ),
    (re.compile(r"\bis\s+an?\s+", re.IGNORECASE), RelationType.IS_A),
    (
        re.compile(
            r"\b(?:(?:has|have)\s+been\s+|(?:is|are|was|were)\s+|been\s+)?"
            r"(?:widely\s+|commonly\s+|often\s+)?"
            r"(?:(?:used|utilized)\s+for|applied\s+to)\s+",
            re.IGNORECASE,
        ),
        RelationType.USED_FOR,
    ),
]

_IN_THAT_RE = re.compile(r"\s*in\s+that\s+", re.IGNORECASE)
_ARE_BOTH_SPLIT_RE = re.compile(
    r"^(?P<left>.+?)\s+and\s+(?P<right>.+?)\s+are\s+both\s+(?P<rest>.+)$",
    re.IGNORECASE,
)
_LEADING_ARTICLE_RE = re.compile(r"^(?:the|a|an)\s+", re.IGNORECASE)


def _strip_final_period(text: str) -> str:
    text = text.strip()
    if text.endswith("."):
        text = text[:-1].rstrip()
    return text


def _target_matches(pre: str, target: str) -> bool:
    pre_norm = normalize_concept(_LEADING_ARTICLE_RE.sub("", pre.strip()))
    target_norm = normalize_concept(target)
    return pre_norm == target_norm or pre_norm.endswith(" " + target_norm)


def parse_description(text: str, target: str | None = None) -> ParsedDescription:
    """Decompose a description via its surface template.

    The relation is the earliest cue in the text (longest cue wins ties);
    the reference is the noun chunk right after the cue; the elaboration is
    the remainder after the chunk. Raises DescriptionParseError when no
    template matches or the given target does not precede the cue.
    """
    if not text.strip():
        raise DescriptionParseError("empty description")
    best: tuple[tuple[int, int], re.Match[str], RelationType] | None = None
    for pattern, candidate_relation in _PARSE_CUES:
        for match in pattern.finditer(text):
            key = (match.start(), -(match.end() - match.start()))
            if best is None or key < best[0]:
                best = (key, match, candidate_relation)
    if best is None:
        return _parse_are_both(text, target)
    _, cue, relation = best

    pre = text[: cue.start()].strip()
    if not pre:
        raise DescriptionParseError("no target before relation cue")
    if target is not None and not _target_matches(pre, target):
        raise DescriptionParseError(
            f"target {target!r} not found before cue {cue.group().strip()!r}"
        )
    resolved_target = target if target is not None else _LEADING_ARTICLE_RE.sub("", pre)

    chunk = read_chunk_forward(text, cue.end(), len(text))
    if chunk is None:
        raise DescriptionParseError("no reference after relation cue")
    reference, _, chunk_end = chunk

    rest = text[chunk_end:]
    if relation is RelationType.COMPARE:
        in_that = _IN_THAT_RE.match(rest)
        elaboration = rest[in_that.end() :] if in_that else rest.lstrip(" ,;")
    else:
        elaboration = rest.lstrip(" ,;")
    elaboration = _strip_final_period(elaboration)

    return ParsedDescription(
        target=resolved_target,
        relation=relation,
        reference=reference,
        elaboration=elaboration,
        text=text,
    )


def _parse_are_both(text: str, target: str | None) -> ParsedDescription:
    match = _ARE_BOTH_SPLIT_RE.match(text.strip())
    if match is None:
        raise DescriptionParseError("no relation template matches")
    left = match.group("left").strip()
    right = match.group("right").strip()
    if target is not None:
        if _target_matches(left, target):
            resolved, reference = target, right
        elif _target_matches(right, target):
            resolved, reference = target, left
        else:
            raise DescriptionParseError(f"target {target!r} not in coordination")
    else:
        resolved, reference = _LEADING_ARTICLE_RE.sub("", left), right
    return ParsedDescription(
        target=resolved,
        relation=RelationType.COMPARE,
        reference=reference,
        elaboration=_strip_final_period(match.group("rest")),
        text=text,
    )


_BRACKET_GROUP_RE = re.compile(r"\[([^\[\]]+)\]")


def expand_descriptions(text: str) -> list[str]:
    """Expand bracketed alternative groups ("x is like [a, b] in that ...")
    into one description per member, cartesian across groups. Groups whose
    members are all numeric (citation markers) are left alone."""
    groups: list[tuple[re.Match[str], list[str]]] = []
    for match in _BRACKET_GROUP_RE.finditer(text):
        members = [m.strip() for m in match.group(1).split(",") if m.strip()]
        if len(members) >= 2 and any(any(c.isalpha() for c in m) for m in members):
            groups.append((match, members))
    if not groups:
        return [text]
    expanded = []
    for picks in itertools.product(*(members for _, members in groups)):
        result = []
        cursor = 0
        for (match, _), pick in zip(groups, picks):
            result.append(text[cursor : match.start()])
            result.append(pick)
            cursor = match.end()
        result.append(text[cursor:])
        expanded.append("".join(result))
    return expanded


_AUTHOR_ET_AL_RE = re.compile(r"\bet\s+al\.?\s*$", re.IGNORECASE)
_AUTHOR_YEAR_RE = re.compile(r"\(?\b(?:19|20)\d{2}\b\)?")


def _is_author_name(reference: str) -> bool:
    reference = reference.strip()
    return bool(
        _AUTHOR_ET_AL_RE.search(reference) or _AUTHOR_YEAR_RE.search(reference)
    )


def _reference_in_context(
    reference: str, context_text: str, allow_head_noun: bool
) -> bool:
    ref = " ".join(reference.lower().split())
    ctx = " ".join(context_text.lower().split())
    if ref and ref in ctx:
        return True
    if allow_head_noun:
        ref_tokens = tokenize_with_spans(reference)
        if ref_tokens:
            head = singularize_word(ref_tokens[-1].norm)
            ctx_tokens = {singularize_word(t.norm) for t in tokenize_with_spans(context_text)}
            return head in ctx_tokens
    return False


def filter_description(
    parsed: ParsedDescription,
    context: CandidateContext,
    cfg: FilterConfig = FilterConfig(),
) -> FilterVerdict:
    """First-pass quality gate for generated descriptions.

    Rejects unresolved references ("our work" and friends), references that
    look like author names, descriptions mentioning the target more than
    once (self-description), and references absent from the source context.
    """
    reasons: list[str] = []
    lowered = parsed.text.lower()
    if any(phrase in lowered for phrase in UNRESOLVED_REFERENCE_PHRASES):
        reasons.append("unresolved_reference")
    if _is_author_name(parsed.reference):
        reasons.append("author_name_reference")
    if _count_normalized_phrase(parsed.text, parsed.target) > 1:
        reasons.append("duplicate_target")
    if not _reference_in_context(
        parsed.reference, context.text, cfg.allow_head_noun_reference
    ):
        reasons.append("reference_missing")
    return FilterVerdict(accepted=not reasons, reasons=tuple(reasons))
