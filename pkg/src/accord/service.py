"""Read-only exploration service over final description sets: concept
search, relation/reference cards with provenance, and shared-span
highlighting between a generated description and its source context."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .extraction import RELATION_ORDER, RelationType
from .selection import DescriptionSet, read_sets
from .textnorm import Token, tokenize_with_spans

DEFAULT_MIN_TOKENS = 3


class IndexBuildError(ValueError):
    """Sets and provenance files do not line up."""


@dataclass(frozen=True)
class HighlightSpan:
    char_start: int
    char_end: int


@dataclass(frozen=True)
class Provenance:
    context_id: str
    text: str
    paper_id: str
    title: str
    url: str | None = None


@dataclass(frozen=True)
class Card:
    text: str
    relation: RelationType
    reference: str
    context: str
    paper_id: str
    paper_title: str
    paper_url: str | None
    description_highlights: tuple[HighlightSpan, ...]
    context_highlights: tuple[HighlightSpan, ...]


@dataclass(frozen=True)
class CardGroup:
    relation: RelationType
    cards: tuple[Card, ...]


@dataclass(frozen=True)
class DescriptionIndex:
    """Immutable lookup over description sets plus per-context provenance."""

    sets: dict[str, DescriptionSet]
    provenance: dict[str, Provenance]

    @property
    def concepts(self) -> list[str]:
        return sorted(self.sets)


def load_provenance(path: str | Path) -> dict[str, Provenance]:
    provenance: dict[str, Provenance] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            payload = json.loads(line)
            entry = Provenance(
                context_id=payload["context_id"],
                text=payload["text"],
                paper_id=payload["paper_id"],
                title=payload.get("title", ""),
                url=payload.get("url"),
            )
            provenance[entry.context_id] = entry
    return provenance


def write_provenance(path: str | Path, entries: list[Provenance]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for entry in entries:
            handle.write(
                json.dumps(
                    {
                        "context_id": entry.context_id,
                        "text": entry.text,
                        "paper_id": entry.paper_id,
                        "title": entry.title,
                        "url": entry.url,
                    }
                )
                + "\n"
            )


def build_index(sets_path: str | Path, provenance_path: str | Path) -> DescriptionIndex:
    """Load sets and provenance; every entry's context_id must resolve, and
    a build listing the dangling ids fails rather than serving holes."""
    sets = {s.target: s for s in read_sets(sets_path)}
    provenance = load_provenance(provenance_path)
    dangling = sorted(
        {
            entry.context_id
            for description_set in sets.values()
            for entry in description_set.entries
            if entry.context_id not in provenance
        }
    )
    if dangling:
        raise IndexBuildError(
            "context ids missing from provenance: " + ", ".join(dangling)
        )
    return DescriptionIndex(sets=sets, provenance=provenance)


def query_concepts(index: DescriptionIndex, q: str = "") -> list[str]:
    """Case-insensitive prefix search over indexed targets; empty prefix
    returns the full sorted list."""
    prefix = q.lower()
    return [c for c in index.concepts if c.lower().startswith(prefix)]


def get_cards(
    index: DescriptionIndex,
    concept: str,
    relations: list[RelationType] | None = None,
    k: int = 3,
    min_tokens: int = DEFAULT_MIN_TOKENS,
) -> list[CardGroup]:
    """Cards for a concept grouped by relation (compare before is-a by
    default), at most k per group, each with provenance and precomputed
    shared-span highlights."""
    if concept not in index.sets:
        raise KeyError(concept)
    description_set = index.sets[concept]
    wanted = relations if relations is not None else list(RELATION_ORDER)
    groups: list[CardGroup] = []
    for relation in wanted:
        cards = []
        for entry in description_set.entries:
            if entry.relation is not relation:
                continue
            if len(cards) >= k:
                break
            prov = index.provenance[entry.context_id]
            desc_spans, ctx_spans = shared_spans(entry.text, prov.text, min_tokens)
            cards.append(
                Card(
                    text=entry.text,
                    relation=relation,
                    reference=entry.reference,
                    context=prov.text,
                    paper_id=prov.paper_id,
                    paper_title=prov.title,
                    paper_url=prov.url,
                    description_highlights=tuple(desc_spans),
                    context_highlights=tuple(ctx_spans),
                )
            )
        if cards:
            groups.append(CardGroup(relation=relation, cards=tuple(cards)))
    return groups


# ---------------------------------------------------------------------------
# Shared-span highlighting.
# ---------------------------------------------------------------------------

def _run_key(a: list[str], length: int, i: int, j: int) -> tuple:
    # Content before positions keeps greedy selection symmetric under
    # argument swap (the content and min/max components are swap-invariant).
    return (-length, tuple(a[i : i + length]), min(i, j), max(i, j), i, j)


def _best_common_run(
    a: list[str],
    b: list[str],
    a_used: list[bool],
    b_used: list[bool],
) -> tuple[int, int, int] | None:
    """Longest run of equal tokens over unused positions; equal-length ties
    prefer the lexicographically smallest run content, then the earliest
    positions. Returns (length, i, j)."""
    best: tuple[int, int, int] | None = None
    best_key: tuple | None = None
    for i in range(len(a)):
        if a_used[i]:
            continue
        for j in range(len(b)):
            if b_used[j] or a[i] != b[j]:
                continue
            length = 0
            while (
                i + length < len(a)
                and j + length < len(b)
                and not a_used[i + length]
                and not b_used[j + length]
                and a[i + length] == b[j + length]
            ):
                length += 1
            key = _run_key(a, length, i, j)
            if best_key is None or key < best_key:
                best = (length, i, j)
                best_key = key
    return best


def shared_spans(
    description: str, context: str, min_tokens: int = DEFAULT_MIN_TOKENS
) -> tuple[list[HighlightSpan], list[HighlightSpan]]:
    """Maximal common token runs of length >= min_tokens between the two
    strings, extracted greedily longest-first over normalized tokens and
    mapped back to character offsets. Spans per side are sorted and
    non-overlapping."""
    if min_tokens < 1:
        raise ValueError(f"min_tokens must be >= 1, got {min_tokens}")
    desc_tokens: list[Token] = tokenize_with_spans(description)
    ctx_tokens: list[Token] = tokenize_with_spans(context)
    a = [t.norm for t in desc_tokens]
    b = [t.norm for t in ctx_tokens]
    a_used = [False] * len(a)
    b_used = [False] * len(b)
    desc_spans: list[HighlightSpan] = []
    ctx_spans: list[HighlightSpan] = []
    while True:
        best = _best_common_run(a, b, a_used, b_used)
        if best is None or best[0] < min_tokens:
            break
        length, i, j = best
        for offset in range(length):
            a_used[i + offset] = True
            b_used[j + offset] = True
        desc_spans.append(
            HighlightSpan(desc_tokens[i].char_start, desc_tokens[i + length - 1].char_end)
        )
        ctx_spans.append(
            HighlightSpan(ctx_tokens[j].char_start, ctx_tokens[j + length - 1].char_end)
        )
    desc_spans.sort(key=lambda s: s.char_start)
    ctx_spans.sort(key=lambda s: s.char_start)
    return desc_spans, ctx_spans


# ---------------------------------------------------------------------------
# HTTP layer.
# ---------------------------------------------------------------------------

def _card_payload(card: Card) -> dict:
    return {
        "text": card.text,
        "reference": card.reference,
        "context": card.context,
        "paper_url": card.paper_url,
        "paper_title": card.paper_title,
        "highlights": {
            "description": [[s.char_start, s.char_end] for s in card.description_highlights],
            "context": [[s.char_start, s.char_end] for s in card.context_highlights],
        },
    }


def create_app(index: DescriptionIndex, static_dir: str | Path | None = None) -> FastAPI:
    """Wire the read-only API over a prebuilt index; the index is shared
    across requests and never mutated."""
    app = FastAPI(title="concept description explorer")

    @app.get("/api/health")
    def health() -> dict:
        return {"status": "ok", "concepts": len(index.sets)}

    @app.get("/api/concepts")
    def concepts(q: str = "") -> dict:
        return {"concepts": query_concepts(index, q)}

    @app.get("/api/concepts/{concept}/cards")
    def cards(concept: str, relations: str | None = None, k: int = 3):
        wanted: list[RelationType] | None = None
        if relations:
            try:
                wanted = [
                    RelationType.from_wire(part.strip())
                    for part in relations.split(",")
                    if part.strip()
                ]
            except ValueError:
                return JSONResponse(status_code=400, content={"error": "unknown_relation"})
        try:
            groups = get_cards(index, concept, relations=wanted, k=k)
        except KeyError:
            return JSONResponse(status_code=404, content={"error": "unknown_concept"})
        return {
            "target": concept,
            "groups": [
                {
                    "relation": group.relation.value,
                    "cards": [_card_payload(card) for card in group.cards],
                }
                for group in groups
            ],
        }

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app


def serve(
    index: DescriptionIndex,
    host: str = "127.0.0.1",
    port: int = 8000,
    static_dir: str | Path | None = None,
) -> None:
    """Run the API with uvicorn; port 0 binds an ephemeral port (printed on
    startup)."""
    import socket

    import uvicorn

    app = create_app(index, static_dir=static_dir)
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    sock.bind((host, port))
    bound_port = sock.getsockname()[1]
    print(f"serving on http://{host}:{bound_port}", flush=True)
    server = uvicorn.Server(uvicorn.Config(app, log_level="warning"))
    server.run(sockets=[sock])
