"""Shared text normalization helpers: span-preserving tokenization and
lightweight singularization used for concept matching, reference counting,
and highlight alignment."""

from __future__ import annotations

import re
from dataclasses import dataclass

_WORD_RE = re.compile(r"\S+")

# Plural forms that the suffix rules below would mangle.
_SINGULARIZE_SKIP = {
    "analysis", "basis", "bias", "corpus", "data", "series", "species",
    "thesis", "this", "its", "is", "has", "was", "class", "process",
    "as", "across",
}

_IRREGULAR_PLURALS = {
    "analyses": "analysis",
    "corpora": "corpus",
    "criteria": "criterion",
    "indices": "index",
    "matrices": "matrix",
    "vertices": "vertex",
    "theses": "thesis",
}


@dataclass(frozen=True)
class Token:
    """A whitespace token with edge punctuation stripped; spans index the
    original string."""

    text: str
    char_start: int
    char_end: int

    @property
    def norm(self) -> str:
        return self.text.lower()


def tokenize_with_spans(text: str) -> list[Token]:
    """Whitespace tokenization keeping character offsets.

    Leading/trailing non-alphanumeric characters are stripped from each
    token (internal hyphens and digits survive); tokens that strip to
    nothing are dropped.
    """
    tokens: list[Token] = []
    for match in _WORD_RE.finditer(text):
        raw = match.group()
        left = 0
        while left < len(raw) and not raw[left].isalnum():
            left += 1
        right = len(raw)
        while right > left and not raw[right - 1].isalnum():
            right -= 1
        if right > left:
            tokens.append(
                Token(raw[left:right], match.start() + left, match.start() + right)
            )
    return tokens


def normalized_tokens(text: str) -> list[str]:
    return [token.norm for token in tokenize_with_spans(text)]


def singularize_word(word: str) -> str:
    """Best-effort English singularization of a single lowercase word.

    Rule-based; good enough to unify surface variants of the same concept
    ("autoencoders" vs "autoencoder"). Unknown irregulars pass through.
    """
    lowered = word.lower()
    if lowered in _IRREGULAR_PLURALS:
        return _IRREGULAR_PLURALS[lowered]
    if lowered in _SINGULARIZE_SKIP or len(lowered) < 3:
        return lowered
    if lowered.endswith("ies") and len(lowered) > 4:
        return lowered[:-3] + "y"
    if lowered.endswith(("sses", "shes", "ches", "xes", "zes")):
        return lowered[:-2]
    if lowered.endswith("s") and not lowered.endswith(("ss", "us", "is")):
        return lowered[:-1]
    return lowered


def normalize_concept(phrase: str) -> str:
    """Canonical form used to compare concept strings: lowercase, collapsed
    whitespace, head noun (last word) singularized."""
    words = phrase.lower().split()
    if not words:
        return ""
    words[-1] = singularize_word(words[-1])
    return " ".join(words)


def contains_phrase(text: str, phrase: str) -> bool:
    """Case-insensitive, word-boundary containment of ``phrase`` in ``text``."""
    pattern = re.compile(
        r"(?<![a-z0-9])" + re.escape(phrase.lower()) + r"(?![a-z0-9])"
    )
    return bool(pattern.search(text.lower()))


def count_phrase(text: str, phrase: str) -> int:
    """Count case-insensitive word-boundary occurrences of ``phrase``."""
    pattern = re.compile(
        r"(?<![a-z0-9])" + re.escape(phrase.lower()) + r"(?![a-z0-9])"
    )
    return len(pattern.findall(text.lower()))
