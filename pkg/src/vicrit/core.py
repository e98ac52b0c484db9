"""Shared domain types plus the text primitives every other module builds on.

Captions are treated as immutable token streams.  A token keeps its exact
surface form and byte range so the original text can always be reconstructed,
plus a normalized form used for all matching and grading.
"""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Iterable, Optional

__all__ = [
    "Caption",
    "CorruptionRecord",
    "HallucinationType",
    "IdenticalCaptions",
    "ImageDomain",
    "MultipleDiffRegions",
    "NORMALIZATION_PROFILE",
    "Span",
    "Token",
    "VicritError",
    "detokenize",
    "diff_spans",
    "locate_span",
    "normalize",
    "tokenize",
]


class VicritError(Exception):
    """Base class for all package errors."""


class IdenticalCaptions(VicritError):
    """Raised when a caption pair has no differing words."""


class MultipleDiffRegions(VicritError):
    """Raised when a caption pair differs in more than one contiguous region."""


# Quote folding applied before any matching: typographic quotes in source
# captions must compare equal to the straight quotes models emit.
_QUOTE_FOLD = str.maketrans({
    "‘": "'",  # left single
    "’": "'",  # right single
    "‚": "'",
    "‛": "'",
    "“": '"',  # left double
    "”": '"',  # right double
    "„": '"',
    "‟": '"',
})

# Documented contract of `normalize`; hashed into service config_hash so
# clients can detect grading-rule drift.
NORMALIZATION_PROFILE = {
    "id": "vicrit-norm-v1",
    "unicode_form": "NFKC",
    "lowercase": True,
    "fold_typographic_quotes": True,
    "keep_intraword": ["-", "'"],
    "keep_trailing_percent": True,
    "collapse_whitespace": True,
}

# Aligned common run (in words) inside a diff window at or above which the
# window is treated as two separate edits rather than one phrase replacement.
# Single-span corruptions keep interior gaps short (e.g. "low ... 15-20%" has
# a 3-word gap); independent edits sit much further apart.
MULTI_EDIT_GAP = 4


@dataclass(frozen=True)
class Token:
    """One surface token with its byte range in the source text."""

    surface: str
    normalized: str
    start: int  # byte offset into the UTF-8 encoding of the source
    end: int

    @property
    def is_word(self) -> bool:
        return bool(self.normalized)


def _normalize_token(surface: str) -> str:
    """Normalized form of a single token: NFKC, straight quotes, lowercase,
    punctuation dropped except intra-word hyphen/apostrophe and a percent
    sign attached to the preceding character."""
    s = unicodedata.normalize("NFKC", surface).translate(_QUOTE_FOLD).lower()
    out = []
    for i, ch in enumerate(s):
        if ch.isalnum():
            out.append(ch)
        elif ch in "-'" and 0 < i < len(s) - 1 and s[i - 1].isalnum() and s[i + 1].isalnum():
            out.append(ch)
        elif ch == "%" and i > 0 and s[i - 1].isalnum():
            out.append(ch)
    return "".join(out)


def _is_punct(ch: str) -> bool:
    return not ch.isalnum()


def tokenize(text: str) -> list[Token]:
    """Split text into tokens: words on whitespace, leading/trailing
    punctuation as separate single-character tokens, intra-word characters
    (hyphens, apostrophes, anything else) kept attached.

    Byte ranges are non-overlapping, strictly increasing, and cover all
    non-whitespace bytes, so the source text can be reconstructed exactly.
    """
    tokens: list[Token] = []
    byte_pos = 0
    chunk_chars: list[str] = []
    chunk_start = 0

    def flush() -> None:
        if not chunk_chars:
            return
        chunk = "".join(chunk_chars)
        start = chunk_start
        # leading punctuation, one token per character
        i = 0
        while i < len(chunk) and _is_punct(chunk[i]):
            w = len(chunk[i].encode("utf-8"))
            tokens.append(Token(chunk[i], _normalize_token(chunk[i]), start, start + w))
            start += w
            i += 1
        # trailing punctuation, except '%' glued to an alphanumeric
        j = len(chunk)
        while j > i and _is_punct(chunk[j - 1]):
            if chunk[j - 1] == "%" and chunk[j - 2 : j - 1].isalnum():
                break
            j -= 1
        core = chunk[i:j]
        if core:
            w = len(core.encode("utf-8"))
            tokens.append(Token(core, _normalize_token(core), start, start + w))
            start += w
        for ch in chunk[j:]:
            w = len(ch.encode("utf-8"))
            tokens.append(Token(ch, _normalize_token(ch), start, start + w))
            start += w
        chunk_chars.clear()

    for ch in text:
        width = len(ch.encode("utf-8"))
        if ch.isspace():
            flush()
        else:
            if not chunk_chars:
                chunk_start = byte_pos
            chunk_chars.append(ch)
        byte_pos += width
    flush()
    return tokens


def detokenize(tokens: Iterable[Token], gaps: Iterable[str]) -> str:
    """Rebuild text from tokens plus the recorded inter-token whitespace.

    ``gaps`` must hold one entry per token (the whitespace preceding it)
    plus a final trailing entry.
    """
    gaps = list(gaps)
    tokens = list(tokens)
    if len(gaps) != len(tokens) + 1:
        raise ValueError("gaps must have len(tokens) + 1 entries")
    parts = []
    for gap, tok in zip(gaps, tokens):
        parts.append(gap)
        parts.append(tok.surface)
    parts.append(gaps[-1])
    return "".join(parts)


def normalize(text: str) -> str:
    """Canonical matching form of a text: the space-joined normalized word
    stream.  Idempotent; empty for punctuation-only input."""
    return " ".join(t.normalized for t in tokenize(text) if t.normalized)


@dataclass(frozen=True)
class Caption:
    """Immutable caption text with cached tokenization."""

    text: str

    @cached_property
    def tokens(self) -> tuple[Token, ...]:
        return tuple(tokenize(self.text))

    @cached_property
    def text_bytes(self) -> bytes:
        return self.text.encode("utf-8")

    @cached_property
    def gaps(self) -> tuple[str, ...]:
        """Whitespace before each token plus the trailing run."""
        out = []
        prev_end = 0
        for tok in self.tokens:
            out.append(self.text_bytes[prev_end : tok.start].decode("utf-8"))
            prev_end = tok.end
        out.append(self.text_bytes[prev_end:].decode("utf-8"))
        return tuple(out)

    @cached_property
    def words(self) -> tuple[str, ...]:
        """Normalized word stream (punctuation-only tokens skipped)."""
        return tuple(t.normalized for t in self.tokens if t.normalized)

    @cached_property
    def word_token_indices(self) -> tuple[int, ...]:
        """Token index of each entry in ``words``."""
        return tuple(i for i, t in enumerate(self.tokens) if t.normalized)

    def surface(self, token_start: int, token_len: int) -> str:
        """Exact source text covered by a token range."""
        if token_len < 1 or token_start < 0 or token_start + token_len > len(self.tokens):
            raise ValueError(f"token range [{token_start}, +{token_len}) out of bounds")
        first = self.tokens[token_start]
        last = self.tokens[token_start + token_len - 1]
        return self.text_bytes[first.start : last.end].decode("utf-8")

    def span(self, token_start: int, token_len: int) -> "Span":
        return Span(token_start, token_len, self.surface(token_start, token_len))

    def word_range_to_span(self, word_start: int, word_end: int) -> "Span":
        """Span covering words [word_start, word_end) of the word stream."""
        if word_end <= word_start:
            raise ValueError("empty word range")
        t0 = self.word_token_indices[word_start]
        t1 = self.word_token_indices[word_end - 1]
        return self.span(t0, t1 - t0 + 1)

    def splice(self, span: "Span", replacement: str) -> str:
        """Text with the span's byte range replaced by ``replacement``."""
        first = self.tokens[span.token_start]
        last = self.tokens[span.token_start + span.token_len - 1]
        return (
            self.text_bytes[: first.start].decode("utf-8")
            + replacement
            + self.text_bytes[last.end :].decode("utf-8")
        )


@dataclass(frozen=True)
class Span:
    """A contiguous token range of a caption plus its surface text."""

    token_start: int
    token_len: int
    text: str

    def to_json(self) -> dict:
        return {"token_start": self.token_start, "token_len": self.token_len, "text": self.text}

    @classmethod
    def from_json(cls, obj: dict) -> "Span":
        return cls(int(obj["token_start"]), int(obj["token_len"]), str(obj["text"]))


class HallucinationType(Enum):
    COUNT = "count"
    MATERIAL = "material"
    SPATIAL = "spatial"
    COLOR = "color"
    OBJECT = "object"
    CONDITION = "condition"
    SHAPE = "shape"
    TEXT = "text"


class ImageDomain(Enum):
    NATURAL = "natural"
    DOCUMENT = "document"
    SCENE_TEXT = "scene_text"
    ABSTRACT = "abstract"


@dataclass(frozen=True)
class CorruptionRecord:
    """One corruption instance: clean caption, corrupted twin, and the two
    spans that differ, plus taxonomy labels."""

    image_ref: str
    original: Caption
    corrupted: Caption
    original_span: Span
    hallucinated_span: Span
    h_type: HallucinationType
    domain: Optional[ImageDomain] = None

    def to_json(self) -> dict:
        return {
            "image_ref": self.image_ref,
            "original_caption": self.original.text,
            "corrupted_caption": self.corrupted.text,
            "original_span": self.original_span.to_json(),
            "hallucinated_span": self.hallucinated_span.to_json(),
            "hallucination_type": self.h_type.value,
            "image_domain": self.domain.value if self.domain else None,
        }

    def to_jsonl(self) -> str:
        return json.dumps(self.to_json(), ensure_ascii=False)

    @classmethod
    def from_json(cls, obj: dict) -> "CorruptionRecord":
        domain = obj.get("image_domain")
        return cls(
            image_ref=str(obj.get("image_ref", "")),
            original=Caption(str(obj["original_caption"])),
            corrupted=Caption(str(obj["corrupted_caption"])),
            original_span=Span.from_json(obj["original_span"]),
            hallucinated_span=Span.from_json(obj["hallucinated_span"]),
            h_type=HallucinationType(obj["hallucination_type"]),
            domain=ImageDomain(domain) if domain else None,
        )


def locate_span(caption: Caption, phrase: str) -> list[Span]:
    """All token-aligned occurrences of ``phrase`` in ``caption``, matched on
    the normalized word stream, in caption order."""
    target = [t.normalized for t in tokenize(phrase) if t.normalized]
    if not target:
        return []
    words = caption.words
    n, m = len(words), len(target)
    spans = []
    for i in range(n - m + 1):
        if list(words[i : i + m]) == target:
            spans.append(caption.word_range_to_span(i, i + m))
    return spans


def _common_prefix(a: tuple[str, ...], b: tuple[str, ...]) -> int:
    p = 0
    limit = min(len(a), len(b))
    while p < limit and a[p] == b[p]:
        p += 1
    return p


def _longest_common_run(a: list[str], b: list[str]) -> int:
    """Length of the longest common contiguous word run between two lists."""
    best = 0
    for i in range(len(a)):
        for j in range(len(b)):
            k = 0
            while i + k < len(a) and j + k < len(b) and a[i + k] == b[j + k]:
                k += 1
            if k > best:
                best = k
    return best


def diff_spans(original: Caption, corrupted: Caption) -> tuple[Span, Span]:
    """Minimal contiguous (original, hallucinated) span pair such that
    replacing one by the other maps one word stream onto the other.

    Computed by longest common prefix/suffix over the normalized word
    streams.  Raises IdenticalCaptions when the streams match and
    MultipleDiffRegions when the differing window contains an aligned common
    run of MULTI_EDIT_GAP or more words (two independent edits).
    """
    wa, wb = original.words, corrupted.words
    if wa == wb:
        raise IdenticalCaptions("captions have identical normalized word streams")
    if not wa or not wb:
        raise VicritError("cannot diff against an empty caption")

    p = _common_prefix(wa, wb)
    limit = min(len(wa), len(wb)) - p
    s = 0
    while s < limit and wa[len(wa) - 1 - s] == wb[len(wb) - 1 - s]:
        s += 1
    # pure insertion/deletion at the boundary: widen so both windows are
    # non-empty and the replacement reading still holds
    if p + s == len(wa) or p + s == len(wb):
        if s > 0:
            s -= 1
        else:
            p -= 1

    win_a = list(wa[p : len(wa) - s])
    win_b = list(wb[p : len(wb) - s])
    if _longest_common_run(win_a, win_b) >= MULTI_EDIT_GAP:
        raise MultipleDiffRegions(
            f"differing window shares a common run of >= {MULTI_EDIT_GAP} words; "
            "caption pair contains more than one edit"
        )
    return (
        original.word_range_to_span(p, len(wa) - s),
        corrupted.word_range_to_span(p, len(wb) - s),
    )
