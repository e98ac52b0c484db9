"""Produce corruption records from clean captions.

Two paths: a deterministic rule-table injector (seeded, reproducible down to
the byte) and an LLM-backed injector that renders the shipped generation
prompt and parses the model's <Before>/<After> edit.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Mapping, Optional, Sequence

from .core import (
    Caption,
    CorruptionRecord,
    HallucinationType,
    ImageDomain,
    Span,
    VicritError,
    diff_spans,
    locate_span,
    normalize,
    tokenize,
)

__all__ = [
    "AmbiguousSpan",
    "DegenerateEdit",
    "DeterministicRng",
    "Exemplar",
    "InjectorConfig",
    "NoCandidates",
    "ParseFailure",
    "SpanNotFound",
    "SwapRule",
    "SwapTable",
    "find_candidates",
    "generation_prompt_template",
    "inject",
    "inject_llm",
    "load_exemplars",
    "record_from_edit",
    "render_generation_prompt",
    "validate_record",
]


class InjectionError(VicritError):
    pass


class NoCandidates(InjectionError):
    """No rule table matches anywhere in the caption."""


class ParseFailure(InjectionError):
    """LLM response carries no well-formed <Before>/<After> pair."""


class SpanNotFound(InjectionError):
    """The Before phrase does not occur (token-aligned) in the caption."""


class AmbiguousSpan(InjectionError):
    """The edited phrase occurs more than once, so grading would be ambiguous."""


class DegenerateEdit(InjectionError):
    """Before and After are identical after normalization."""


# Span word-count bounds accepted by validate_record.  Generation targets
# 2-5 word phrases, but recorded spans may be trimmed to the minimal edit
# (as short as one word) and curated edits run up to six words.
VALIDATE_MIN_WORDS = 1
VALIDATE_MAX_WORDS = 6


class DeterministicRng:
    """Counter-based RNG: SHA-256 over (key, counter).

    Keyed on the seed plus arbitrary context strings (e.g. the caption text),
    so every decision is a pure function of its inputs and independent of
    call ordering elsewhere.
    """

    def __init__(self, seed: int, *context: str):
        h = hashlib.sha256()
        h.update(str(int(seed)).encode("ascii"))
        for part in context:
            h.update(b"\x00")
            h.update(part.encode("utf-8"))
        self._key = h.digest()
        self._counter = 0

    def next_u64(self) -> int:
        block = hashlib.sha256(self._key + self._counter.to_bytes(8, "big")).digest()
        self._counter += 1
        return int.from_bytes(block[:8], "big")

    def randbelow(self, n: int) -> int:
        if n <= 0:
            raise ValueError("randbelow needs n >= 1")
        # rejection sampling keeps the draw exactly uniform
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            v = self.next_u64()
            if v < limit:
                return v % n

    def choice(self, seq: Sequence):
        return seq[self.randbelow(len(seq))]

    def weighted_choice(self, items: Sequence, weights: Sequence[float]):
        total = float(sum(weights))
        if total <= 0:
            raise ValueError("weights must sum to a positive value")
        x = (self.next_u64() / float(1 << 64)) * total
        acc = 0.0
        for item, w in zip(items, weights):
            acc += w
            if x < acc:
                return item
        return items[-1]


@dataclass(frozen=True)
class SwapRule:
    """Pattern of normalized words ('*' matches one word) with replacements."""

    pattern: tuple[str, ...]
    replacements: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        if not self.pattern:
            raise ValueError("empty pattern")
        if not self.replacements:
            raise ValueError(f"rule {self.pattern} has no replacements")
        for repl in self.replacements:
            if repl == self.pattern:
                raise ValueError(f"rule {self.pattern} maps the phrase to itself")
            if repl.count("*") != self.pattern.count("*"):
                raise ValueError(f"rule {self.pattern} -> {repl}: wildcard count mismatch")
        # phrase-length band: multi-word matches keep replacements in 2-5 words
        if 2 <= len(self.pattern) <= 5:
            for repl in self.replacements:
                if not 2 <= len(repl) <= 5:
                    raise ValueError(f"rule {self.pattern} -> {repl}: replacement leaves the 2-5 word band")

    @classmethod
    def parse(cls, pattern: str, replacements: Sequence[str]) -> "SwapRule":
        return cls(
            tuple(pattern.split()),
            tuple(tuple(r.split()) for r in replacements),
        )


@dataclass(frozen=True)
class SwapTable:
    h_type: HallucinationType
    rules: tuple[SwapRule, ...]
    quoted_text_mode: bool = False


@dataclass(frozen=True)
class InjectorConfig:
    seed: int
    type_weights: Optional[Mapping[HallucinationType, float]] = None
    min_span_words: int = 2
    max_span_words: int = 5

    def __post_init__(self):
        if not 1 <= self.min_span_words <= self.max_span_words:
            raise ValueError("need 1 <= min_span_words <= max_span_words")
        if self.type_weights is not None:
            if any(w < 0 for w in self.type_weights.values()):
                raise ValueError("type weights must be non-negative")
            if sum(self.type_weights.values()) <= 0:
                raise ValueError("type weights must sum > 0")

    def weight(self, h_type: HallucinationType) -> float:
        if self.type_weights is None:
            return 1.0
        return float(self.type_weights.get(h_type, 0.0))


Candidate = tuple[Span, list[str]]


def _match_case(replacement: str, original: str) -> str:
    """Carry an initial capital letter over to the replacement."""
    for ch in original:
        if ch.isalpha():
            if ch.isupper() and replacement and replacement[0].islower():
                return replacement[0].upper() + replacement[1:]
            break
    return replacement


def _literal_candidates(caption: Caption, table: SwapTable) -> list[Candidate]:
    words = caption.words
    token_idx = caption.word_token_indices
    n = len(words)
    out: list[Candidate] = []
    i = 0
    while i < n:
        claimed = None
        for rule in table.rules:
            m = len(rule.pattern)
            if i + m > n:
                continue
            captures: list[str] = []
            ok = True
            for k, pat in enumerate(rule.pattern):
                # matched words must be adjacent tokens: no punctuation may
                # sit inside the spliced region
                if k > 0 and token_idx[i + k] != token_idx[i + k - 1] + 1:
                    ok = False
                    break
                if pat == "*":
                    captures.append(caption.tokens[token_idx[i + k]].surface)
                elif words[i + k] != pat:
                    ok = False
                    break
            if not ok:
                continue
            span = caption.word_range_to_span(i, i + m)
            repls = []
            for template in rule.replacements:
                caps = iter(captures)
                rendered = " ".join(next(caps) if w == "*" else w for w in template)
                repls.append(_match_case(rendered, span.text))
            claimed = (span, repls, m)
            break
        if claimed:
            out.append((claimed[0], claimed[1]))
            i += claimed[2]
        else:
            i += 1
    return out


_VOWELS = "aeiou"
_CONSONANTS = "bcdfghjklmnpqrstvwxyz"


def _rotate_letter(ch: str, steps: int) -> str:
    low = ch.lower()
    pool = _VOWELS if low in _VOWELS else _CONSONANTS
    if low not in pool:
        return ch
    rotated = pool[(pool.index(low) + steps) % len(pool)]
    return rotated.upper() if ch.isupper() else rotated


def _mutate_word(word: str, steps: int) -> str:
    """Shift one character of a scene-text word: first digit if any, else the
    first letter."""
    for i, ch in enumerate(word):
        if ch.isdigit():
            return word[:i] + str((int(ch) + steps) % 10) + word[i + 1 :]
    for i, ch in enumerate(word):
        if ch.isalpha():
            return word[:i] + _rotate_letter(ch, steps) + word[i + 1 :]
    return word


_QUOTE_CHARS = {'"', "“", "”"}


def _quoted_text_candidates(caption: Caption, max_words: int = 5) -> list[Candidate]:
    """Spans of quoted scene text with one word mutated per replacement.

    Single-word quotes are widened with the preceding word so the span stays
    a locatable phrase.
    """
    tokens = caption.tokens
    quote_positions = [i for i, t in enumerate(tokens) if t.surface in _QUOTE_CHARS]
    out: list[Candidate] = []
    for open_i, close_i in zip(quote_positions[::2], quote_positions[1::2]):
        inner = [i for i in range(open_i + 1, close_i) if tokens[i].normalized]
        if not inner or len(inner) > max_words:
            continue
        first, last = inner[0], inner[-1]
        if len(inner) == 1:
            prev_words = [i for i in range(open_i) if tokens[i].normalized]
            if not prev_words:
                continue
            first = prev_words[-1]
        span = caption.span(first, last - first + 1)
        target = tokens[last]
        repls = []
        for steps in (1, 2):
            mutated = _mutate_word(target.surface, steps)
            if normalize(mutated) == target.normalized:
                continue
            offset = target.start - tokens[first].start
            span_bytes = span.text.encode("utf-8")
            repl = (
                span_bytes[:offset] + mutated.encode("utf-8") + span_bytes[offset + (target.end - target.start) :]
            ).decode("utf-8")
            repls.append(repl)
        if repls:
            out.append((span, repls))
    return out


def find_candidates(caption: Caption, h_type: HallucinationType, table: SwapTable) -> list[Candidate]:
    """All non-overlapping candidate spans of ``table`` in caption order,
    each paired with its rendered replacement phrases."""
    if table.h_type != h_type:
        raise ValueError(f"table is for {table.h_type}, not {h_type}")
    if table.quoted_text_mode:
        return _quoted_text_candidates(caption)
    return _literal_candidates(caption, table)


def _span_word_count(text: str) -> int:
    n = normalize(text)
    return len(n.split(" ")) if n else 0


def _build_record(
    caption: Caption,
    span: Span,
    replacement: str,
    h_type: HallucinationType,
    image_ref: str,
    domain: Optional[ImageDomain],
) -> CorruptionRecord:
    """Splice a replacement in and record the minimal differing span pair."""
    corrupted = Caption(caption.splice(span, replacement))
    original_span, hallucinated_span = diff_spans(caption, corrupted)
    return CorruptionRecord(
        image_ref=image_ref,
        original=caption,
        corrupted=corrupted,
        original_span=original_span,
        hallucinated_span=hallucinated_span,
        h_type=h_type,
        domain=domain,
    )


def _try_build(
    caption: Caption,
    span: Span,
    replacement: str,
    h_type: HallucinationType,
    image_ref: str,
    domain: Optional[ImageDomain],
) -> Optional[CorruptionRecord]:
    if normalize(replacement) == normalize(span.text):
        return None
    try:
        record = _build_record(caption, span, replacement, h_type, image_ref, domain)
    except VicritError:
        return None
    return record if not validate_record(record) else None


def inject(
    caption: Caption | str,
    config: InjectorConfig,
    tables: Optional[Mapping[HallucinationType, SwapTable]] = None,
    *,
    image_ref: str = "",
    domain: Optional[ImageDomain] = None,
) -> CorruptionRecord:
    """Deterministically corrupt one span of the caption.

    The hallucination type is sampled by configured weight among types with a
    valid candidate, then a candidate span uniformly, then a replacement
    uniformly, all from a counter-based RNG keyed on (seed, caption), so the
    result is a pure function of its inputs.
    """
    if isinstance(caption, str):
        caption = Caption(caption)
    if tables is None:
        from .tables import default_tables

        tables = default_tables()

    valid: dict[HallucinationType, list[tuple[Span, list[str]]]] = {}
    for h_type, table in tables.items():
        if config.weight(h_type) <= 0:
            continue
        per_type = []
        for span, repls in find_candidates(caption, h_type, table):
            if not config.min_span_words <= _span_word_count(span.text) <= config.max_span_words:
                continue
            ok_repls = [
                r for r in repls if _try_build(caption, span, r, h_type, image_ref, domain) is not None
            ]
            if ok_repls:
                per_type.append((span, ok_repls))
        if per_type:
            valid[h_type] = per_type

    if not valid:
        raise NoCandidates("no swap table matches this caption")

    rng = DeterministicRng(config.seed, caption.text)
    types = sorted(valid, key=lambda t: t.value)
    h_type = rng.weighted_choice(types, [config.weight(t) for t in types])
    span, repls = rng.choice(valid[h_type])
    replacement = rng.choice(repls)
    record = _try_build(caption, span, replacement, h_type, image_ref, domain)
    assert record is not None  # pre-filtered above
    return record


def validate_record(
    record: CorruptionRecord,
    min_words: int = VALIDATE_MIN_WORDS,
    max_words: int = VALIDATE_MAX_WORDS,
) -> list[str]:
    """Check every record invariant; returns violation descriptions (empty
    means valid).  Violations are data, not exceptions, so callers can batch
    and report."""
    violations: list[str] = []
    original, corrupted = record.original, record.corrupted
    o_span, h_span = record.original_span, record.hallucinated_span

    for caption, span, label in (
        (original, o_span, "original_span"),
        (corrupted, h_span, "hallucinated_span"),
    ):
        if span.token_start < 0 or span.token_len < 1 or span.token_start + span.token_len > len(caption.tokens):
            violations.append(f"SpanOutOfBounds: {label} does not fit its caption")
            return violations
        if caption.surface(span.token_start, span.token_len) != span.text:
            violations.append(f"SpanMismatch: {label} text differs from the caption surface")
            return violations

    if normalize(o_span.text) == normalize(h_span.text):
        violations.append("DegenerateEdit: spans are identical after normalization")

    for span, label in ((o_span, "original"), (h_span, "hallucinated")):
        count = _span_word_count(span.text)
        if count < min_words:
            violations.append(f"SpanTooShort: {label} span has {count} words (min {min_words})")
        elif count > max_words:
            violations.append(f"SpanTooLong: {label} span has {count} words (max {max_words})")

    occurrences = len(locate_span(corrupted, h_span.text))
    if occurrences != 1:
        violations.append(
            f"AmbiguousSpan: hallucinated span occurs {occurrences} times in the corrupted caption"
        )

    if corrupted.splice(h_span, o_span.text) != original.text:
        violations.append("ReverseSubstitutionFailed: swapping the spans back does not restore the original")

    try:
        diff_o, diff_h = diff_spans(original, corrupted)
    except VicritError as exc:
        violations.append(f"{type(exc).__name__}: {exc}")
    else:
        if not (
            o_span.token_start <= diff_o.token_start
            and diff_o.token_start + diff_o.token_len <= o_span.token_start + o_span.token_len
        ):
            violations.append("SpanMismatch: recorded original span does not cover the differing region")
        if not (
            h_span.token_start <= diff_h.token_start
            and diff_h.token_start + diff_h.token_len <= h_span.token_start + h_span.token_len
        ):
            violations.append("SpanMismatch: recorded hallucinated span does not cover the differing region")
    return violations


# --- LLM-backed injection ---------------------------------------------------


@dataclass(frozen=True)
class Exemplar:
    caption: str
    before: str
    after: str


_EXEMPLAR_RE = re.compile(
    r"^\d+\. <Caption>(.*?)</Caption>\s*<Before>(.*?)</Before>\s*<After>(.*?)</After>",
    re.DOTALL | re.MULTILINE,
)
_EXAMPLES_HEADER = "Here are some examples:"
_INPUT_FOOTER = "Here is the input caption:"


def generation_prompt_template() -> str:
    """The shipped data-generation prompt, verbatim."""
    return (
        resources.files("vicrit.data.prompts").joinpath("data_generation_prompt.txt").read_text("utf-8")
    )


def load_exemplars() -> list[Exemplar]:
    """The worked Before/After examples embedded in the prompt fixture."""
    found = _EXEMPLAR_RE.findall(generation_prompt_template())
    return [Exemplar(c.strip(), b.strip(), a.strip()) for c, b, a in found]


def render_generation_prompt(caption_text: str, exemplars: Sequence[Exemplar]) -> str:
    """Instructions verbatim from the fixture, with the chosen exemplars and
    the input caption substituted in."""
    template = generation_prompt_template()
    head = template[: template.index(_EXAMPLES_HEADER) + len(_EXAMPLES_HEADER)]
    tail = template[template.index(_INPUT_FOOTER) :]
    blocks = [
        f"{i}. <Caption>{ex.caption}</Caption>\n\n<Before>{ex.before}</Before>\n\n<After>{ex.after}</After>"
        for i, ex in enumerate(exemplars, start=1)
    ]
    return head + "\n\n" + "\n\n".join(blocks) + "\n\n" + tail.replace("{CAPTION}", caption_text)


_BEFORE_RE = re.compile(r"<Before>(.*?)</Before>", re.DOTALL)
_AFTER_RE = re.compile(r"<After>(.*?)</After>", re.DOTALL)

MIN_LLM_CAPTION_WORDS = 20


def _token_aligned_span(caption: Caption, byte_start: int, byte_end: int) -> Optional[Span]:
    tokens = caption.tokens
    covered = [i for i, t in enumerate(tokens) if t.start >= byte_start and t.end <= byte_end]
    if not covered:
        return None
    first, last = covered[0], covered[-1]
    if tokens[first].start != byte_start or tokens[last].end != byte_end:
        return None
    return caption.span(first, last - first + 1)


def record_from_edit(
    caption: Caption,
    before: str,
    after: str,
    *,
    h_type: HallucinationType = HallucinationType.OBJECT,
    image_ref: str = "",
    domain: Optional[ImageDomain] = None,
) -> CorruptionRecord:
    """Apply a Before/After substitution and build the record with those
    spans verbatim.  Raises when the edit cannot be applied unambiguously."""
    if normalize(before) == normalize(after):
        raise DegenerateEdit("Before and After normalize to the same phrase")
    count = caption.text.count(before)
    if count == 0:
        raise SpanNotFound("Before phrase does not occur in the caption")
    if count > 1:
        raise AmbiguousSpan(f"Before phrase occurs {count} times in the caption")

    char_start = caption.text.index(before)
    byte_start = len(caption.text[:char_start].encode("utf-8"))
    byte_end = byte_start + len(before.encode("utf-8"))
    original_span = _token_aligned_span(caption, byte_start, byte_end)
    if original_span is None:
        raise SpanNotFound("Before phrase is not aligned to token boundaries")

    corrupted = Caption(caption.splice(original_span, after))
    hallucinated_span = _token_aligned_span(caption=corrupted, byte_start=byte_start, byte_end=byte_start + len(after.encode("utf-8")))
    if hallucinated_span is None or hallucinated_span.text != after:
        raise ParseFailure("After phrase does not splice cleanly into the caption")

    record = CorruptionRecord(
        image_ref=image_ref,
        original=caption,
        corrupted=corrupted,
        original_span=original_span,
        hallucinated_span=hallucinated_span,
        h_type=h_type,
        domain=domain,
    )
    violations = validate_record(record)
    if violations:
        if any(v.startswith("AmbiguousSpan") for v in violations):
            raise AmbiguousSpan("; ".join(violations))
        if any(v.startswith("DegenerateEdit") for v in violations):
            raise DegenerateEdit("; ".join(violations))
        raise InjectionError("; ".join(violations))
    return record


def inject_llm(
    caption: Caption | str,
    client,
    exemplars: Optional[Sequence[Exemplar]] = None,
    *,
    seed: int = 0,
    h_type: HallucinationType = HallucinationType.OBJECT,
    image_ref: str = "",
    domain: Optional[ImageDomain] = None,
) -> CorruptionRecord:
    """Corrupt a caption by asking a chat model for a Before/After edit.

    Renders the generation prompt with two deterministically sampled
    exemplars, parses the first <Before>/<After> pair in the response, and
    returns the validated record.
    """
    if isinstance(caption, str):
        caption = Caption(caption)
    if len(caption.words) < MIN_LLM_CAPTION_WORDS:
        raise ValueError(f"caption must have at least {MIN_LLM_CAPTION_WORDS} words")

    pool = list(exemplars) if exemplars is not None else load_exemplars()
    rng = DeterministicRng(seed, caption.text, "exemplars")
    chosen: list[Exemplar] = []
    remaining = list(pool)
    for _ in range(min(2, len(remaining))):
        pick = rng.randbelow(len(remaining))
        chosen.append(remaining.pop(pick))

    prompt = render_generation_prompt(caption.text, chosen)
    response = client.complete([{"role": "user", "content": prompt}])

    before_m = _BEFORE_RE.search(response)
    after_m = _AFTER_RE.search(response)
    if not before_m or not after_m:
        raise ParseFailure("response has no <Before>/<After> pair")
    before = before_m.group(1).strip()
    after = after_m.group(1).strip()
    if not before or not after:
        raise ParseFailure("empty Before or After tag")

    return record_from_edit(
        caption, before, after, h_type=h_type, image_ref=image_ref, domain=domain
    )
