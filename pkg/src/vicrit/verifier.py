"""Grade a model response against a corruption record.

The answer reward is a relaxed exact match: the prediction may copy extra
words before or after the hallucinated span as long as they are exact copies
from the caption, i.e. it must equal some contiguous window of the corrupted
caption that fully contains the span.  The format reward checks for
``<think>...</think>`` reasoning followed by a ``\\boxed{}`` answer.  Both
are binary and mixed 0.9/0.1, so totals are always one of 0, 0.1, 0.9, 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .core import Caption, CorruptionRecord, Span, VicritError, normalize

__all__ = [
    "CaptionTooLong",
    "ParsedResponse",
    "RewardBreakdown",
    "brute_force_match",
    "match_answer",
    "parse_response",
    "reward",
    "strict_match",
    "window_match",
]

# reward mix in integer tenths; keeps totals exact
ANSWER_WEIGHT_TENTHS = 9
FORMAT_WEIGHT_TENTHS = 1

BRUTE_FORCE_TOKEN_CAP = 512


class CaptionTooLong(VicritError):
    """Corrupted caption exceeds the brute-force oracle's token cap."""


@dataclass(frozen=True)
class ParsedResponse:
    think_block: Optional[str]
    boxed_answer: Optional[str]
    format_ok: bool


@dataclass(frozen=True)
class RewardBreakdown:
    r_answer: int
    r_format: int
    total: float

    w_answer = ANSWER_WEIGHT_TENTHS / 10
    w_format = FORMAT_WEIGHT_TENTHS / 10

    @classmethod
    def mix(cls, r_answer: int, r_format: int) -> "RewardBreakdown":
        tenths = ANSWER_WEIGHT_TENTHS * r_answer + FORMAT_WEIGHT_TENTHS * r_format
        return cls(r_answer=r_answer, r_format=r_format, total=tenths / 10)

    def to_json(self) -> dict:
        return {"r_answer": self.r_answer, "r_format": self.r_format, "total": self.total}


_THINK_OPEN = "<think>"
_THINK_CLOSE = "</think>"
_BOX_MARKER = "\\boxed{"


def _find_boxed(response: str) -> list[tuple[int, str]]:
    """(start, content) of every brace-balanced \\boxed{...} occurrence."""
    found = []
    pos = 0
    while True:
        start = response.find(_BOX_MARKER, pos)
        if start < 0:
            break
        depth = 1
        i = start + len(_BOX_MARKER)
        while i < len(response) and depth > 0:
            if response[i] == "{":
                depth += 1
            elif response[i] == "}":
                depth -= 1
            i += 1
        if depth == 0:
            found.append((start, response[start + len(_BOX_MARKER) : i - 1]))
        pos = start + len(_BOX_MARKER)
    return found


def parse_response(response: str) -> ParsedResponse:
    """Extract the first think block and the last well-formed boxed answer.

    Never raises: missing pieces are None and format_ok is False.
    """
    think_block = None
    think_end = None
    open_i = response.find(_THINK_OPEN)
    if open_i >= 0:
        close_i = response.find(_THINK_CLOSE, open_i + len(_THINK_OPEN))
        if close_i >= 0:
            think_block = response[open_i + len(_THINK_OPEN) : close_i]
            think_end = close_i + len(_THINK_CLOSE)

    boxed = _find_boxed(response)
    boxed_answer = boxed[-1][1] if boxed else None

    format_ok = (
        think_block is not None
        and boxed_answer is not None
        and boxed[-1][0] >= (think_end if think_end is not None else 0)
    )
    return ParsedResponse(think_block=think_block, boxed_answer=boxed_answer, format_ok=format_ok)


def _span_word_range(caption: Caption, span: Span) -> Optional[tuple[int, int]]:
    """Inclusive (first, last) indices of the span's words in the caption's
    normalized word stream; None when the span covers no word token."""
    lo, hi = span.token_start, span.token_start + span.token_len
    covered = [k for k, t in enumerate(caption.word_token_indices) if lo <= t < hi]
    if not covered:
        return None
    return covered[0], covered[-1]


def window_match(prediction: str, corrupted: Caption, hallucinated_span: Span) -> int:
    """1 iff the normalized prediction equals some contiguous word window of
    the corrupted caption that fully contains the hallucinated span."""
    pred = normalize(prediction)
    if not pred:
        return 0
    pred_words = pred.split(" ")
    span_range = _span_word_range(corrupted, hallucinated_span)
    if span_range is None:
        return 0
    h_first, h_last = span_range
    words = corrupted.words
    n, m = len(words), len(pred_words)
    if m < h_last - h_first + 1 or m > n:
        return 0
    # any window of length m containing [h_first, h_last] must start here
    for i in range(max(0, h_last - m + 1), min(h_first, n - m) + 1):
        if list(words[i : i + m]) == pred_words:
            return 1
    return 0


def match_answer(prediction: str, record: CorruptionRecord) -> int:
    """Relaxed exact match of a prediction against the hallucinated span."""
    return window_match(prediction, record.corrupted, record.hallucinated_span)


def strict_match(prediction: str, span_text: str) -> int:
    """Whole-span exact equality after normalization."""
    pred = normalize(prediction)
    return 1 if pred and pred == normalize(span_text) else 0


def brute_force_match(prediction: str, record: CorruptionRecord) -> int:
    """Independent oracle for match_answer: enumerate every contiguous token
    window of the corrupted caption and accept iff one that contains the
    hallucinated span equals the normalized prediction."""
    corrupted = record.corrupted
    if len(corrupted.tokens) > BRUTE_FORCE_TOKEN_CAP:
        raise CaptionTooLong(f"corrupted caption has more than {BRUTE_FORCE_TOKEN_CAP} tokens")
    span_range = _span_word_range(corrupted, record.hallucinated_span)
    if span_range is None:
        return 0
    h_first, h_last = span_range
    pred = normalize(prediction)
    if not pred:
        return 0
    pred_words = pred.split(" ")
    words = list(corrupted.words)
    n = len(words)
    for i in range(n):
        for j in range(i + 1, n + 1):
            if i <= h_first and j > h_last and j - i == len(pred_words) and words[i:j] == pred_words:
                return 1
    return 0


def reward(response: str, record: CorruptionRecord, mode: str = "relaxed") -> RewardBreakdown:
    """Full reward for a raw model response: parse, grade the answer
    (falling back to the whole trimmed response when no box exists), and mix
    with the format reward."""
    parsed = parse_response(response)
    answer = parsed.boxed_answer if parsed.boxed_answer is not None else response.strip()
    if mode == "relaxed":
        r_answer = match_answer(answer, record)
    elif mode == "strict":
        r_answer = strict_match(answer, record.hallucinated_span.text)
    else:
        raise ValueError(f"unknown mode {mode!r} (expected 'relaxed' or 'strict')")
    return RewardBreakdown.mix(r_answer=r_answer, r_format=1 if parsed.format_ok else 0)
