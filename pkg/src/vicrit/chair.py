"""Caption hallucination rates against ground-truth object sets.

The instance rate pools counts corpus-wide (hallucinated mentions over all
mentions); the sentence rate is the fraction of captions containing at least
one hallucinated object.  Mentions are found by a longest-match scan of a
synonym lexicon over the normalized word stream.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .core import Caption, VicritError, normalize

__all__ = [
    "ChairInput",
    "ChairResult",
    "NoMentions",
    "ObjectLexicon",
    "chair_scores",
    "extract_objects",
    "load_default_lexicon",
]


class NoMentions(VicritError):
    """No lexicon object is mentioned anywhere, so the instance rate is undefined."""


_IRREGULAR_PLURALS = {
    "man": "men",
    "woman": "women",
    "child": "children",
    "person": "people",
    "knife": "knives",
    "mouse": "mice",
    "sheep": "sheep",
    "scissors": "scissors",
    "skis": "skis",
}


def _pluralize(word: str) -> str:
    if word in _IRREGULAR_PLURALS:
        return _IRREGULAR_PLURALS[word]
    if word.endswith(("s", "x", "z", "ch", "sh")):
        return word + "es"
    if word.endswith("y") and len(word) > 1 and word[-2] not in "aeiou":
        return word[:-1] + "ies"
    return word + "s"


@dataclass(frozen=True)
class ObjectLexicon:
    """Canonical object set plus a phrase -> canonical synonym map."""

    objects: frozenset[str]
    synonyms: Mapping[tuple[str, ...], str]  # normalized word tuple -> canonical

    def __post_init__(self):
        for phrase, canonical in self.synonyms.items():
            if canonical not in self.objects:
                raise ValueError(f"synonym {' '.join(phrase)!r} maps to unknown object {canonical!r}")

    @property
    def max_phrase_len(self) -> int:
        return max(len(p) for p in self.synonyms)

    @classmethod
    def build(
        cls,
        objects: Iterable[str],
        synonyms: Mapping[str, str] | None = None,
        derive_plurals: bool = True,
    ) -> "ObjectLexicon":
        """Normalize all entries; every canonical name maps to itself, and
        plural forms of the final word are derived unless disabled."""
        canon = {normalize(o): o for o in objects}
        table: dict[tuple[str, str], None] = {}
        entries: dict[tuple[str, ...], str] = {}

        def add(phrase: str, target: str) -> None:
            words = tuple(normalize(phrase).split(" "))
            if words and words != ("",):
                entries[words] = target
                if derive_plurals:
                    plural = words[:-1] + (_pluralize(words[-1]),)
                    entries.setdefault(plural, target)

        for norm, original in canon.items():
            add(norm, original)
        for phrase, target in (synonyms or {}).items():
            target_norm = canon.get(normalize(target))
            if target_norm is None:
                raise ValueError(f"synonym {phrase!r} targets unknown object {target!r}")
            add(phrase, target_norm)
        return cls(objects=frozenset(canon.values()), synonyms=entries)

    @classmethod
    def from_json(cls, obj: dict, derive_plurals: bool = True) -> "ObjectLexicon":
        return cls.build(obj["objects"], obj.get("synonyms", {}), derive_plurals)

    @classmethod
    def from_file(cls, path: str | Path) -> "ObjectLexicon":
        return cls.from_json(json.loads(Path(path).read_text("utf-8")))


def load_default_lexicon() -> ObjectLexicon:
    """The shipped 80-class lexicon with common synonyms."""
    raw = resources.files("vicrit.data").joinpath("coco_lexicon.json").read_text("utf-8")
    return ObjectLexicon.from_json(json.loads(raw))


def extract_objects(caption: Caption | str, lex: ObjectLexicon) -> set[str]:
    """Deduplicated canonical objects mentioned in the caption, found by a
    longest-match scan so 'hot dog' never also fires 'dog'."""
    if isinstance(caption, str):
        caption = Caption(caption)
    words = caption.words
    found: set[str] = set()
    i = 0
    n = len(words)
    max_len = lex.max_phrase_len if lex.synonyms else 0
    while i < n:
        matched = 0
        for length in range(min(max_len, n - i), 0, -1):
            canonical = lex.synonyms.get(tuple(words[i : i + length]))
            if canonical is not None:
                found.add(canonical)
                matched = length
                break
        i += matched or 1
    return found


@dataclass(frozen=True)
class ChairInput:
    """One generated caption with its ground-truth canonical object set."""

    image_id: str
    caption: str
    gt_objects: frozenset[str]

    def __post_init__(self):
        if not self.gt_objects:
            raise ValueError(f"image {self.image_id}: ground-truth object set is empty")


@dataclass
class ChairResult:
    chair_i: float
    chair_s: float
    n_images: int
    per_image: list[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"chair_i": self.chair_i, "chair_s": self.chair_s, "n_images": self.n_images}


def chair_scores(inputs: Sequence[ChairInput], lex: ObjectLexicon) -> ChairResult:
    """Pooled instance rate and per-caption sentence rate over the corpus."""
    if not inputs:
        raise ValueError("no inputs")
    total_mentions = 0
    total_hallucinated = 0
    captions_with_hallucination = 0
    per_image = []
    for item in inputs:
        mentioned = extract_objects(item.caption, lex)
        hallucinated = mentioned - item.gt_objects
        total_mentions += len(mentioned)
        total_hallucinated += len(hallucinated)
        if hallucinated:
            captions_with_hallucination += 1
        per_image.append(
            {
                "image_id": item.image_id,
                "mentioned": sorted(mentioned),
                "hallucinated": sorted(hallucinated),
            }
        )
    if total_mentions == 0:
        raise NoMentions("no lexicon object is mentioned in any caption")
    return ChairResult(
        chair_i=total_hallucinated / total_mentions,
        chair_s=captions_with_hallucination / len(inputs),
        n_images=len(inputs),
        per_image=per_image,
    )
