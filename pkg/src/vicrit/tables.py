"""Default swap tables for deterministic hallucination injection.

Each table maps normalized phrase patterns to visually-plausible alternates.
A ``*`` in a pattern matches exactly one word and is carried into the
replacement, so ``eight *`` -> ``seven *`` turns "eight individuals" into
"seven individuals" whatever the noun is.  The text table works differently:
it mutates a word inside quoted scene text instead of using a lexicon.
"""

from __future__ import annotations

from .core import HallucinationType
from .injector import SwapRule, SwapTable

_NUMBER_WORDS = [
    "one", "two", "three", "four", "five", "six", "seven", "eight", "nine",
    "ten", "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen",
    "seventeen", "eighteen", "nineteen", "twenty",
]

_COLORS = [
    "red", "blue", "green", "yellow", "orange", "purple", "pink", "brown",
    "black", "white", "gray", "grey", "golden", "silver", "beige", "maroon",
    "teal", "navy", "turquoise", "violet", "crimson", "tan", "olive", "cyan",
]

_MATERIALS = [
    "wooden", "metal", "plastic", "glass", "stone", "brick", "concrete",
    "leather", "ceramic", "marble", "steel", "copper", "bronze", "bamboo",
    "wicker", "cardboard", "paper", "fabric", "rubber", "clay",
]

_SHAPES = [
    "round", "square", "rectangular", "circular", "oval", "triangular",
    "hexagonal", "curved", "spiral", "pointed", "conical", "cylindrical",
]

# one-directional visually-similar noun substitutions
_OBJECT_PAIRS = [
    ("cat", "dog"), ("dog", "cat"), ("corgi", "cat"), ("puppy", "kitten"),
    ("kitten", "puppy"), ("car", "truck"), ("truck", "bus"), ("bus", "van"),
    ("van", "truck"), ("bicycle", "motorcycle"), ("motorcycle", "bicycle"),
    ("scooter", "bicycle"), ("bird", "bat"), ("duck", "goose"),
    ("goose", "duck"), ("horse", "donkey"), ("donkey", "mule"),
    ("sheep", "goat"), ("goat", "sheep"), ("cow", "bull"), ("table", "desk"),
    ("desk", "table"), ("chair", "stool"), ("stool", "bench"),
    ("bench", "chair"), ("sofa", "armchair"), ("laptop", "tablet"),
    ("tablet", "laptop"), ("phone", "camera"), ("camera", "phone"),
    ("boat", "canoe"), ("canoe", "kayak"), ("kayak", "canoe"),
    ("mug", "bowl"), ("bowl", "plate"), ("plate", "tray"), ("tray", "plate"),
    ("teacup", "mug"), ("bottle", "jar"), ("jar", "bottle"),
    ("house", "barn"), ("barn", "shed"), ("shed", "cabin"),
    ("apple", "tomato"), ("tomato", "apple"), ("orange", "peach"),
    ("hat", "cap"), ("umbrella", "parasol"), ("backpack", "handbag"),
    ("clock", "mirror"), ("mirror", "clock"), ("pillow", "cushion"),
]

_SPATIAL_RULES = [
    ("in front of", ["to the left of", "to the right of"]),
    ("behind *", ["in front of *"]),
    ("above *", ["below *", "beside *"]),
    ("below *", ["above *"]),
    ("beneath *", ["above *"]),
    ("on top of", ["underneath all of"]),
    ("on the left", ["on the right"]),
    ("on the right", ["on the left"]),
    ("left side", ["right side"]),
    ("right side", ["left side"]),
    ("top left", ["top right", "bottom left"]),
    ("top right", ["top left", "bottom right"]),
    ("bottom left", ["bottom right", "top left"]),
    ("bottom right", ["bottom left", "top right"]),
    ("upper left", ["upper right", "lower left"]),
    ("upper right", ["upper left", "lower right"]),
    ("lower left", ["lower right", "upper left"]),
    ("lower right", ["lower left", "upper right"]),
    ("to the left of", ["to the right of"]),
    ("to the right of", ["to the left of"]),
    ("left to right", ["right to left"]),
]

_CONDITION_RULES = [
    ("sitting on", ["standing on", "lying on"]),
    ("standing on", ["sitting on"]),
    ("sitting in", ["standing in"]),
    ("standing in", ["sitting in"]),
    ("seated in", ["standing in"]),
    ("walking along", ["running along"]),
    ("running along", ["walking along"]),
    ("walking down", ["running down"]),
    ("is open", ["is closed"]),
    ("is closed", ["is open"]),
    ("are open", ["are closed"]),
    ("are closed", ["are open"]),
    ("wide open", ["firmly closed"]),
    ("hands folded", ["hands raised"]),
    ("is smiling", ["is frowning"]),
    ("are smiling", ["are frowning"]),
    ("is empty", ["is full"]),
    ("is full", ["is empty"]),
    ("an empty *", ["an occupied *"]),
    ("empty *", ["occupied *"]),
    ("broken *", ["intact *"]),
    ("lit *", ["unlit *"]),
    ("wet *", ["dry *"]),
    ("dry *", ["wet *"]),
    ("folded in", ["resting on"]),
]

# collective quantity phrases; lengths 3 -> 3 keep the phrase band intact
_COLLECTIVE_RULES = [
    ("a flock of", ["a pair of", "a group of"]),
    ("a pair of", ["a flock of", "a group of"]),
    ("a group of", ["a pair of", "a couple of"]),
    ("a couple of", ["a group of"]),
    ("a row of", ["a stack of", "a pile of"]),
    ("a stack of", ["a row of", "a pile of"]),
    ("a pile of", ["a row of"]),
]


def _cycled(values: list[str], idx: int, count: int) -> list[str]:
    """count alternates for values[idx], cycling past the end, self excluded."""
    out = []
    j = idx
    while len(out) < count:
        j = (j + 1) % len(values)
        if j == idx:
            break
        if values[j] != values[idx]:
            out.append(values[j])
    return out


def _adjective_rules(vocab: list[str], alternates: int = 3) -> list[SwapRule]:
    return [
        SwapRule.parse(f"{word} *", [f"{alt} *" for alt in _cycled(vocab, i, alternates)])
        for i, word in enumerate(vocab)
    ]


def _count_rules() -> list[SwapRule]:
    rules = []
    for i, word in enumerate(_NUMBER_WORDS):
        alts = []
        if i + 1 < len(_NUMBER_WORDS):
            alts.append(_NUMBER_WORDS[i + 1])
        if i - 1 >= 0:
            alts.append(_NUMBER_WORDS[i - 1])
        rules.append(SwapRule.parse(f"{word} *", [f"{a} *" for a in alts]))
    for n in range(2, 21):
        alts = [str(n + 1)] + ([str(n - 1)] if n - 1 >= 2 else [])
        rules.append(SwapRule.parse(f"{n} *", [f"{a} *" for a in alts]))
    rules.extend(SwapRule.parse(p, r) for p, r in _COLLECTIVE_RULES)
    return rules


def _object_rules() -> list[SwapRule]:
    def det(noun: str) -> str:
        return "an" if noun[0] in "aeiou" else "a"

    rules = []
    for original, alternate in _OBJECT_PAIRS:
        rules.append(SwapRule.parse(f"{det(original)} {original}", [f"{det(alternate)} {alternate}"]))
        rules.append(SwapRule.parse(f"the {original}", [f"the {alternate}"]))
    return rules


def default_tables() -> dict[HallucinationType, SwapTable]:
    """The shipped rule tables, one per hallucination type."""
    return {
        HallucinationType.COUNT: SwapTable(HallucinationType.COUNT, tuple(_count_rules())),
        HallucinationType.COLOR: SwapTable(HallucinationType.COLOR, tuple(_adjective_rules(_COLORS))),
        HallucinationType.MATERIAL: SwapTable(HallucinationType.MATERIAL, tuple(_adjective_rules(_MATERIALS))),
        HallucinationType.SHAPE: SwapTable(HallucinationType.SHAPE, tuple(_adjective_rules(_SHAPES, 2))),
        HallucinationType.SPATIAL: SwapTable(
            HallucinationType.SPATIAL,
            tuple(SwapRule.parse(p, r) for p, r in _SPATIAL_RULES),
        ),
        HallucinationType.CONDITION: SwapTable(
            HallucinationType.CONDITION,
            tuple(SwapRule.parse(p, r) for p, r in _CONDITION_RULES),
        ),
        HallucinationType.OBJECT: SwapTable(HallucinationType.OBJECT, tuple(_object_rules())),
        HallucinationType.TEXT: SwapTable(HallucinationType.TEXT, (), quoted_text_mode=True),
    }
