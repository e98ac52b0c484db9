"""Benchmark harness: prompt rendering, answer parsing, exact-match scoring,
and aggregation over the hallucination-type and image-domain taxonomy.

Scoring has two modes.  Strict (the default) requires the first parsed answer
to equal the hallucinated span exactly after normalization; relaxed applies
the training-style window-containment match.  Reports label their mode, and
strict never scores above relaxed on the same verdicts.
"""

from __future__ import annotations

import json
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Optional, Sequence

from .core import (
    Caption,
    HallucinationType,
    ImageDomain,
    Span,
    VicritError,
    locate_span,
)
from .verifier import strict_match, window_match

__all__ = [
    "BenchSample",
    "CorrelationResult",
    "DegenerateVariance",
    "EvalConfig",
    "EvalReport",
    "correlate",
    "load_bench_samples",
    "manifest_summary",
    "parse_list_answer",
    "render_prompt",
    "report_markdown",
    "run_eval",
    "score_sample",
]


class DegenerateVariance(VicritError):
    """A correlation series is constant, so the coefficient is undefined."""


@dataclass(frozen=True)
class BenchSample:
    id: str
    image_ref: str
    corrupted_caption: Caption
    hallucinated_span: Span
    h_type: HallucinationType
    domain: ImageDomain

    def validate(self) -> None:
        occurrences = len(locate_span(self.corrupted_caption, self.hallucinated_span.text))
        if occurrences != 1:
            raise ValueError(
                f"sample {self.id}: hallucinated span occurs {occurrences} times in the caption"
            )


def _span_from_field(caption: Caption, value) -> Span:
    if isinstance(value, dict):
        return Span.from_json(value)
    spans = locate_span(caption, str(value))
    if len(spans) != 1:
        raise ValueError(f"span phrase {value!r} occurs {len(spans)} times in the caption")
    return spans[0]


def load_bench_samples(path: str | Path, manifest: Optional[str | Path] = None) -> list[BenchSample]:
    """Load bench samples from JSONL (native schema or corruption-record
    schema).  A manifest JSONL of {id, hallucination_type, image_domain} can
    supply missing taxonomy labels."""
    extra: dict[str, dict] = {}
    if manifest is not None:
        for line in Path(manifest).read_text("utf-8").splitlines():
            if line.strip():
                obj = json.loads(line)
                extra[str(obj["id"])] = obj

    samples = []
    for i, line in enumerate(Path(path).read_text("utf-8").splitlines()):
        if not line.strip():
            continue
        obj = json.loads(line)
        sample_id = str(obj.get("id") or f"sample-{i:05d}")
        merged = {**obj, **extra.get(sample_id, {})}
        h_type = merged.get("hallucination_type")
        domain = merged.get("image_domain")
        if not h_type or not domain:
            raise ValueError(f"sample {sample_id}: hallucination_type and image_domain are required")
        caption = Caption(str(merged["corrupted_caption"]))
        sample = BenchSample(
            id=sample_id,
            image_ref=str(merged.get("image_ref", "")),
            corrupted_caption=caption,
            hallucinated_span=_span_from_field(caption, merged["hallucinated_span"]),
            h_type=HallucinationType(h_type),
            domain=ImageDomain(domain),
        )
        sample.validate()
        samples.append(sample)
    return samples


def manifest_summary(samples: Sequence[BenchSample]) -> dict:
    """Counts and proportions per type, domain, and type x domain cell, so
    imbalances (e.g. a scarce type) are visible rather than rebalanced away."""
    by_type = {t.value: 0 for t in HallucinationType}
    by_domain = {d.value: 0 for d in ImageDomain}
    cells: dict[str, int] = {}
    for s in samples:
        by_type[s.h_type.value] += 1
        by_domain[s.domain.value] += 1
        key = f"{s.h_type.value}/{s.domain.value}"
        cells[key] = cells.get(key, 0) + 1
    n = len(samples)
    return {
        "total": n,
        "by_type": by_type,
        "by_domain": by_domain,
        "by_cell": dict(sorted(cells.items())),
        "type_proportions": {k: (round(v / n, 4) if n else 0.0) for k, v in by_type.items()},
    }


_EVAL_TEMPLATE = None


def eval_prompt_template() -> str:
    global _EVAL_TEMPLATE
    if _EVAL_TEMPLATE is None:
        _EVAL_TEMPLATE = (
            resources.files("vicrit.data.prompts").joinpath("eval_prompt.txt").read_text("utf-8")
        )
    return _EVAL_TEMPLATE


def render_prompt(sample: BenchSample) -> str:
    """The evaluation prompt with the corrupted caption substituted in."""
    return eval_prompt_template().replace("{}", sample.corrupted_caption.text, 1)


_QUOTED_ITEM_RE = re.compile(r"\"((?:[^\"\\]|\\.)*)\"|'((?:[^'\\]|\\.)*)'")


def parse_list_answer(response: str) -> list[str]:
    """Items of the first bracketed list in the response; quote-delimited or
    raw comma-separated items both work.  Falls back to the whole trimmed
    response, so the result always has at least one item."""
    start = response.find("[")
    if start >= 0:
        depth = 0
        for i in range(start, len(response)):
            if response[i] == "[":
                depth += 1
            elif response[i] == "]":
                depth -= 1
                if depth == 0:
                    inner = response[start : i + 1]
                    try:
                        parsed = json.loads(inner)
                        if isinstance(parsed, list) and parsed:
                            return [str(x) for x in parsed]
                    except json.JSONDecodeError:
                        pass
                    quoted = [a or b for a, b in _QUOTED_ITEM_RE.findall(inner)]
                    if quoted:
                        return quoted
                    bare = [part.strip() for part in inner[1:-1].split(",")]
                    bare = [p for p in bare if p]
                    if bare:
                        return bare
                    break
    return [response.strip()]


def score_sample(sample: BenchSample, answers: Sequence[str], mode: str = "strict") -> int:
    """Grade the first answer: whole-span equality in strict mode,
    window-containment in relaxed mode."""
    if not answers:
        return 0
    answer = answers[0]
    if mode == "strict":
        return strict_match(answer, sample.hallucinated_span.text)
    if mode == "relaxed":
        return window_match(answer, sample.corrupted_caption, sample.hallucinated_span)
    raise ValueError(f"unknown mode {mode!r}")


@dataclass(frozen=True)
class EvalConfig:
    model: str
    mode: str = "strict"
    journal_path: Optional[Path] = None
    max_workers: int = 1
    attach_images: bool = True
    # report timestamp; left empty (not wall clock) so reruns are byte-identical
    started_at: str = ""

    def __post_init__(self):
        if self.mode not in ("strict", "relaxed"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.max_workers < 1:
            raise ValueError("max_workers must be >= 1")


@dataclass
class EvalReport:
    model: str
    mode: str
    started_at: str
    overall: dict
    by_type: dict
    by_domain: dict
    error_count: int
    verdicts: list[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "model": self.model,
            "mode": self.mode,
            "started_at": self.started_at,
            "overall": self.overall,
            "by_type": self.by_type,
            "by_domain": self.by_domain,
            "error_count": self.error_count,
            "verdicts": self.verdicts,
        }

    def to_bytes(self) -> bytes:
        return json.dumps(self.to_json(), sort_keys=True, ensure_ascii=False, indent=2).encode("utf-8")


def _cell(correct: int, total: int) -> dict:
    acc = None if total == 0 else round(100.0 * correct / total, 2)
    return {"correct": correct, "total": total, "accuracy": acc}


def _aggregate(samples: Sequence[BenchSample], verdicts: list[dict], model: str, mode: str, started_at: str) -> EvalReport:
    # the journal may carry multiple verdicts per id (an error later retried);
    # the most recent one wins
    latest = {v["id"]: v for v in verdicts}
    verdicts = sorted(latest.values(), key=lambda v: v["id"])
    by_id = {s.id: s for s in samples}
    type_counts = {t.value: [0, 0] for t in HallucinationType}
    domain_counts = {d.value: [0, 0] for d in ImageDomain}
    correct = total = errors = 0
    for v in verdicts:
        sample = by_id[v["id"]]
        if v.get("error"):
            errors += 1
            continue
        score = int(v["score"])
        total += 1
        correct += score
        type_counts[sample.h_type.value][0] += score
        type_counts[sample.h_type.value][1] += 1
        domain_counts[sample.domain.value][0] += score
        domain_counts[sample.domain.value][1] += 1
    return EvalReport(
        model=model,
        mode=mode,
        started_at=started_at,
        overall=_cell(correct, total),
        by_type={k: _cell(c, t) for k, (c, t) in type_counts.items()},
        by_domain={k: _cell(c, t) for k, (c, t) in domain_counts.items()},
        error_count=errors,
        verdicts=verdicts,
    )


def _read_journal(path: Path) -> tuple[Optional[dict], list[dict]]:
    meta = None
    verdicts = []
    if path.exists():
        for line in path.read_text("utf-8").splitlines():
            if not line.strip():
                continue
            obj = json.loads(line)
            if obj.get("type") == "meta":
                meta = obj
            elif obj.get("type") == "verdict":
                verdicts.append(obj)
    return meta, verdicts


def run_eval(dataset: Sequence[BenchSample], client, config: EvalConfig) -> EvalReport:
    """Query every sample, grade, and aggregate both taxonomy partitions.

    Verdicts are appended to a journal keyed by sample id, so an interrupted
    run resumes where it stopped.  Endpoint failures become error verdicts
    and are excluded from denominators but reported.
    """
    if not dataset:
        raise ValueError("empty dataset")
    ids = [s.id for s in dataset]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate sample ids in dataset")

    done: dict[str, dict] = {}
    meta = None
    journal = Path(config.journal_path) if config.journal_path else None
    if journal:
        meta, previous = _read_journal(journal)
        if meta and (meta.get("model") != config.model or meta.get("mode") != config.mode):
            raise ValueError("journal was produced by a different model or mode")
        done = {v["id"]: v for v in previous}
        # transient endpoint failures are retried on resume
        done = {k: v for k, v in done.items() if not v.get("error")}

    started_at = meta["started_at"] if meta else config.started_at
    if journal and meta is None:
        with journal.open("a", encoding="utf-8") as fh:
            fh.write(
                json.dumps(
                    {"type": "meta", "model": config.model, "mode": config.mode, "started_at": started_at},
                    sort_keys=True,
                )
                + "\n"
            )

    todo = [s for s in dataset if s.id not in done]

    def query(sample: BenchSample) -> dict:
        prompt = render_prompt(sample)
        try:
            response = client.complete(
                [{"role": "user", "content": prompt}],
                image_ref=sample.image_ref if config.attach_images else None,
            )
        except Exception as exc:
            return {"type": "verdict", "id": sample.id, "error": f"{type(exc).__name__}: {exc}"}
        answers = parse_list_answer(response)
        return {
            "type": "verdict",
            "id": sample.id,
            "response": response,
            "answers": answers,
            "score": score_sample(sample, answers, config.mode),
        }

    if todo:
        if config.max_workers == 1:
            results = [query(s) for s in todo]
        else:
            with ThreadPoolExecutor(max_workers=config.max_workers) as pool:
                results = list(pool.map(query, todo))  # input order preserved
        if journal:
            with journal.open("a", encoding="utf-8") as fh:
                for v in results:
                    fh.write(json.dumps(v, sort_keys=True, ensure_ascii=False) + "\n")
        done.update({v["id"]: v for v in results})

    return _aggregate(dataset, list(done.values()), config.model, config.mode, started_at)


def report_from_journal(dataset: Sequence[BenchSample], journal_path: str | Path) -> EvalReport:
    """Recompute the report purely from the journal, byte-identically."""
    meta, verdicts = _read_journal(Path(journal_path))
    if meta is None:
        raise ValueError("journal has no meta line")
    return _aggregate(dataset, verdicts, meta["model"], meta["mode"], meta["started_at"])


_TYPE_ORDER = ["object", "color", "material", "spatial", "count", "shape", "text", "condition"]
_DOMAIN_ORDER = ["natural", "document", "scene_text", "abstract"]


def report_markdown(report: EvalReport) -> str:
    """Markdown table mirroring the benchmark layout: overall, then the
    hallucination-type cells, then the image-domain cells."""

    def fmt(cell: dict) -> str:
        return "--" if cell["accuracy"] is None else f"{cell['accuracy']:.2f}"

    headers = ["Model", "Overall", *[t.title() for t in _TYPE_ORDER], *[d.replace("_", " ").title() for d in _DOMAIN_ORDER]]
    row = [
        report.model,
        fmt(report.overall),
        *[fmt(report.by_type[t]) for t in _TYPE_ORDER],
        *[fmt(report.by_domain[d]) for d in _DOMAIN_ORDER],
    ]
    lines = [
        "| " + " | ".join(headers) + " |",
        "|" + "|".join(["---"] * len(headers)) + "|",
        "| " + " | ".join(row) + " |",
    ]
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class CorrelationResult:
    pearson_r: float
    slope: float
    intercept: float
    n: int

    def to_json(self) -> dict:
        return {"pearson_r": self.pearson_r, "slope": self.slope, "intercept": self.intercept, "n": self.n}


def correlate(
    bench_scores: Sequence[tuple[str, float]],
    external_scores: Sequence[tuple[str, float]],
) -> CorrelationResult:
    """Pearson correlation between per-model benchmark accuracy and an
    external task average, paired by model name, plus the least-squares line
    for plotting."""
    external = dict(external_scores)
    pairs = [(bench, external[model]) for model, bench in bench_scores if model in external]
    if len(pairs) < 3:
        raise ValueError(f"need at least 3 paired models, have {len(pairs)}")
    ys = [p[0] for p in pairs]  # bench accuracy
    xs = [p[1] for p in pairs]  # external task average
    n = len(pairs)
    mx, my = sum(xs) / n, sum(ys) / n
    cov = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    vx = sum((x - mx) ** 2 for x in xs)
    vy = sum((y - my) ** 2 for y in ys)
    if vx == 0 or vy == 0:
        raise DegenerateVariance("one of the score series is constant")
    slope = cov / vx
    return CorrelationResult(
        pearson_r=cov / math.sqrt(vx * vy),
        slope=slope,
        intercept=my - slope * mx,
        n=n,
    )
