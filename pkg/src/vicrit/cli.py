"""Command-line entry point: thin adapters over the library modules.

Every subcommand streams JSON/JSONL to stdout or --out; no grading or
optimization logic lives here.  Exit codes: 0 success, 1 operational error,
2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .core import Caption, CorruptionRecord, HallucinationType, ImageDomain, VicritError
from .injector import InjectorConfig, NoCandidates, inject, inject_llm
from .verifier import reward

log = logging.getLogger("vicrit")


def _write_output(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _iter_caption_inputs(path: str):
    """Yield (image_ref, caption_text, domain) from plain-text (one caption
    per line) or JSONL {image_ref, caption, image_domain} input."""
    raw = Path(path).read_text("utf-8")
    for i, line in enumerate(raw.splitlines()):
        line = line.strip()
        if not line:
            continue
        if line.startswith("{"):
            obj = json.loads(line)
            domain = obj.get("image_domain")
            yield (
                str(obj.get("image_ref", f"caption-{i:05d}")),
                str(obj["caption"]),
                ImageDomain(domain) if domain else None,
            )
        else:
            yield f"caption-{i:05d}", line, None


def _parse_types(spec: Optional[str]) -> Optional[dict]:
    if not spec:
        return None
    weights = {}
    for part in spec.split(","):
        part = part.strip()
        if ":" in part:
            name, w = part.split(":", 1)
            weights[HallucinationType(name.strip())] = float(w)
        else:
            weights[HallucinationType(part)] = 1.0
    return weights


def cmd_inject(args) -> int:
    config = InjectorConfig(
        seed=args.seed,
        type_weights=_parse_types(args.types),
        min_span_words=args.min_span_words,
        max_span_words=args.max_span_words,
    )
    lines = []
    skipped = 0
    for image_ref, text, domain in _iter_caption_inputs(args.input):
        try:
            record = inject(Caption(text), config, image_ref=image_ref, domain=domain)
        except NoCandidates:
            skipped += 1
            log.warning("no candidates for %s; skipped", image_ref)
            continue
        lines.append(record.to_jsonl())
    _write_output("".join(line + "\n" for line in lines), args.out)
    if skipped:
        log.info("skipped %d captions with no candidates", skipped)
    return 0


def cmd_inject_llm(args) -> int:
    from .llm import ChatClient, ChatClientConfig

    if args.endpoint:
        client = ChatClient(
            ChatClientConfig(
                base_url=args.endpoint,
                model=args.model,
                api_key=args.api_key,
                timeout=args.timeout,
                max_retries=args.retries,
                image_mode="none",
            )
        )
    else:
        client = ChatClient.from_env(args.model, timeout=args.timeout, max_retries=args.retries, image_mode="none")

    lines = []
    failures = 0
    for image_ref, text, domain in _iter_caption_inputs(args.input):
        try:
            record = inject_llm(Caption(text), client, seed=args.seed, image_ref=image_ref, domain=domain)
        except (VicritError, ValueError) as exc:
            failures += 1
            log.warning("%s: %s", image_ref, exc)
            continue
        lines.append(record.to_jsonl())
    _write_output("".join(line + "\n" for line in lines), args.out)
    if failures:
        log.info("%d captions failed LLM injection", failures)
    return 0


def cmd_verify(args) -> int:
    record = CorruptionRecord.from_json(json.loads(Path(args.record).read_text("utf-8")))
    response = Path(args.response).read_text("utf-8")
    breakdown = reward(response, record, mode=args.mode)
    _write_output(json.dumps(breakdown.to_json()) + "\n", args.out)
    return 0


def cmd_train_toy(args) -> int:
    from .grpo import SyntheticEnv, TrainConfig, train

    try:
        import tomllib  # type: ignore[import-not-found]
    except ModuleNotFoundError:
        import tomli as tomllib

    values = tomllib.loads(Path(args.config).read_text("utf-8")) if args.config else {}
    config = TrainConfig.from_dict(values)
    trace = train(SyntheticEnv(seed=config.seed, noise=config.noise), config)
    _write_output(trace.to_jsonl(), args.out)
    summary = {
        "steps": len(trace.steps),
        "initial_accuracy": trace.initial_accuracy,
        "final_accuracy": trace.final_accuracy,
        "final_mean_reward": trace.steps[-1]["mean_reward"] if trace.steps else None,
    }
    print(json.dumps(summary), file=sys.stderr)
    return 0


def cmd_eval_bench(args) -> int:
    from .bench import EvalConfig, load_bench_samples, manifest_summary, report_markdown, run_eval
    from .llm import ChatClient, ChatClientConfig

    dataset = load_bench_samples(args.data, manifest=args.manifest)
    log.info("dataset summary: %s", json.dumps(manifest_summary(dataset)))
    client = ChatClient(
        ChatClientConfig(
            base_url=args.endpoint,
            model=args.model,
            api_key=args.api_key,
            timeout=args.timeout,
            image_mode=args.image_mode,
        )
    )
    config = EvalConfig(
        model=args.model,
        mode=args.mode,
        journal_path=Path(args.journal) if args.journal else None,
        max_workers=args.workers,
        attach_images=args.image_mode != "none",
        started_at=datetime.datetime.now(datetime.timezone.utc).isoformat(),
    )
    report = run_eval(dataset, client, config)
    _write_output(report.to_bytes().decode("utf-8") + "\n", args.out)
    if args.markdown:
        Path(args.markdown).write_text(report_markdown(report), encoding="utf-8")
    return 0


def cmd_chair(args) -> int:
    from .chair import ChairInput, ObjectLexicon, chair_scores, load_default_lexicon

    lex = ObjectLexicon.from_file(args.lexicon) if args.lexicon else load_default_lexicon()
    gt = {}
    for line in Path(args.ground_truth).read_text("utf-8").splitlines():
        if line.strip():
            obj = json.loads(line)
            gt[str(obj["image_id"])] = frozenset(obj["objects"])
    inputs = []
    for line in Path(args.captions).read_text("utf-8").splitlines():
        if line.strip():
            obj = json.loads(line)
            image_id = str(obj["image_id"])
            if image_id not in gt:
                raise VicritError(f"no ground truth for image {image_id}")
            inputs.append(ChairInput(image_id, str(obj["caption"]), gt[image_id]))
    result = chair_scores(inputs, lex)
    out = result.to_json()
    if args.per_image:
        out["per_image"] = result.per_image
    _write_output(json.dumps(out) + "\n", args.out)
    return 0


def cmd_correlate(args) -> int:
    from .bench import correlate

    bench = []
    task = []
    with open(args.pairs, newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().lower() == "model":
                continue
            model, bench_acc, task_avg = row[0].strip(), float(row[1]), float(row[2])
            bench.append((model, bench_acc))
            task.append((model, task_avg))
    result = correlate(bench, task)
    _write_output(json.dumps(result.to_json()) + "\n", args.out)
    return 0


def cmd_serve(args) -> int:
    from .service import ServiceConfig
    from .service import main as serve_main

    config = ServiceConfig.load(args.config)
    if args.port is not None:
        config = ServiceConfig(
            host=config.host,
            port=args.port,
            token_cap=config.token_cap,
            batch_cap=config.batch_cap,
            auth_token=config.auth_token,
            normalization_profile=config.normalization_profile,
        )
    if args.print_config:
        doc = {
            "host": config.host,
            "port": config.port,
            "token_cap": config.token_cap,
            "batch_cap": config.batch_cap,
            "normalization": dict(config.normalization_profile),
            "config_hash": config.config_hash(),
        }
        print(json.dumps(doc, sort_keys=True, indent=2))
        return 0
    serve_main(config)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vicrit", description=__doc__)
    parser.add_argument("--log-level", default="WARNING", help="logging level (DEBUG, INFO, ...)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("inject", help="deterministically corrupt captions from rule tables")
    p.add_argument("--input", required=True, help="plain-text or JSONL caption file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--types", help="comma list of types, optionally weighted (color:2,count)")
    p.add_argument("--min-span-words", type=int, default=2)
    p.add_argument("--max-span-words", type=int, default=5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_inject)

    p = sub.add_parser("inject-llm", help="corrupt captions with a chat model")
    p.add_argument("--input", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--endpoint", help="chat-completions base URL (default: $VICRIT_ENDPOINT)")
    p.add_argument("--api-key", help="bearer token (default: $VICRIT_API_KEY)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--timeout", type=float, default=120.0)
    p.add_argument("--retries", type=int, default=2)
    p.add_argument("--out")
    p.set_defaults(func=cmd_inject_llm)

    p = sub.add_parser("verify", help="grade a response file against a record")
    p.add_argument("--record", required=True, help="JSON corruption record")
    p.add_argument("--response", required=True, help="raw response text file")
    p.add_argument("--mode", choices=["relaxed", "strict"], default="relaxed")
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("train-toy", help="run the toy GRPO loop")
    p.add_argument("--config", help="TOML training config")
    p.add_argument("--out", help="metrics trace JSONL destination")
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("eval-bench", help="evaluate a model endpoint on a benchmark file")
    p.add_argument("--data", required=True)
    p.add_argument("--manifest")
    p.add_argument("--endpoint", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--api-key")
    p.add_argument("--mode", choices=["strict", "relaxed"], default="strict")
    p.add_argument("--journal", help="append-only verdict journal for resuming")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--timeout", type=float, default=120.0)
    p.add_argument("--image-mode", choices=["url", "base64", "none"], default="url")
    p.add_argument("--markdown", help="also write a markdown results table here")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval_bench)

    p = sub.add_parser("chair", help="hallucination rates for generated captions")
    p.add_argument("--captions", required=True, help="JSONL {image_id, caption}")
    p.add_argument("--ground-truth", required=True, help="JSONL {image_id, objects}")
    p.add_argument("--lexicon", help="object lexicon JSON (default: shipped 80-class lexicon)")
    p.add_argument("--per-image", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_chair)

    p = sub.add_parser("correlate", help="Pearson r between bench and external scores")
    p.add_argument("--pairs", required=True, help="CSV of model,bench_acc,task_avg")
    p.add_argument("--out")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("serve", help="run the reward service")
    p.add_argument("--config", help="TOML service config")
    p.add_argument("--port", type=int)
    p.add_argument("--print-config", action="store_true", help="print the resolved config and exit")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except VicritError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
