"""Regenerate the golden contract-test corpus from the reference grader.

Run from the repository root after any grading change:

    python3 frontend/scripts/make_golden.py
"""

from __future__ import annotations

import json
import random
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[2] / "tests"))

from genutil import make_prediction, make_record  # noqa: E402

from vicrit.verifier import reward  # noqa: E402

OUT = Path(__file__).resolve().parents[1] / "fixtures" / "golden.json"


def main() -> None:
    rng = random.Random(20250801)
    records = [make_record(rng) for _ in range(12)]
    cases = []
    for idx, rec in enumerate(records):
        span = rec.hallucinated_span.text
        responses = [
            (f"<think>scanning the image</think> \\boxed{{{span}}}", "relaxed"),
            (f"\\boxed{{{span}}}", "relaxed"),
            ("<think>unsure</think> \\boxed{not the right phrase}", "relaxed"),
            (span, "relaxed"),
            (f"<think>t</think> \\boxed{{{span}}}", "strict"),
        ]
        for _ in range(3):
            responses.append((f"<think>guess</think> \\boxed{{{make_prediction(rec, rng)}}}", "relaxed"))
        for response, mode in responses:
            breakdown = reward(response, rec, mode=mode)
            cases.append(
                {
                    "record_index": idx,
                    "response_text": response,
                    "mode": mode,
                    "expected": breakdown.to_json(),
                }
            )
    OUT.write_text(
        json.dumps(
            {"records": [r.to_json() for r in records], "cases": cases},
            indent=2,
            ensure_ascii=False,
        )
        + "\n",
        encoding="utf-8",
    )
    print(f"wrote {OUT} ({len(records)} records, {len(cases)} cases)")


if __name__ == "__main__":
    main()
