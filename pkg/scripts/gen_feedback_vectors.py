"""Regenerates fixtures/feedback_vectors.json, the cross-language contract
for the rule evaluator: every client implementation must reproduce `fired`
for each case and reject every string in `rejects`. Deterministic."""

import json
import random
import sys
from pathlib import Path

from ema.feedback import RuleSyntaxError, evaluate_expression, parse_rule

OUT = Path(__file__).resolve().parent.parent / "fixtures" / "feedback_vectors.json"

TEMPLATES = [
    "a > 2",
    "a >= 3",
    "b < 0",
    "b <= 1",
    "c == 3",
    "c != 3",
    "a > b",
    "sum(a,b) > 4",
    "sum(a,b,c) <= 6",
    "sum(q1..q4) >= 10",
    "sum(q2..q6) < 8",
    "answered(a)",
    "answered(q3)",
    "not answered(b)",
    "a > 1 and b > 1",
    "a > 1 or b > 1",
    "not a > 1",
    "a > 1 and b > 1 or c > 1",
    "a > 1 or b > 1 and c > 1",
    "not a > 1 and not b > 1",
    "(a > 1 or b > 1) and c > 1",
    "not (a > 1 or b > 1)",
    "sum(q1..q6) > 12 and answered(a)",
    "a == 0 or sum(b,c) != 2",
    "answered(a) and answered(b) and a >= b",
    "3 < a",
    "2 <= sum(q1..q3)",
    "a != a",
    "sum(a,a) == 4",
    "not not a > 0",
]

REJECTS = [
    "",
    "a >",
    "> 1",
    "a > 1 and",
    "a < b < c",
    "a >< 2",
    "a > 2.5",
    "a > -1",
    "sum() > 1",
    "sum(a) > ",
    "sum(q3..q1) > 0",
    "sum(q01..q03) > 0",
    "sum(a1..b3) > 0",
    "answered()",
    "answered(a, b)",
    "a ? 2",
    "(a > 1",
    "a > 1)",
    "and a > 1",
    "a and b",
    "not a",
    "a > 1 b > 1",
]

VARIABLES = ["a", "b", "c", "q1", "q2", "q3", "q4", "q5", "q6"]


def random_value(rng: random.Random):
    kind = rng.randrange(8)
    if kind < 3:
        return rng.randint(-2, 6)
    if kind == 3:
        return round(rng.uniform(-3, 8), 2)
    if kind == 4:
        return rng.choice(["0", "2", "3.5", " 2 ", "-1"])
    if kind == 5:
        return rng.choice(["", "abc", "3.5.1", "two"])
    if kind == 6:
        return [rng.randint(0, 4) for _ in range(rng.randint(0, 3))]
    return rng.choice([True, False])


def main() -> int:
    rng = random.Random(773311)
    cases = []
    for template in TEMPLATES:
        expression = parse_rule(template)
        for _ in range(15):
            answers = {}
            for variable in VARIABLES:
                if rng.random() < 0.65:
                    answers[variable] = random_value(rng)
            fired = evaluate_expression(expression, answers) is True
            cases.append({"rule": template, "answers": answers, "fired": fired})

    for text in REJECTS:
        try:
            parse_rule(text)
        except RuleSyntaxError:
            continue
        raise AssertionError(f"expected a syntax error: {text!r}")

    payload = {"cases": cases, "rejects": REJECTS}
    OUT.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n",
                   encoding="utf-8")
    fired_count = sum(1 for case in cases if case["fired"])
    print(f"{len(cases)} cases ({fired_count} fired), {len(REJECTS)} rejects -> {OUT}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
