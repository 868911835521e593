"""Seeds an in-memory service with the demo corpus, replays the cohort
scenario (~33k requests) and prints the resulting summary figures."""

import json
import sys
import time
from pathlib import Path

from fastapi.testclient import TestClient

from ema import fixtures, pipeline
from ema.service import compute_summary, create_app
from ema.store import Store

DEMO = Path(__file__).resolve().parent.parent / "fixtures" / "demo"


def seed_all(store: Store) -> None:
    for directory in pipeline.discover_studies(DEMO):
        workbook = pipeline.clean_strings(pipeline.parse_workbook(directory))
        store.seed_document(pipeline.convert(workbook))


def main() -> int:
    store = Store()
    seed_all(store)
    client = TestClient(create_app(store))

    started = time.monotonic()
    counts = fixtures.replay_cohort(client)
    elapsed = time.monotonic() - started

    summary = compute_summary(store.stats_snapshot())
    print(json.dumps(summary.to_json(), indent=2, sort_keys=True))
    print(f"# {counts['requests']} requests, {counts['submitted']} sheets, "
          f"{elapsed:.1f}s", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
