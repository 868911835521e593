"""Regenerates fixtures/demo/ (five studies, two languages) and checks that
every workbook compiles. Output is deterministic, so a clean run leaves git
unchanged."""

import json
import sys
from pathlib import Path

from ema import fixtures, pipeline

ROOT = Path(__file__).resolve().parent.parent / "fixtures" / "demo"


def main() -> int:
    written = fixtures.write_demo_corpus(ROOT)
    totals: dict = {}
    for directory in written:
        workbook = pipeline.clean_strings(pipeline.parse_workbook(directory))
        document = pipeline.convert(workbook)
        counts = pipeline.document_element_counts(document)
        for key, value in counts.items():
            totals[key] = totals.get(key, 0) + value
        print(f"{directory.name}: {json.dumps(counts, sort_keys=True)}")
    print(f"total: {json.dumps(totals, sort_keys=True)} "
          f"({sum(totals.values())} elements)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
