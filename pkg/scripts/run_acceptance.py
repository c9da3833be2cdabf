#!/usr/bin/env python3
"""Run the 12 acceptance criteria outside pytest and print one PASS/FAIL line each."""
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))
import test_acceptance as acc  # noqa: E402

CRITERIA = [acc.criterion_1, acc.criterion_2, acc.criterion_3, acc.criterion_4, acc.criterion_5,
            acc.criterion_6, acc.criterion_7, acc.criterion_8, acc.criterion_9, acc.criterion_10a,
            acc.criterion_10b, acc.criterion_11, acc.criterion_12]

if __name__ == "__main__":
    results = [c() for c in CRITERIA]
    print(f"{sum(results)}/{len(results)} passed")
    sys.exit(0 if all(results) else 1)
