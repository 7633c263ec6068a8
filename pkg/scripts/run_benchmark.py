#!/usr/bin/env python3
"""Run the committed desk benchmark: both norms, 100 inputs, budget 2000.

Writes attacks.csv/trace.csv/resolved.json per norm under --out and prints
the per-method medians next to the regression expectations.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from blackbandit.cli import main as cli_main

EXPECTED_MEDIANS = {
    "desk-linf": {"whitebox": 0.0, "nes": 100.0, "bandits_t": 44.0, "bandits_td": 34.0},
    "desk-l2": {"whitebox": 0.0, "nes": 90.0, "bandits_t": 81.0, "bandits_td": 56.0},
}


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="results", help="output root directory")
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args()

    import csv
    import statistics

    for preset, expected in EXPECTED_MEDIANS.items():
        out_dir = Path(args.out) / preset
        code = cli_main(
            ["attack", "--preset", preset, "--workers", str(args.workers),
             "--out", str(out_dir)]
        )
        if code != 0:
            return code
        by_method: dict[str, list[int]] = {}
        with (out_dir / "attacks.csv").open() as fh:
            for row in csv.DictReader(fh):
                by_method.setdefault(row["method"], []).append(int(row["queries"]))
        print(f"\n{preset}:")
        for method, queries in by_method.items():
            median = statistics.median(queries)
            want = expected[method]
            flag = "ok" if median == want else f"DRIFT (expected {want})"
            print(f"  {method:11s} median {median:7.1f}  {flag}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
