#!/usr/bin/env python3
"""Run the four gradient-structure experiments at desk scale.

Emits signexp.csv, cosine.csv, tiling.csv, and sparsity.csv under --out.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from blackbandit.cli import main as cli_main


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="results/experiments")
    parser.add_argument("--suite-size", type=int, default=500)
    args = parser.parse_args()

    jobs = [
        ["experiment", "signfrac", "--suite-size", str(args.suite_size),
         "--epsilon", "0.05"],
        ["experiment", "cosine", "--suite-size", "30", "--preset", "desk-l2",
         "--step-sizes", "0.1,0.3,1.0", "--steps", "8", "--nes-k", "20",
         "--nes-delta", "0.01", "--epsilon", "3.0"],
        ["experiment", "tiling", "--suite-size", str(args.suite_size),
         "--tiles", "1,2,4,8,16"],
        ["experiment", "sparsity", "--suite-size", str(args.suite_size),
         "--k-values", "1,16,64,128,256"],
    ]
    for argv in jobs:
        code = cli_main([*argv, "--out", args.out])
        if code != 0:
            return code
    print(f"wrote CSVs under {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
