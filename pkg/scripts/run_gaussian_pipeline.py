"""End-to-end demo on the conjugate Gaussian location fixture.

Runs the full constructed-summary pipeline, then marginal adjustment,
then prints the report table (the conjugate oracle mean for the default
config is 0.8). Artifacts land in the config's output directory.

Usage: python scripts/run_gaussian_pipeline.py [--out DIR] [--seed N]
"""

import argparse
import sys
from pathlib import Path

from semiabc.cli import main as cli

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "gaussian_location.json"


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--threads", type=int, default=1)
    args = parser.parse_args()

    extra = ["--threads", str(args.threads)]
    if args.out:
        extra += ["--out", args.out]
    if args.seed is not None:
        extra += ["--seed", str(args.seed)]

    for command in (["infer", "--full"], ["marginal"], ["report"]):
        code = cli(command + ["--config", str(CONFIG)] + extra)
        if code != 0:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
