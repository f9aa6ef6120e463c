#!/usr/bin/env python3
"""Run every scenario config in configs/ and write each into results/<config name>/.

paper_full.ini is skipped unless --paper is given (it needs hours, not minutes).
"""

import argparse
import pathlib
import sys
import time

from hybrid_dpd import config as cf, runner

ROOT = pathlib.Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(ROOT / "results"))
    ap.add_argument("--paper", action="store_true", help="also run paper_full.ini")
    ap.add_argument("names", nargs="*", help="config stems to run (default: all)")
    args = ap.parse_args()
    paths = sorted((ROOT / "configs").glob("*.ini"))
    if args.names:
        paths = [p for p in paths if p.stem in args.names]
    elif not args.paper:
        paths = [p for p in paths if p.stem != "paper_full"]
    failed = 0
    for path in paths:
        t0 = time.time()
        try:
            res = runner.run_scenario(cf.load(path), pathlib.Path(args.out) / path.stem)
            print(f"{path.stem:26s} {len(res.metrics):6d} rows  {time.time() - t0:7.1f} s")
        except runner.ScenarioError as exc:
            failed += 1
            print(f"{path.stem:26s} failed: {exc}", file=sys.stderr)
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
