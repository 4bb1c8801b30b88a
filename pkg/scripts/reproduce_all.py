"""Run every figure/table preset and write results under one directory.

Usage: python scripts/reproduce_all.py [OUTPUT_DIR] [--only ID ...] [--realizations N]
"""

import argparse
import sys
import time

from mftx.cli import main as cli_main
from mftx.harness import PRESET_IDS


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("output", nargs="?", default="results")
    ap.add_argument("--only", nargs="+", choices=PRESET_IDS, default=list(PRESET_IDS))
    ap.add_argument("--realizations", type=int, help="override simulation realizations")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    failed = []
    for pid in args.only:
        cmd = ["reproduce", pid, "-o", f"{args.output}/{pid}", "--seed", str(args.seed)]
        if args.realizations:
            cmd += ["--realizations", str(args.realizations)]
        t0 = time.perf_counter()
        rc = cli_main(cmd)
        print(f"{pid}: rc={rc} ({time.perf_counter() - t0:.1f} s)", flush=True)
        if rc:
            failed.append(pid)
    if failed:
        print("failed presets: " + ", ".join(failed), file=sys.stderr)
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
