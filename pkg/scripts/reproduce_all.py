"""Run every named experiment with both models and print the summaries.

    python scripts/reproduce_all.py [--out results] [--alpha 2.8] [--no-taper]

Each experiment writes into ``<out>/<name>/`` exactly as
``cortexlift reproduce --experiment <name>`` would.
"""

import argparse
import dataclasses
import sys
import time

from cortexlift.cli import EXPERIMENT_TAPER, EXPERIMENTS, RunConfig, cmd_reproduce


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results")
    ap.add_argument("--alpha", type=float, default=None, help="sigmoid gain (default: model default)")
    ap.add_argument("--no-taper", action="store_true", help="disable the radial low-pass taper")
    ap.add_argument("--only", nargs="*", choices=EXPERIMENTS, default=list(EXPERIMENTS))
    args = ap.parse_args(argv)

    base = RunConfig(taper=EXPERIMENT_TAPER and not args.no_taper)
    if args.alpha is not None:
        base = dataclasses.replace(base, params=base.params.replace(alpha=args.alpha))

    verdicts = {}
    for name in args.only:
        t0 = time.perf_counter()
        print(f"== {name}", flush=True)
        result = cmd_reproduce(name, args.out, base, log=lambda *_: None)
        print((open(f"{args.out}/{name}/summary.txt").read()).rstrip())
        print(f"({time.perf_counter() - t0:.0f} s)\n", flush=True)
        verdicts[name] = result["passed"]

    failed = [n for n, ok in verdicts.items() if ok is False]
    print("all thresholds met" if not failed else f"failed: {', '.join(failed)}")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
