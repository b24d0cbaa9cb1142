#!/usr/bin/env python3
"""Run every acceptance criterion and print one pass/fail line per criterion.

Usage:
    python scripts/run_acceptance.py [--seed N] [--only bundle-exactness,...]
                                     [--out-dir reports/]

Exit code 0 iff all criteria pass. Set COVERTLAB_WORKERS to parallelize the
trial loops of the heavier experiments.
"""

import argparse
import pathlib
import sys

from covertlab.experiments import ACCEPTANCE
from covertlab.harness import ExperimentConfig, run_experiment


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--seed", type=int, default=20260810)
    parser.add_argument("--only", default=None,
                        help="comma-separated experiment ids")
    parser.add_argument("--out-dir", default=None)
    args = parser.parse_args()

    selected = set(args.only.split(",")) if args.only else None
    failures = []
    for number, experiment, budget in ACCEPTANCE:
        if selected and experiment not in selected:
            continue
        out = None
        if args.out_dir:
            pathlib.Path(args.out_dir).mkdir(parents=True, exist_ok=True)
            out = str(pathlib.Path(args.out_dir) / f"{number:02d}-{experiment}.json")
        config = ExperimentConfig(experiment, {}, args.seed + number, out=out)
        report = run_experiment(config)
        status = "PASS" if report.passed else "FAIL"
        print(f"criterion {number:2d} [{experiment}] {status} "
              f"({report.runtime:.1f}s / budget {budget}s)")
        for m in report.metrics:
            mark = "ok  " if m.passed else "FAIL"
            print(f"    {mark} {m.metric_id} = {m.value:.6g}  ({m.bound})")
        if not report.passed or report.runtime > budget:
            failures.append(experiment)
    if failures:
        print(f"\nFAILED: {', '.join(failures)}")
        return 1
    print("\nall criteria passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
