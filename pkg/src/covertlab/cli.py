"""Command-line harness: run seeded experiments, list them, replay reports,
and inspect the fixture library.

Exit code 0 iff every criterion checked by the invoked experiment passed.
"""

from __future__ import annotations

import argparse
import json
import sys

from .fixtures import BUILTIN_FIXTURES, save_model
from .harness import ExperimentConfig, load_config, run_experiment


def _cmd_run(args) -> int:
    if args.target.endswith(".json"):
        config = load_config(args.target)
        if args.seed is not None:
            config = ExperimentConfig(config.experiment, config.params,
                                      args.seed, config.trials, args.out)
        elif args.out:
            config = ExperimentConfig(config.experiment, config.params,
                                      config.seed, config.trials, args.out)
    else:
        config = ExperimentConfig(args.target, {}, args.seed or 0,
                                  args.trials, args.out)
    report = run_experiment(config)
    for m in report.metrics:
        status = "pass" if m.passed else "FAIL"
        print(f"  [{status}] {m.metric_id} = {m.value:.6g}  ({m.bound})")
    if not args.out:
        sys.stdout.write(report.to_bytes().decode())
    return 0 if report.passed else 1


def _cmd_list(args) -> int:
    from .experiments import EXPERIMENTS

    for name in sorted(EXPERIMENTS):
        print(f"{name:28s} {EXPERIMENTS[name].description}")
    return 0


def _cmd_replay(args) -> int:
    with open(args.report, "rb") as fh:
        original = fh.read()
    doc = json.loads(original)
    cfg_doc = doc["config"]
    config = ExperimentConfig(cfg_doc["experiment"],
                              cfg_doc.get("params", {}), int(cfg_doc["seed"]),
                              cfg_doc.get("trials"))
    # params round-trip through the decimal-string form
    from .harness import _numify
    config = ExperimentConfig(config.experiment, _numify(config.params),
                              config.seed, config.trials)
    report = run_experiment(config)
    fresh = report.to_bytes()
    if fresh == original:
        print("replay: byte-identical")
        return 0
    print("replay: MISMATCH")
    return 1


def _cmd_fixtures(args) -> int:
    if args.dump:
        name, path = args.dump
        if name not in BUILTIN_FIXTURES:
            print(f"unknown fixture {name!r}", file=sys.stderr)
            return 1
        save_model(BUILTIN_FIXTURES[name](), path)
        print(f"wrote {name} to {path}")
        return 0
    for name in sorted(BUILTIN_FIXTURES):
        model = BUILTIN_FIXTURES[name]()
        kind = "table" if isinstance(model.rule, dict) else "functional"
        print(f"{name:16s} alphabet={model.alphabet} ({kind})")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="covertlab",
        description="seeded covert-conversation experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment by id or config path")
    p_run.add_argument("target", help="experiment id or JSON config file")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--trials", type=int, default=None)
    p_run.add_argument("--out", default=None, help="write the report here")
    p_run.set_defaults(fn=_cmd_run)

    p_list = sub.add_parser("list-experiments", help="list experiment ids")
    p_list.set_defaults(fn=_cmd_list)

    p_replay = sub.add_parser("replay", help="re-run a report's config and diff")
    p_replay.add_argument("report")
    p_replay.set_defaults(fn=_cmd_replay)

    p_fix = sub.add_parser("fixtures", help="list or dump built-in fixtures")
    p_fix.add_argument("--dump", nargs=2, metavar=("NAME", "PATH"))
    p_fix.set_defaults(fn=_cmd_fixtures)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
