"""Acceptance gate: runs every criterion experiment at its pinned parameters
and tolerance, printing one pass/fail line per criterion.

Seeds are fixed so the suite is deterministic; runtime budgets come with the
criteria. Run with `pytest tests/test_acceptance.py -v -s` to watch the lines
stream, or via `scripts/run_acceptance.py` / the CLI.
"""

import pytest

from covertlab.experiments import ACCEPTANCE
from covertlab.harness import ExperimentConfig, run_experiment

MASTER_SEED = 20260810


@pytest.mark.parametrize("number,experiment,budget",
                         ACCEPTANCE, ids=[f"criterion-{n:02d}-{e}"
                                          for n, e, _ in ACCEPTANCE])
def test_acceptance_criterion(number, experiment, budget):
    config = ExperimentConfig(experiment, {}, MASTER_SEED + number)
    report = run_experiment(config)
    status = "PASS" if report.passed else "FAIL"
    print(f"criterion {number:2d} [{experiment}]: {status} "
          f"({report.runtime:.1f}s / budget {budget}s)")
    for metric in report.metrics:
        flag = "ok " if metric.passed else "FAIL"
        print(f"    {flag} {metric.metric_id} = {metric.value:.6g} ({metric.bound})")
    assert report.passed, f"criterion {number} failed: " + ", ".join(
        m.metric_id for m in report.metrics if not m.passed)
    assert report.runtime <= budget, (
        f"criterion {number} exceeded its runtime budget: "
        f"{report.runtime:.1f}s > {budget}s")
