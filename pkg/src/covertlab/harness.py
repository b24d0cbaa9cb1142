"""Experiment harness: seeded configs, deterministic reports, the
distinguisher-advantage operation, and the params-freshness registry.

Reports are a pure function of (config, seed, artifact version): the
serialized bytes exclude wall-clock runtime (it is carried in memory and
printed to stderr only) so replays compare byte-identical.
"""

from __future__ import annotations

import json
import os
import sys
import time
from dataclasses import dataclass
from decimal import Decimal

import numpy as np

from . import __version__
from .stats import newcombe_diff_interval

SCHEMA_VERSION = 1


class ParamsRegistry:
    """Consumed-params registry: bundle public parameters are single-use."""

    def __init__(self):
        self._seen = set()

    def consume(self, pp):
        key = pp.key()
        if key in self._seen:
            raise ValueError("bundle public params reused across embedded bits")
        self._seen.add(key)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    params: dict
    seed: int
    trials: int | None = None
    out: str | None = None

    def canonical(self) -> dict:
        doc = {"schema_version": SCHEMA_VERSION, "experiment": self.experiment,
               "seed": self.seed, "params": _stringify(self.params)}
        if self.trials is not None:
            doc["trials"] = self.trials
        return doc


def _stringify(obj):
    """Probabilities and other floats become decimal strings in serialized
    form, avoiding parse drift across writers."""
    if isinstance(obj, dict):
        return {k: _stringify(v) for k, v in sorted(obj.items())}
    if isinstance(obj, (list, tuple)):
        return [_stringify(v) for v in obj]
    if isinstance(obj, float):
        return format(Decimal(repr(obj)), "f")
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return format(Decimal(repr(float(obj))), "f")
    return obj


def _numify(obj):
    if isinstance(obj, dict):
        return {k: _numify(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_numify(v) for v in obj]
    if isinstance(obj, str):
        try:
            d = Decimal(obj)
        except Exception:
            return obj
        if d == d.to_integral_value() and "." not in obj and "e" not in obj.lower():
            return int(d)
        return float(d)
    return obj


def load_config(path: str) -> ExperimentConfig:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported config schema {doc.get('schema_version')}")
    return ExperimentConfig(doc["experiment"], _numify(doc.get("params", {})),
                            int(doc["seed"]), doc.get("trials"))


@dataclass
class Metric:
    metric_id: str
    value: float
    passed: bool
    bound: str = ""
    ci: tuple | None = None

    def as_dict(self) -> dict:
        doc = {"id": self.metric_id, "value": _stringify(float(self.value)),
               "passed": bool(self.passed), "bound": self.bound}
        if self.ci is not None:
            doc["ci"] = [_stringify(float(self.ci[0])), _stringify(float(self.ci[1]))]
        return doc


@dataclass
class Report:
    config: ExperimentConfig
    metrics: list
    runtime: float = 0.0          # in memory only; excluded from bytes
    version: str = __version__

    @property
    def passed(self) -> bool:
        return all(m.passed for m in self.metrics)

    def to_bytes(self) -> bytes:
        doc = {
            "artifact_version": self.version,
            "config": self.config.canonical(),
            "metrics": [m.as_dict() for m in self.metrics],
            "passed": self.passed,
        }
        return (json.dumps(doc, sort_keys=True, indent=1) + "\n").encode()

    def write(self, path: str):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())


def run_experiment(config: ExperimentConfig) -> Report:
    """Dispatch to the registered experiment; deterministic given config."""
    from .experiments import EXPERIMENTS

    if config.experiment not in EXPERIMENTS:
        known = ", ".join(sorted(EXPERIMENTS))
        raise ValueError(f"unknown experiment {config.experiment!r}; known: {known}")
    entry = EXPERIMENTS[config.experiment]
    params = dict(entry.defaults)
    for key, value in config.params.items():
        if key not in entry.defaults:
            raise ValueError(f"unknown param {key!r} for {config.experiment}")
        params[key] = value
    if config.trials is not None:
        params["trials"] = config.trials
    start = time.time()
    metrics = entry.fn(params, np.random.SeedSequence(config.seed))
    report = Report(config, metrics, runtime=time.time() - start)
    print(f"[covertlab] {config.experiment}: "
          f"{'PASS' if report.passed else 'FAIL'} in {report.runtime:.1f}s",
          file=sys.stderr)
    if config.out:
        report.write(config.out)
    return report


def child_rngs(seed_seq: np.random.SeedSequence, n: int) -> list:
    """Deterministic per-trial generators via spawn keys; order-independent
    aggregation keeps worker pools irrelevant to results."""
    return [np.random.default_rng(s) for s in seed_seq.spawn(n)]


def worker_count() -> int:
    return max(1, int(os.environ.get("COVERTLAB_WORKERS", "1")))


def parallel_map(fn, items):
    """Map preserving order; fans out to processes when COVERTLAB_WORKERS > 1."""
    workers = worker_count()
    if workers <= 1:
        return [fn(it) for it in items]
    import multiprocessing as mp
    with mp.get_context("spawn").Pool(workers) as pool:
        return pool.map(fn, items, chunksize=max(1, len(items) // (workers * 8)))


def distinguisher_advantage(sampler_a, sampler_b, statistic, trials: int,
                            rng: np.random.Generator) -> tuple[float, tuple]:
    """|Pr_a[stat = 1] - Pr_b[stat = 1]| with a Newcombe score interval for
    the difference. Samplers return batches; the statistic maps a batch to a
    0/1 array."""
    stat_a = np.asarray(statistic(sampler_a(rng, trials)), dtype=bool)
    stat_b = np.asarray(statistic(sampler_b(rng, trials)), dtype=bool)
    sa, sb = int(stat_a.sum()), int(stat_b.sum())
    lo, hi = newcombe_diff_interval(sa, trials, sb, trials)
    return abs(sa / trials - sb / trials), (lo, hi)
