"""Experiment orchestration: synthetic instances, the LP-vs-oracle
comparison loop, and CSV reporting.

Reports are split so reruns are reproducible byte for byte: results.csv
and ratios.csv carry only deterministic quantities, wall-clock seconds go
to timings.csv on the side.
"""

from __future__ import annotations

import csv
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ResourceBudgetError, ValidationError
from .metric import Metric, build_general_metric, build_line_metric
from .planner import (
    DistributionSequence,
    IntegralPlan,
    expected_plan_cost,
    simulate_plan,
    solve_nonadaptive,
)
from .rounding import derandomize_offset, round_plan_line
from .hst import round_plan_general
from .oracles import optimal_online_dp

PIPELINES = ("lp+line-round", "lp+hst-round", "dp-oracle")


@dataclass
class ExperimentSpec:
    ks: Sequence[int]
    out_dir: str
    seed: int
    pipeline: str = "lp+line-round"
    # synthetic-instance parameters (used when metric/dists not given)
    n: int = 10
    t: int = 5
    kind: str = "line"
    concentration: float = 1.0
    # pre-built instance (overrides the synthetic parameters)
    metric: Optional[Metric] = None
    dists: Optional[DistributionSequence] = None
    instance_name: str = "synthetic"
    trials: int = 200
    exact_expectation: bool = True
    sigma: float = 6.0
    mode: str = "cover"
    workers: int = 1
    oracle_budget: int = 5_000_000

    def __post_init__(self):
        if self.pipeline not in PIPELINES:
            raise ValidationError(f"unknown pipeline {self.pipeline!r}")
        if not self.ks:
            raise ValidationError("need at least one k")
        if any(k < 1 for k in self.ks):
            raise ValidationError("k must be >= 1")
        if self.seed is None:
            raise ValidationError("a seed is mandatory")


def synth_instance(
    n: int,
    t: int,
    k: int,
    kind: str,
    seed: int,
    concentration: float = 1.0,
) -> Tuple[Metric, DistributionSequence]:
    """Synthetic instance: line points on a uniform 10-unit grid or a random
    general metric, with per-step Dirichlet(concentration) distributions."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    if concentration <= 0:
        raise ValidationError("concentration must be positive")
    rng = np.random.default_rng(seed)
    if kind == "line":
        m = build_line_metric([10.0 * i for i in range(n)])
    elif kind == "general":
        # shortest-path closure of a random complete graph gives a metric
        raw = rng.uniform(1.0, 20.0, size=(n, n))
        raw = (raw + raw.T) / 2.0
        np.fill_diagonal(raw, 0.0)
        for mid in range(n):
            raw = np.minimum(raw, raw[:, mid][:, None] + raw[mid, :][None, :])
        m = build_general_metric(raw)
    else:
        raise ValidationError(f"unknown metric kind {kind!r}")
    steps = []
    for _ in range(t):
        p = rng.dirichlet(np.full(n, concentration))
        p = p / p.sum()
        steps.append({i: float(v) for i, v in enumerate(p)})
    return m, DistributionSequence(steps)


@dataclass
class ExperimentRow:
    instance: str
    k: int
    lp_value: float
    rounded_expected_cost: float
    rounded_stderr: float
    dp_value: Optional[float]  # None when the oracle exceeded its budget
    lp_seconds: float = 0.0
    round_seconds: float = 0.0
    dp_seconds: float = 0.0

    @property
    def ratio(self) -> Optional[float]:
        if self.dp_value is None:
            return None
        if self.dp_value <= 1e-12:
            return 1.0 if self.rounded_expected_cost <= 1e-9 else None
        return self.rounded_expected_cost / self.dp_value


def run_row(spec: ExperimentSpec, m: Metric, d: DistributionSequence, k: int) -> ExperimentRow:
    t0 = time.perf_counter()
    plan, lp_value = solve_nonadaptive(m, d, k)
    lp_seconds = time.perf_counter() - t0

    t0 = time.perf_counter()
    if spec.pipeline == "lp+hst-round" or not m.is_linear:
        rounded = round_plan_general(m, plan, spec.sigma, spec.seed + k)
    else:
        offset = derandomize_offset(m, plan, d)
        rounded = round_plan_line(plan, m, offset)
    if spec.exact_expectation:
        cost, stderr = expected_plan_cost(m, rounded, d), 0.0
    else:
        stats = simulate_plan(m, rounded, d, spec.trials, spec.seed + k)
        cost, stderr = stats.mean, stats.stderr
    round_seconds = time.perf_counter() - t0

    t0 = time.perf_counter()
    try:
        dp_value, _ = optimal_online_dp(
            m, d, k, mode=spec.mode, budget=spec.oracle_budget
        )
    except ResourceBudgetError:
        dp_value = None
    dp_seconds = time.perf_counter() - t0

    return ExperimentRow(
        instance=spec.instance_name,
        k=k,
        lp_value=lp_value,
        rounded_expected_cost=cost,
        rounded_stderr=stderr,
        dp_value=dp_value,
        lp_seconds=lp_seconds,
        round_seconds=round_seconds,
        dp_seconds=dp_seconds,
    )


def run_experiment(spec: ExperimentSpec) -> List[ExperimentRow]:
    """One row per k: LP value, rounded-plan cost, oracle value when it fits
    its budget (otherwise the row is kept with oracle=NA), and wall times.

    Writes results.csv + ratios.csv (fully deterministic given the spec and
    seed) and timings.csv (wall-clock, informational only).
    """
    if spec.metric is not None and spec.dists is not None:
        m, d = spec.metric, spec.dists
    else:
        m, d = synth_instance(
            spec.n, spec.t, max(spec.ks), spec.kind, spec.seed, spec.concentration
        )

    ks = list(spec.ks)
    if spec.workers > 1:
        with ThreadPoolExecutor(max_workers=spec.workers) as pool:
            rows = list(pool.map(lambda k: run_row(spec, m, d, k), ks))
    else:
        rows = [run_row(spec, m, d, k) for k in ks]

    os.makedirs(spec.out_dir, exist_ok=True)
    _write_results(os.path.join(spec.out_dir, "results.csv"), rows)
    _write_ratios(os.path.join(spec.out_dir, "ratios.csv"), rows)
    _write_timings(os.path.join(spec.out_dir, "timings.csv"), rows)
    return rows


def _fmt(value: Optional[float]) -> str:
    return "NA" if value is None else repr(float(value))


def _write_results(path: str, rows: List[ExperimentRow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["instance", "k", "lp_value", "rounded_expected_cost",
             "rounded_stderr", "oracle", "ratio"]
        )
        for row in rows:
            writer.writerow(
                [row.instance, row.k, _fmt(row.lp_value),
                 _fmt(row.rounded_expected_cost), _fmt(row.rounded_stderr),
                 _fmt(row.dp_value), _fmt(row.ratio)]
            )


def _write_ratios(path: str, rows: List[ExperimentRow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "ratio"])
        for row in rows:
            writer.writerow([row.k, _fmt(row.ratio)])


def _write_timings(path: str, rows: List[ExperimentRow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["instance", "k", "lp_seconds", "round_seconds", "dp_seconds"])
        for row in rows:
            writer.writerow(
                [row.instance, row.k, _fmt(row.lp_seconds),
                 _fmt(row.round_seconds), _fmt(row.dp_seconds)]
            )


def make_fixture(out_dir: str, seed: int = 40) -> Tuple[str, str]:
    """A 40-point line / 30-step synthetic instance of the shape used by the
    bundled experiment data, written as metric JSON + distributions CSV."""
    from .io import write_distributions, write_metric

    m, d = synth_instance(40, 30, 2, "line", seed)
    os.makedirs(out_dir, exist_ok=True)
    mp = os.path.join(out_dir, "fixture_metric.json")
    dp = os.path.join(out_dir, "fixture_distributions.csv")
    write_metric(mp, m)
    write_distributions(dp, d)
    return mp, dp
