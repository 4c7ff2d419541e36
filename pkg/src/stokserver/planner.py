"""Non-adaptive plans: LP construction, extraction, shifting and costing.

A non-adaptive plan is a sequence of configurations <B_0..B_t>.  Serving a
request from B_i is a round trip of the closest server, so a plan's cost on
a realized sequence rho is

    sum_i d(B_{i-1}, B_i)  +  2 * sum_i d(B_i, r_i).

The LP below optimizes the fractional relaxation of the best such plan.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ExtractionError, SizeMismatchError, ValidationError
from .lp import LinearProgram, LpSolution, solve
from .metric import (
    Configuration,
    FractionalConfiguration,
    Metric,
    config_distance,
    fractional_distance,
    serve_distance,
)

FLOW_TOL = 1e-7


@dataclass(frozen=True)
class DistributionSequence:
    """t independent per-step request distributions (point -> probability)."""

    steps: tuple

    def __init__(self, steps: Sequence[Dict[int, float]]):
        fixed = []
        for i, dist in enumerate(steps):
            if not dist:
                raise ValidationError(f"step {i + 1} has empty support")
            total = sum(dist.values())
            if abs(total - 1.0) > 1e-9:
                raise ValidationError(
                    f"step {i + 1} probabilities sum to {total}, expected 1"
                )
            if any(p < 0 for p in dist.values()):
                raise ValidationError(f"step {i + 1} has a negative probability")
            fixed.append(tuple(sorted((int(r), float(p)) for r, p in dist.items())))
        object.__setattr__(self, "steps", tuple(fixed))

    @property
    def t(self) -> int:
        return len(self.steps)

    def support(self, tau: int) -> List[int]:
        """Support of step tau (1-based), zero-probability points dropped."""
        return [r for r, p in self.steps[tau - 1] if p > 0]

    def prob(self, tau: int, r: int) -> float:
        return dict(self.steps[tau - 1]).get(r, 0.0)

    def validate_points(self, n: int) -> None:
        for i, step in enumerate(self.steps):
            for r, _ in step:
                if not 0 <= r < n:
                    raise ValidationError(f"step {i + 1} references invalid point {r}")

    def sample(self, rng: np.random.Generator) -> List[int]:
        out = []
        for step in self.steps:
            pts = [r for r, _ in step]
            ps = np.array([p for _, p in step])
            out.append(int(rng.choice(pts, p=ps / ps.sum())))
        return out


@dataclass(frozen=True)
class IntegralPlan:
    configs: tuple  # t+1 Configuration values

    def __init__(self, configs: Sequence[Configuration]):
        ks = {c.k for c in configs}
        if len(ks) != 1:
            raise SizeMismatchError(f"plan mixes server counts {sorted(ks)}")
        object.__setattr__(self, "configs", tuple(configs))

    @property
    def t(self) -> int:
        return len(self.configs) - 1

    @property
    def k(self) -> int:
        return self.configs[0].k


@dataclass(frozen=True)
class FractionalPlan:
    configs: tuple  # t+1 FractionalConfiguration values
    flows: tuple  # per step tau=1..t: dict (u, v) -> mass moved
    serves: tuple  # per step tau=1..t: dict r -> dict v -> x_{tau,v,r}

    @property
    def t(self) -> int:
        return len(self.configs) - 1


@dataclass(frozen=True)
class NonAdaptiveLpShape:
    """Index bookkeeping tying LP columns back to plan components."""

    n: int
    t: int
    k: int
    supports: tuple  # per step tau=1..t: tuple of support points

    def b_index(self, tau: int, v: int) -> int:
        return tau * self.n + v

    def f_index(self, tau: int, u: int, v: int) -> int:
        base = (self.t + 1) * self.n
        return base + (tau - 1) * self.n * self.n + u * self.n + v

    def x_index(self, tau: int, ri: int, v: int) -> int:
        """ri is the index of r within supports[tau-1]."""
        base = (self.t + 1) * self.n + self.t * self.n * self.n
        off = sum(len(s) for s in self.supports[: tau - 1]) * self.n
        return base + off + ri * self.n + v

    @property
    def n_vars(self) -> int:
        return (
            (self.t + 1) * self.n
            + self.t * self.n * self.n
            + sum(len(s) for s in self.supports) * self.n
        )


def build_nonadaptive_lp(
    m: Metric,
    d: DistributionSequence,
    k: int,
    fixed_start: Optional[Configuration] = None,
) -> Tuple[LinearProgram, NonAdaptiveLpShape]:
    """LP over b (masses), f (movements) and x (serve assignments).

    Variables: b[tau,v] for tau=0..t; f[tau,u,v] for tau=1..t moving mass
    between B_{tau-1} and B_tau; x[tau,v,r] only for r in step tau's support.
    The initial configuration B_0 is optimized unless fixed_start is given.
    """
    if k < 1:
        raise ValidationError("k must be >= 1")
    if d.t < 1:
        raise ValidationError("need at least one request step")
    d.validate_points(m.n)
    n, t = m.n, d.t
    supports = tuple(tuple(d.support(tau)) for tau in range(1, t + 1))
    shape = NonAdaptiveLpShape(n=n, t=t, k=k, supports=supports)
    nv = shape.n_vars

    obj = np.zeros(nv)
    names = [""] * nv
    for tau in range(t + 1):
        for v in range(n):
            names[shape.b_index(tau, v)] = f"b[{tau},{v}]"
    for tau in range(1, t + 1):
        for u in range(n):
            for v in range(n):
                j = shape.f_index(tau, u, v)
                names[j] = f"f[{tau},{u},{v}]"
                obj[j] = m.dist[u, v]
        for ri, r in enumerate(supports[tau - 1]):
            pr = d.prob(tau, r)
            for v in range(n):
                j = shape.x_index(tau, ri, v)
                names[j] = f"x[{tau},{v},{r}]"
                obj[j] = 2.0 * pr * m.dist[v, r]

    rows = []
    for tau in range(1, t + 1):
        for v in range(n):
            coef = np.zeros(nv)
            coef[shape.b_index(tau, v)] = 1.0
            coef[shape.b_index(tau - 1, v)] -= 1.0
            for u in range(n):
                coef[shape.f_index(tau, u, v)] -= 1.0
                coef[shape.f_index(tau, v, u)] += 1.0
            rows.append((coef, "=", 0.0))
    for tau in range(1, t + 1):
        for ri, r in enumerate(supports[tau - 1]):
            coef = np.zeros(nv)
            for v in range(n):
                coef[shape.x_index(tau, ri, v)] = 1.0
            rows.append((coef, ">=", 1.0))
    for tau in range(1, t + 1):
        for ri, r in enumerate(supports[tau - 1]):
            for v in range(n):
                coef = np.zeros(nv)
                coef[shape.x_index(tau, ri, v)] = 1.0
                coef[shape.b_index(tau, v)] = -1.0
                rows.append((coef, "<=", 0.0))
    for tau in range(t + 1):
        coef = np.zeros(nv)
        for v in range(n):
            coef[shape.b_index(tau, v)] = 1.0
        rows.append((coef, "<=", float(k)))
    if fixed_start is not None:
        counts = fixed_start.counts(n)
        for v in range(n):
            coef = np.zeros(nv)
            coef[shape.b_index(0, v)] = 1.0
            rows.append((coef, "=", float(counts[v])))

    return LinearProgram(objective=obj, constraints=rows, names=names), shape


def extract_fractional_plan(
    shape: NonAdaptiveLpShape, sol: LpSolution
) -> FractionalPlan:
    """Read a solved LP back into a FractionalPlan and audit its invariants.

    The LP allows total mass below k; the extracted configurations are
    padded up to exactly k with stationary mass (placed on the point that
    already carries the most), which changes no flow and no cost.
    """
    if sol.status != "optimal":
        raise ExtractionError("status", f"solution status is {sol.status}")
    n, t, k = shape.n, shape.t, shape.k
    vals = np.asarray(sol.values)

    b = np.empty((t + 1, n))
    for tau in range(t + 1):
        for v in range(n):
            b[tau, v] = vals[shape.b_index(tau, v)]
    flows = []
    for tau in range(1, t + 1):
        step = {}
        for u in range(n):
            for v in range(n):
                f = vals[shape.f_index(tau, u, v)]
                if f > FLOW_TOL:
                    step[(u, v)] = float(f)
        flows.append(step)
    serves = []
    for tau in range(1, t + 1):
        step = {}
        for ri, r in enumerate(shape.supports[tau - 1]):
            xv = {}
            for v in range(n):
                x = vals[shape.x_index(tau, ri, v)]
                if x > FLOW_TOL:
                    xv[v] = float(x)
            step[r] = xv
        serves.append(step)

    # Invariant audit (pre-padding).
    for tau in range(1, t + 1):
        for v in range(n):
            inflow = sum(f for (u, w), f in flows[tau - 1].items() if w == v)
            outflow = sum(f for (u, w), f in flows[tau - 1].items() if u == v)
            if abs(b[tau, v] - b[tau - 1, v] - inflow + outflow) > FLOW_TOL:
                raise ExtractionError("flow-conservation", f"tau={tau}, v={v}")
        for r, xv in serves[tau - 1].items():
            if sum(xv.values()) < 1.0 - FLOW_TOL:
                raise ExtractionError("request-covering", f"tau={tau}, r={r}")
            for v, x in xv.items():
                if x > b[tau, v] + FLOW_TOL:
                    raise ExtractionError("serve-capacity", f"tau={tau}, v={v}, r={r}")
    for tau in range(t + 1):
        if b[tau].sum() > k + FLOW_TOL:
            raise ExtractionError("mass-budget", f"tau={tau}")

    deficit = k - b[0].sum()
    if deficit > FLOW_TOL:
        anchor = int(np.argmax(b[0]))
        b[:, anchor] += deficit  # stationary across all steps: no flow, no cost
    configs = tuple(FractionalConfiguration(b[tau]) for tau in range(t + 1))
    return FractionalPlan(configs=configs, flows=tuple(flows), serves=tuple(serves))


def shift_plan(adaptive_trace: Sequence[Configuration]) -> IntegralPlan:
    """Request-oblivious plan shifted one step behind an adaptive trace:
    B_0 = A_0 and B_i = A_{i-1}."""
    trace = list(adaptive_trace)
    return IntegralPlan([trace[0]] + trace[:-1])


def trace_cost(m: Metric, trace: Sequence[Configuration], rho: Sequence[int]) -> float:
    """Cost of an adaptive trace <A_0..A_t>: sum of movements, where A_i
    must cover r_i (valid-configuration accounting)."""
    if len(trace) != len(rho) + 1:
        raise SizeMismatchError("trace length must be len(rho)+1")
    for a, r in zip(trace[1:], rho):
        if r not in a:
            raise ValidationError(f"trace configuration does not cover request {r}")
    return sum(config_distance(m, x, y) for x, y in zip(trace, trace[1:]))


def plan_cost_integral(m: Metric, plan: IntegralPlan, rho: Sequence[int]) -> float:
    if len(rho) != plan.t:
        raise SizeMismatchError(f"expected {plan.t} requests, got {len(rho)}")
    move = sum(
        config_distance(m, x, y) for x, y in zip(plan.configs, plan.configs[1:])
    )
    serve = sum(serve_distance(m, b, r) for b, r in zip(plan.configs[1:], rho))
    return move + 2.0 * serve


def plan_cost_fractional(
    m: Metric, plan: FractionalPlan, d: DistributionSequence
) -> float:
    cost = 0.0
    for tau in range(1, plan.t + 1):
        for (u, v), f in plan.flows[tau - 1].items():
            cost += f * m.dist[u, v]
        for r, xv in plan.serves[tau - 1].items():
            pr = d.prob(tau, r)
            for v, x in xv.items():
                cost += 2.0 * x * pr * m.dist[v, r]
    return cost


def expected_plan_cost(
    m: Metric, plan: IntegralPlan, d: DistributionSequence
) -> float:
    """Exact expectation of plan cost, no sampling."""
    if d.t != plan.t:
        raise SizeMismatchError(f"plan has {plan.t} steps, distributions {d.t}")
    move = sum(
        config_distance(m, x, y) for x, y in zip(plan.configs, plan.configs[1:])
    )
    serve = 0.0
    for tau in range(1, plan.t + 1):
        b = plan.configs[tau]
        for r in d.support(tau):
            serve += d.prob(tau, r) * serve_distance(m, b, r)
    return move + 2.0 * serve


@dataclass(frozen=True)
class CostStatistics:
    mean: float
    stderr: float
    costs: tuple

    @property
    def trials(self) -> int:
        return len(self.costs)


def simulate_plan(
    m: Metric,
    plan: IntegralPlan,
    d: DistributionSequence,
    trials: int,
    seed: int,
) -> CostStatistics:
    """Monte-Carlo estimate of expected plan cost.  One independent stream
    per trial, derived from (seed, trial), so results do not depend on
    execution order."""
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    costs = []
    for trial in range(trials):
        rng = np.random.default_rng([seed, trial])
        rho = d.sample(rng)
        costs.append(plan_cost_integral(m, plan, rho))
    arr = np.asarray(costs)
    stderr = float(arr.std(ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0
    return CostStatistics(mean=float(arr.mean()), stderr=stderr, costs=tuple(costs))


def solve_nonadaptive(
    m: Metric,
    d: DistributionSequence,
    k: int,
    fixed_start: Optional[Configuration] = None,
) -> Tuple[FractionalPlan, float]:
    """Convenience pipeline: build, solve, extract.  Returns (plan, value)."""
    lp, shape = build_nonadaptive_lp(m, d, k, fixed_start=fixed_start)
    sol = solve(lp)
    if sol.status != "optimal":
        raise ExtractionError("status", f"LP is {sol.status}")
    plan = extract_fractional_plan(shape, sol)
    return plan, sol.objective_value
