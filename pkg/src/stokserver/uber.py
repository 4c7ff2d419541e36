"""The Uber problem: demands are (source, destination) pairs and a server
must pick the rider up at the source and drop them at the destination.

The reduction wrapper runs any k-server algorithm on the sources alone;
whenever that algorithm serves source s_i, the serving server detours to
the destination and comes back, paying an extra 2 d(s_i, t_i).  If the
wrapped algorithm is an alpha-approximation for the reduced instance, the
wrapper is an (alpha+2)-approximation for the Uber optimum.

Two cost models are explicit and never mixed: the wrapper's return-to-
source accounting above, and the true optimum where the serving server may
simply stay at the destination (uber_opt_bruteforce).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ResourceBudgetError, ValidationError
from .metric import Configuration, Metric, config_distance
from .planner import DistributionSequence, IntegralPlan, plan_cost_integral, trace_cost
from .oracles import (
    DEFAULT_BUDGET,
    PolicyTable,
    config_distance_matrix,
    enumerate_configs,
    offline_opt,
    realized_policy_cost,
)


@dataclass(frozen=True)
class UberDemand:
    source: int
    destination: int

    def validate(self, n: int) -> None:
        for p in (self.source, self.destination):
            if not 0 <= p < n:
                raise ValidationError(f"demand references invalid point {p}")


def uber_reduce(demands: Sequence[UberDemand]) -> List[int]:
    """Drop the destinations: the reduced k-server request sequence."""
    return [dm.source for dm in demands]


WrappedAlgorithm = Union[float, IntegralPlan, PolicyTable, Sequence[Configuration]]


def _wrapped_cost(m: Metric, algo: WrappedAlgorithm, sources: Sequence[int]) -> float:
    if isinstance(algo, (int, float)):
        return float(algo)
    if isinstance(algo, IntegralPlan):
        return plan_cost_integral(m, algo, sources)
    if isinstance(algo, PolicyTable):
        return realized_policy_cost(m, algo, sources)
    return trace_cost(m, list(algo), sources)


def uber_execute(
    m: Metric, algo: WrappedAlgorithm, demands: Sequence[UberDemand]
) -> float:
    """Cost of the reduction wrapper: the wrapped k-server algorithm's cost
    on the sources plus the 2 d(s_i, t_i) destination round trips.

    algo may be a non-adaptive plan, a policy table, a configuration trace,
    or a precomputed cost on the reduced sequence.
    """
    for dm in demands:
        dm.validate(m.n)
    detour = 2.0 * sum(m.d(dm.source, dm.destination) for dm in demands)
    if not demands:
        return 0.0
    return _wrapped_cost(m, algo, uber_reduce(demands)) + detour


def uber_opt_bruteforce(
    m: Metric,
    demands: Sequence[UberDemand],
    k: int,
    budget: int = DEFAULT_BUDGET,
    initial: Optional[Configuration] = None,
) -> float:
    """Exact Uber optimum: serving demand i routes one server through s_i
    to t_i, where it may stay.  The initial configuration is free unless
    given.  The result is checked against the two structural lower bounds
    (k-server optimum on sources; total demand lengths)."""
    for dm in demands:
        dm.validate(m.n)
    if not demands:
        return 0.0
    configs = enumerate_configs(m.n, k)
    N = len(configs)
    if N * N * len(demands) > budget:
        raise ResourceBudgetError(
            f"Uber optimum needs {N * N * len(demands)} state-transitions, "
            f"budget is {budget}"
        )
    D = config_distance_matrix(m, configs)

    if initial is None:
        V = np.zeros(N)
    else:
        V = np.full(N, np.inf)
        V[configs.index(initial)] = 0.0
    for dm in demands:
        new_v = np.full(N, np.inf)
        for b, cb in enumerate(configs):
            if dm.destination not in cb:
                continue
            best = np.inf
            for a, ca in enumerate(configs):
                if V[a] == np.inf:
                    continue
                best = min(best, V[a] + _demand_move(m, ca, cb, dm))
            new_v[b] = best
        V = new_v
    value = float(V.min())

    sources = uber_reduce(demands)
    opt_k = offline_opt(m, sources, k, budget=budget, initial=initial)
    total_len = sum(m.d(dm.source, dm.destination) for dm in demands)
    if value < max(opt_k, total_len) - 1e-7:
        raise ValidationError(
            f"Uber optimum {value} beats a structural lower bound "
            f"(OPT_k={opt_k}, demand lengths={total_len})"
        )
    return value


def _demand_move(m: Metric, a: Configuration, b: Configuration, dm: UberDemand) -> float:
    """Min movement a -> b where one server's leg goes through the source
    and ends on the destination (b must contain the destination)."""
    dests = [i for i, p in enumerate(b.positions) if p == dm.destination]
    best = np.inf
    for si, s in enumerate(a.positions):
        leg = m.d(s, dm.source) + m.d(dm.source, dm.destination)
        ti = dests[0]
        if a.k == 1:
            rest = 0.0
        else:
            others_a = [p for i, p in enumerate(a.positions) if i != si]
            others_b = [p for i, p in enumerate(b.positions) if i != ti]
            rest = config_distance(m, Configuration(others_a), Configuration(others_b))
        best = min(best, leg + rest)
    return best


@dataclass(frozen=True)
class DemandDistributionSequence:
    """Per-step distributions over (source, destination) demand pairs."""

    steps: tuple  # per step: tuple of ((source, destination), probability)

    def __init__(self, steps: Sequence[Dict[Tuple[int, int], float]]):
        fixed = []
        for i, dist in enumerate(steps):
            if not dist:
                raise ValidationError(f"step {i + 1} has empty demand support")
            total = sum(dist.values())
            if abs(total - 1.0) > 1e-9:
                raise ValidationError(
                    f"step {i + 1} demand probabilities sum to {total}"
                )
            if any(p < 0 for p in dist.values()):
                raise ValidationError(f"step {i + 1} has a negative probability")
            fixed.append(
                tuple(sorted(((int(s), int(t)), float(p)) for (s, t), p in dist.items()))
            )
        object.__setattr__(self, "steps", tuple(fixed))

    @property
    def t(self) -> int:
        return len(self.steps)

    def source_marginals(self) -> DistributionSequence:
        out = []
        for step in self.steps:
            dist: Dict[int, float] = {}
            for (s, _), p in step:
                dist[s] = dist.get(s, 0.0) + p
            out.append(dist)
        return DistributionSequence(out)

    def expected_detour(self, m: Metric) -> float:
        """Sum over steps of 2 E[d(source, destination)]."""
        total = 0.0
        for step in self.steps:
            for (s, t), p in step:
                total += 2.0 * p * m.d(s, t)
        return total

    def sample(self, rng: np.random.Generator) -> List[UberDemand]:
        out = []
        for step in self.steps:
            pairs = [st for st, _ in step]
            ps = np.array([p for _, p in step])
            pick = pairs[int(rng.choice(len(pairs), p=ps / ps.sum()))]
            out.append(UberDemand(*pick))
        return out


def expected_uber_cost(
    m: Metric, plan: IntegralPlan, dd: DemandDistributionSequence
) -> float:
    """Exact expected wrapper cost of a plan built for the source marginals."""
    from .planner import expected_plan_cost

    return expected_plan_cost(m, plan, dd.source_marginals()) + dd.expected_detour(m)
