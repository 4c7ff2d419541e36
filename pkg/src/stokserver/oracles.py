"""Exponential-time exact references: the optimal online policy, the
offline optimum, and the best non-adaptive plan.

Configurations are enumerated as sorted multisets (stars and bars), so
every oracle works on a canonical index space with a precomputed pairwise
movement-cost matrix.

Cost accountings (explicit, never mixed silently):
  * "cover":        each step ends in a configuration covering the request;
                    step cost is the movement d(A_{i-1}, A_i).
  * "serve-return": the configuration need not cover the request; step cost
                    is d(A_{i-1}, A_i) + 2 d(A_i, r_i).
  * "via":          like cover but one server may serve the request en
                    route, paying d(s, r) + d(r, target) on its leg.  Its
                    optimal value coincides with "cover" (the serving
                    moment is itself a valid configuration); it is kept as
                    an independent cross-check for small instances.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ResourceBudgetError, ValidationError
from .metric import Configuration, Metric, config_distance, serve_distance
from .planner import CostStatistics, DistributionSequence, IntegralPlan

DEFAULT_BUDGET = 5_000_000

MODES = ("cover", "serve-return", "via")


def enumerate_configs(n: int, k: int) -> List[Configuration]:
    return [
        Configuration(c)
        for c in itertools.combinations_with_replacement(range(n), k)
    ]


def config_distance_matrix(m: Metric, configs: Sequence[Configuration]) -> np.ndarray:
    """Pairwise min-cost matching distances between all configurations."""
    N = len(configs)
    if m.kind == "line":
        coords = np.asarray(m.coords)
        arr = np.stack([np.sort(coords[list(c.positions)]) for c in configs])
        return np.abs(arr[:, None, :] - arr[None, :, :]).sum(axis=2)
    D = np.zeros((N, N))
    for i in range(N):
        for j in range(i + 1, N):
            D[i, j] = D[j, i] = config_distance(m, configs[i], configs[j])
    return D


def _serve_matrix(
    m: Metric, configs: Sequence[Configuration], points: Sequence[int]
) -> np.ndarray:
    """serve[c, idx(r)] = distance of the closest server of config c to r."""
    out = np.empty((len(configs), len(points)))
    for ci, c in enumerate(configs):
        rows = m.dist[list(c.positions)]
        out[ci] = rows[:, list(points)].min(axis=0)
    return out


def _via_cost(m: Metric, a: Configuration, b: Configuration, r: int) -> float:
    """Min-cost move a -> b where exactly one server's leg routes via r."""
    k = a.k
    base = m.dist[np.ix_(a.positions, b.positions)]
    best = math.inf
    for si, s in enumerate(a.positions):
        for ti, t in enumerate(b.positions):
            detour = m.dist[s, r] + m.dist[r, t]
            if k == 1:
                rest = 0.0
            else:
                sub = np.delete(np.delete(base, si, axis=0), ti, axis=1)
                ri, ci = linear_sum_assignment(sub)
                rest = float(sub[ri, ci].sum())
            best = min(best, detour + rest)
    return best


@dataclass
class PolicyTable:
    """Backward-induction table: per step, cost-to-go per configuration and
    the transition rule (configuration, request) -> next configuration."""

    mode: str
    configs: List[Configuration]
    cost_to_go: List[np.ndarray]  # index tau=0..t; [tau][config] before step tau+1
    transitions: List[Dict[Tuple[int, int], int]]  # per step: (config, r) -> config
    initial: Configuration
    value: float

    @property
    def t(self) -> int:
        return len(self.transitions)

    def next_config(self, tau: int, current: Configuration, r: int) -> Configuration:
        idx = self.configs.index(current)
        return self.configs[self.transitions[tau - 1][(idx, r)]]


def _check_budget(amount: int, budget: int, what: str) -> None:
    if amount > budget:
        raise ResourceBudgetError(
            f"{what} needs {amount} state-transitions, budget is {budget}"
        )


def optimal_online_dp(
    m: Metric,
    d: DistributionSequence,
    k: int,
    mode: str = "cover",
    budget: int = DEFAULT_BUDGET,
    initial: Optional[Configuration] = None,
) -> Tuple[float, PolicyTable]:
    """Exact optimal online policy by backward induction over all
    configurations.  The initial configuration is free unless given."""
    if mode not in MODES:
        raise ValidationError(f"unknown mode {mode!r}")
    d.validate_points(m.n)
    configs = enumerate_configs(m.n, k)
    N = len(configs)
    _check_budget(N * N * d.t, budget, "optimal online DP")
    D = config_distance_matrix(m, configs)
    contains = {
        r: np.array([r in c for c in configs]) for r in range(m.n)
    }

    V = np.zeros(N)
    tables: List[np.ndarray] = [V]
    transitions: List[Dict[Tuple[int, int], int]] = []
    for tau in range(d.t, 0, -1):
        new_v = np.zeros(N)
        trans: Dict[Tuple[int, int], int] = {}
        for r in d.support(tau):
            pr = d.prob(tau, r)
            if mode == "cover":
                cand = np.nonzero(contains[r])[0]
                scores = D[:, cand] + V[cand][None, :]
                best = scores.argmin(axis=1)
                new_v += pr * scores[np.arange(N), best]
                for a in range(N):
                    trans[(a, r)] = int(cand[best[a]])
            elif mode == "serve-return":
                serve = np.array(
                    [2.0 * serve_distance(m, c, r) for c in configs]
                )
                scores = D + (serve + V)[None, :]
                best = scores.argmin(axis=1)
                new_v += pr * scores[np.arange(N), best]
                for a in range(N):
                    trans[(a, r)] = int(best[a])
            else:  # via
                scores = np.empty((N, N))
                for a in range(N):
                    for b in range(N):
                        scores[a, b] = _via_cost(m, configs[a], configs[b], r) + V[b]
                best = scores.argmin(axis=1)
                new_v += pr * scores[np.arange(N), best]
                for a in range(N):
                    trans[(a, r)] = int(best[a])
        V = new_v
        tables.append(V)
        transitions.append(trans)
    tables.reverse()
    transitions.reverse()

    if initial is None:
        start = int(np.argmin(V))
    else:
        start = configs.index(initial)
    policy = PolicyTable(
        mode=mode,
        configs=configs,
        cost_to_go=tables,
        transitions=transitions,
        initial=configs[start],
        value=float(V[start]),
    )
    return policy.value, policy


def offline_opt(
    m: Metric,
    rho: Sequence[int],
    k: int,
    mode: str = "cover",
    budget: int = DEFAULT_BUDGET,
    initial: Optional[Configuration] = None,
) -> float:
    """Exact offline optimum for a known request sequence; the initial
    configuration is free unless given."""
    if mode not in ("cover", "serve-return"):
        raise ValidationError(f"unknown offline mode {mode!r}")
    configs = enumerate_configs(m.n, k)
    N = len(configs)
    _check_budget(N * N * len(rho), budget, "offline optimum")
    D = config_distance_matrix(m, configs)

    if initial is None:
        V = np.zeros(N)
    else:
        start = configs.index(initial)
        V = D[start].copy() * 0.0 + np.inf
        V[start] = 0.0
    for r in rho:
        if mode == "cover":
            cand = np.nonzero(np.array([r in c for c in configs]))[0]
            V = (V[:, None] + D[:, cand]).min(axis=0)
            full = np.full(N, np.inf)
            full[cand] = V
            V = full
        else:
            serve = np.array([2.0 * serve_distance(m, c, r) for c in configs])
            V = (V[:, None] + D).min(axis=0) + serve
    return float(V.min())


def best_nonadaptive_bruteforce(
    m: Metric,
    d: DistributionSequence,
    k: int,
    budget: int = DEFAULT_BUDGET,
) -> Tuple[float, IntegralPlan]:
    """Exact minimizer of expected plan cost over all integral non-adaptive
    plans.  The search factorizes over steps (the cost is a chain), so the
    full plan space is scanned implicitly and exactly."""
    d.validate_points(m.n)
    configs = enumerate_configs(m.n, k)
    N = len(configs)
    if (d.t + 1) * math.log(N) > math.log(budget):
        raise ResourceBudgetError(
            f"plan space {N}^{d.t + 1} exceeds budget {budget}"
        )
    D = config_distance_matrix(m, configs)
    serve = np.zeros((d.t, N))
    for tau in range(1, d.t + 1):
        sm = _serve_matrix(m, configs, d.support(tau))
        probs = np.array([d.prob(tau, r) for r in d.support(tau)])
        serve[tau - 1] = 2.0 * sm @ probs

    V = np.zeros(N)  # B_0 free: zero cost before the first movement
    back: List[np.ndarray] = []
    for tau in range(1, d.t + 1):
        scores = V[:, None] + D
        arg = scores.argmin(axis=0)
        back.append(arg)
        V = scores[arg, np.arange(N)] + serve[tau - 1]
    end = int(np.argmin(V))
    value = float(V[end])
    chain = [end]
    for arg in reversed(back):
        chain.append(int(arg[chain[-1]]))
    chain.reverse()  # now B_0, B_1, ..., B_t
    plan = IntegralPlan([configs[c] for c in chain])
    return value, plan


def simulate_policy(
    m: Metric,
    policy: PolicyTable,
    d: DistributionSequence,
    trials: int,
    seed: int,
) -> CostStatistics:
    """Monte-Carlo realization of a policy, one stream per (seed, trial)."""
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    costs = []
    for trial in range(trials):
        rng = np.random.default_rng([seed, trial])
        rho = d.sample(rng)
        costs.append(realized_policy_cost(m, policy, rho))
    arr = np.asarray(costs)
    stderr = float(arr.std(ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0
    return CostStatistics(mean=float(arr.mean()), stderr=stderr, costs=tuple(costs))


def realized_policy_cost(m: Metric, policy: PolicyTable, rho: Sequence[int]) -> float:
    cur = policy.initial
    cost = 0.0
    for tau, r in enumerate(rho, start=1):
        nxt = policy.next_config(tau, cur, r)
        cost += config_distance(m, cur, nxt)
        if policy.mode == "serve-return":
            cost += 2.0 * serve_distance(m, nxt, r)
        elif policy.mode == "via":
            cost += _via_cost(m, cur, nxt, r) - config_distance(m, cur, nxt)
        cur = nxt
    return cost


def policy_expected_cost(m: Metric, policy: PolicyTable, d: DistributionSequence) -> float:
    """Exact expectation of the policy's realized cost by propagating the
    configuration distribution forward (no sampling)."""
    configs = policy.configs
    idx = {c: i for i, c in enumerate(configs)}
    probs = {idx[policy.initial]: 1.0}
    total = 0.0
    for tau in range(1, policy.t + 1):
        nxt: Dict[int, float] = {}
        for a, pa in probs.items():
            for r in d.support(tau):
                pr = d.prob(tau, r)
                b = policy.transitions[tau - 1][(a, r)]
                step = config_distance(m, configs[a], configs[b])
                if policy.mode == "serve-return":
                    step += 2.0 * serve_distance(m, configs[b], r)
                elif policy.mode == "via":
                    step = _via_cost(m, configs[a], configs[b], r)
                total += pa * pr * step
                nxt[b] = nxt.get(b, 0.0) + pa * pr
        probs = nxt
    return total
