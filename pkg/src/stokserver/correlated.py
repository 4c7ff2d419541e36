"""Correlated request sequences: scenario tries, the downward-link LP, and
execution of the resulting online algorithm.

When the t requests are correlated, the input is a finite set of scenarios
(full request sequences) with probabilities.  All scenarios live in a trie;
k extra chained nodes above the trie root carry the initial positions of
the k servers.  A variable x[u,v] on each (ancestor u, descendant v) pair
says the server that served u serves v next; the LP minimizes the expected
total movement Sum Pr(v) * d(point(u), point(v)) * x[u,v] subject to every
request being served exactly once and each server leaving a node at most
once per scenario.

Executing a solution moves fractional token mass down the realized path;
the per-step fractional configurations are rounded with a shared offset on
line/circle metrics and through a random tree embedding otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ResourceBudgetError, ValidationError
from .metric import Configuration, FractionalConfiguration, Metric, config_distance
from .lp import LinearProgram, LpSolution
from .planner import FractionalPlan, IntegralPlan
from .rounding import RoundingOffset, round_line
from .hst import round_plan_general

LINK_TOL = 1e-7


@dataclass(frozen=True)
class ScenarioSet:
    """Possible request sequences with probabilities; duplicates merged."""

    scenarios: tuple  # of tuples of point ids
    probs: tuple

    def __init__(self, scenarios: Sequence[Sequence[int]], probs: Sequence[float]):
        if len(scenarios) != len(probs):
            raise ValidationError("scenario and probability counts differ")
        if not scenarios:
            raise ValidationError("need at least one scenario")
        lengths = {len(s) for s in scenarios}
        if len(lengths) != 1:
            raise ValidationError(f"scenario lengths differ: {sorted(lengths)}")
        if 0 in lengths:
            raise ValidationError("scenarios must contain at least one request")
        if any(p < 0 for p in probs):
            raise ValidationError("negative scenario probability")
        total = float(sum(probs))
        if abs(total - 1.0) > 1e-9:
            raise ValidationError(f"scenario probabilities sum to {total}, expected 1")
        merged: Dict[tuple, float] = {}
        for s, p in zip(scenarios, probs):
            key = tuple(int(r) for r in s)
            merged[key] = merged.get(key, 0.0) + float(p)
        items = sorted(merged.items())
        object.__setattr__(self, "scenarios", tuple(s for s, _ in items))
        object.__setattr__(self, "probs", tuple(p for _, p in items))

    @property
    def m(self) -> int:
        return len(self.scenarios)

    @property
    def t(self) -> int:
        return len(self.scenarios[0])

    def validate_points(self, n: int) -> None:
        for s in self.scenarios:
            for r in s:
                if not 0 <= r < n:
                    raise ValidationError(f"scenario references invalid point {r}")


@dataclass
class TrieNode:
    id: int
    point: int  # metric point: server position on initial nodes, request otherwise
    step: int  # 0 for initial nodes, 1..t for request nodes
    is_initial: bool
    prob: float
    scenarios: frozenset  # indices of scenarios passing through this node
    parent: Optional["TrieNode"] = None
    children: List["TrieNode"] = field(default_factory=list)

    def ancestors(self) -> List["TrieNode"]:
        out, node = [], self.parent
        while node is not None:
            out.append(node)
            node = node.parent
        return out


@dataclass
class ScenarioTrie:
    k: int
    t: int
    initial: Configuration
    nodes: List[TrieNode]  # all nodes; initial chain first, then BFS order
    initial_nodes: List[TrieNode]  # top of the chain first; last one is the root
    leaves: Dict[int, TrieNode]  # scenario index -> leaf node
    scenario_set: ScenarioSet

    @property
    def root(self) -> TrieNode:
        """Bottom node of the initial chain; first requests hang below it."""
        return self.initial_nodes[-1]

    def request_nodes(self) -> List[TrieNode]:
        return [v for v in self.nodes if not v.is_initial]

    def scenario_path(self, i: int) -> List[TrieNode]:
        """Request nodes of scenario i, in order."""
        path = []
        node = self.leaves[i]
        while not node.is_initial:
            path.append(node)
            node = node.parent
        path.reverse()
        return path


def build_trie(s: ScenarioSet, k: int, initial: Configuration) -> ScenarioTrie:
    """Merge scenario prefixes into a trie and chain the k initial-position
    nodes above its root."""
    if initial.k != k:
        raise ValidationError(f"initial configuration holds {initial.k} servers, not {k}")
    ids = iter(range(10**9))
    all_idx = frozenset(range(s.m))
    chain: List[TrieNode] = []
    for pos in initial.positions:
        node = TrieNode(
            id=next(ids), point=int(pos), step=0, is_initial=True,
            prob=1.0, scenarios=all_idx,
            parent=chain[-1] if chain else None,
        )
        if chain:
            chain[-1].children.append(node)
        chain.append(node)
    root = chain[-1]

    nodes = list(chain)
    at_node: Dict[int, TrieNode] = {i: root for i in range(s.m)}
    for step in range(1, s.t + 1):
        # group scenarios by (prefix node, next request) and extend by one
        buckets: Dict[Tuple[int, int], List[int]] = {}
        for i in range(s.m):
            buckets.setdefault((at_node[i].id, s.scenarios[i][step - 1]), []).append(i)
        for (pid, point), idxs in sorted(buckets.items()):
            parent = at_node[idxs[0]]
            node = TrieNode(
                id=next(ids), point=point, step=step, is_initial=False,
                prob=float(sum(s.probs[i] for i in idxs)),
                scenarios=frozenset(idxs), parent=parent,
            )
            parent.children.append(node)
            nodes.append(node)
            for i in idxs:
                at_node[i] = node

    leaves = {}
    for node in nodes:
        if node.step == s.t:
            for i in node.scenarios:
                leaves[i] = node
    trie = ScenarioTrie(
        k=k, t=s.t, initial=initial, nodes=nodes,
        initial_nodes=chain, leaves=leaves, scenario_set=s,
    )
    _check_trie(trie)
    return trie


def _check_trie(trie: ScenarioTrie) -> None:
    for node in trie.nodes:
        if node.is_initial:
            assert abs(node.prob - 1.0) < 1e-12
        kids = [c for c in node.children if not c.is_initial]
        if kids and node.step < trie.t:
            total = sum(c.prob for c in kids)
            if node.is_initial and node is not trie.root:
                continue
            if abs(total - node.prob) > 1e-9:
                raise ValidationError(
                    f"child probabilities of node {node.id} sum to {total}, "
                    f"expected {node.prob}"
                )


@dataclass(frozen=True)
class CorrelatedLpShape:
    """Column bookkeeping: (ancestor id, node id) -> LP variable index."""

    var_index: dict
    pairs: tuple  # of (u_id, v_id) in column order


def build_correlated_lp(trie: ScenarioTrie, m: Metric) -> Tuple[LinearProgram, CorrelatedLpShape]:
    """The downward-link LP over the trie.

    One variable per (strict ancestor u, non-initial node v); objective
    Sum Pr(v) d(point(u), point(v)) x[u,v]; every request served exactly
    once; per node u and scenario through u, at most one outgoing link
    along that scenario; all variables in [0, 1].
    """
    trie.scenario_set.validate_points(m.n)
    for p in trie.initial.positions:
        if not 0 <= p < m.n:
            raise ValidationError(f"initial position {p} outside the metric")

    pairs: List[Tuple[int, int]] = []
    var_index: Dict[Tuple[int, int], int] = {}
    obj: List[float] = []
    names: List[str] = []
    by_id = {node.id: node for node in trie.nodes}
    for v in trie.request_nodes():
        for u in v.ancestors():
            j = len(pairs)
            var_index[(u.id, v.id)] = j
            pairs.append((u.id, v.id))
            obj.append(v.prob * m.d(u.point, v.point))
            names.append(f"x[{u.id},{v.id}]")
    nv = len(pairs)

    rows = []
    for v in trie.request_nodes():
        coef = np.zeros(nv)
        for u in v.ancestors():
            coef[var_index[(u.id, v.id)]] = 1.0
        rows.append((coef, "=", 1.0))
    for u in trie.nodes:
        for i in sorted(u.scenarios):
            coef = np.zeros(nv)
            hit = False
            # descendants of u on scenario i's path are exactly the path
            # nodes whose (u, v) variable exists
            for v in trie.scenario_path(i):
                j = var_index.get((u.id, v.id))
                if j is not None:
                    coef[j] = 1.0
                    hit = True
            if hit:
                rows.append((coef, "<=", 1.0))

    bounds = [(0.0, 1.0)] * nv
    lp = LinearProgram(
        objective=np.asarray(obj), constraints=rows, bounds=bounds, names=names
    )
    return lp, CorrelatedLpShape(var_index=dict(var_index), pairs=tuple(pairs))


def extract_links(shape: CorrelatedLpShape, sol: LpSolution) -> Dict[Tuple[int, int], float]:
    vals = np.asarray(sol.values)
    return {
        pair: float(vals[j])
        for j, pair in enumerate(shape.pairs)
        if vals[j] > LINK_TOL
    }


def audit_correlated_solution(
    trie: ScenarioTrie, shape: CorrelatedLpShape, sol: LpSolution
) -> None:
    """Serving equality and per-scenario path discipline on a solved LP."""
    vals = np.asarray(sol.values)
    for v in trie.request_nodes():
        total = sum(
            vals[shape.var_index[(u.id, v.id)]] for u in v.ancestors()
        )
        if abs(total - 1.0) > LINK_TOL:
            raise ValidationError(f"node {v.id} served with total mass {total}")
    for u in trie.nodes:
        for i in sorted(u.scenarios):
            total = sum(
                vals[shape.var_index[(u.id, v.id)]]
                for v in trie.scenario_path(i)
                if (u.id, v.id) in shape.var_index
            )
            if total > 1.0 + LINK_TOL:
                raise ValidationError(
                    f"node {u.id} sends mass {total} along scenario {i}"
                )


def _realized_path(trie: ScenarioTrie, rho: Sequence[int]) -> List[TrieNode]:
    if len(rho) != trie.t:
        raise ValidationError(f"expected {trie.t} requests, got {len(rho)}")
    path = []
    node = trie.root
    for step, r in enumerate(rho, start=1):
        nxt = next(
            (c for c in node.children if not c.is_initial and c.point == r), None
        )
        if nxt is None:
            raise ValidationError(
                f"request {r} at step {step} matches no scenario in the trie"
            )
        path.append(nxt)
        node = nxt
    return path


def fractional_trace(
    trie: ScenarioTrie,
    m: Metric,
    shape: CorrelatedLpShape,
    sol: LpSolution,
    rho: Sequence[int],
) -> FractionalPlan:
    """Token-mass evolution along the realized path: the t+1 fractional
    configurations the online algorithm occupies."""
    vals = np.asarray(sol.values)
    path = _realized_path(trie, rho)
    mass: Dict[int, float] = {u.id: 1.0 for u in trie.initial_nodes}
    point_of: Dict[int, int] = {u.id: u.point for u in trie.initial_nodes}

    def config() -> FractionalConfiguration:
        vec = np.zeros(m.n)
        for node_id, mu in mass.items():
            vec[point_of[node_id]] += mu
        return FractionalConfiguration(vec)

    configs = [config()]
    for v in path:
        for u in v.ancestors():
            key = (u.id, v.id)
            if key in shape.var_index:
                x = float(vals[shape.var_index[key]])
                if x > LINK_TOL:
                    take = min(x, mass.get(u.id, 0.0))
                    mass[u.id] = mass.get(u.id, 0.0) - take
                    mass[v.id] = mass.get(v.id, 0.0) + take
        point_of[v.id] = v.point
        # serving mass sums to 1 by the LP; snap float dust so totals stay k
        configs.append(config())
    return FractionalPlan(configs=tuple(configs), flows=(), serves=())


def execute_correlated(
    trie: ScenarioTrie,
    m: Metric,
    sol: LpSolution,
    shape: CorrelatedLpShape,
    rho: Sequence[int],
    offset: Optional[RoundingOffset] = None,
    sigma: float = 6.0,
    seed: int = 0,
) -> float:
    """Realized movement cost of the rounded online algorithm on rho.

    Line/circle metrics round every per-step fractional configuration with
    one shared offset; other metrics go through the random tree embedding.
    """
    trace = fractional_trace(trie, m, shape, sol, rho)
    if m.is_linear:
        if offset is None:
            offset = RoundingOffset(0.5)
        plan = IntegralPlan(
            [round_line(m, a, offset, k=trie.k) for a in trace.configs]
        )
    else:
        plan = round_plan_general(m, trace, sigma, seed)
    for cfg, r in zip(plan.configs[1:], rho):
        if r not in cfg:
            raise ValidationError(f"rounded configuration misses request {r}")
    return sum(
        config_distance(m, a, b) for a, b in zip(plan.configs, plan.configs[1:])
    )


def best_online_bruteforce_correlated(
    trie: ScenarioTrie, m: Metric, k: Optional[int] = None,
    budget: int = 200_000,
) -> float:
    """Exact optimal deterministic online algorithm by backward induction
    over (trie node, configuration) pairs; movement-only accounting, each
    configuration must cover the request just served."""
    from .oracles import enumerate_configs, config_distance_matrix

    if k is None:
        k = trie.k
    if k != trie.k:
        raise ValidationError(f"trie was built for k={trie.k}")
    configs = enumerate_configs(m.n, k)
    N = len(configs)
    if len(trie.nodes) * N * N > budget:
        raise ResourceBudgetError(
            f"{len(trie.nodes)} trie nodes x {N}^2 configurations exceeds budget"
        )
    D = config_distance_matrix(m, configs)
    covering = {
        r: [i for i, c in enumerate(configs) if r in c] for r in range(m.n)
    }

    cache: Dict[Tuple[int, int], float] = {}

    def value(node: TrieNode, a: int) -> float:
        """Expected future movement given the servers sit at configs[a]
        right after serving node (conditioned on reaching node)."""
        key = (node.id, a)
        if key in cache:
            return cache[key]
        kids = [c for c in node.children if not c.is_initial]
        total = 0.0
        for c in kids:
            cand = covering[c.point]
            best = min(D[a, b] + value(c, b) for b in cand)
            total += (c.prob / node.prob) * best
        cache[key] = total
        return total

    start = configs.index(trie.initial)
    return float(value(trie.root, start))
