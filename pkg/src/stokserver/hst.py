"""Random HST embeddings and fractional-to-integral rounding on trees.

The embedding is the classic random-permutation / random-radius-scale
hierarchical ball partitioning: cluster radii shrink by a factor sigma per
level, the scale is drawn log-uniformly from [1/sigma, 1), and every point
joins the cluster of the first permutation element within the current
radius.  Tree edge weights follow the power law sigma^(height - depth)
exactly, every leaf sits at the same depth, and the tree never contracts a
pairwise distance.

Tree rounding distributes each node's integer server count to its children
with floor/ceil randomization, preferring subtrees that already hold the
servers, so every subtree count stays consistent with the fractional mass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import ValidationError
from .metric import Configuration, FractionalConfiguration, Metric
from .planner import FractionalPlan, IntegralPlan

INT_TOL = 1e-9


@dataclass
class HstNode:
    id: int
    depth: int
    parent: Optional["HstNode"] = None
    children: List["HstNode"] = field(default_factory=list)
    point: Optional[int] = None  # set on leaves only
    leaf_points: tuple = ()


@dataclass
class Hst:
    sigma: float
    height: int  # exponent anchor: edge below depth-d node weighs sigma^(height-d)
    root: HstNode
    leaves: Dict[int, HstNode]  # metric point -> leaf node

    @property
    def leaf_depth(self) -> int:
        return next(iter(self.leaves.values())).depth

    def edge_weight(self, node: HstNode) -> float:
        """Weight of the edge between node's parent and node."""
        return self.sigma ** (self.height - node.parent.depth)

    def distance(self, u: int, v: int) -> float:
        """Leaf-to-leaf distance; depends only on the LCA depth."""
        if u == v:
            return 0.0
        return self._depth_distance(self._lca_depth(u, v))

    def _lca_depth(self, u: int, v: int) -> int:
        a, b = self.leaves[u], self.leaves[v]
        while a is not b:
            a, b = a.parent, b.parent
        return a.depth

    def _depth_distance(self, lca_depth: int) -> float:
        s = self.sigma
        total = 0.0
        for d in range(lca_depth, self.leaf_depth):
            total += s ** (self.height - d)
        return 2.0 * total

    def nodes(self) -> List[HstNode]:
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            out.append(node)
            stack.extend(reversed(node.children))
        return out

    def dump(self) -> str:
        """Indented-text dump for debugging: id, depth, edge weight, leaf."""
        lines = []
        def rec(node, indent):
            w = "" if node.parent is None else f" w={self.edge_weight(node):.6g}"
            leaf = "" if node.point is None else f" leaf={node.point}"
            lines.append("  " * indent + f"node {node.id} d={node.depth}{w}{leaf}")
            for c in node.children:
                rec(c, indent + 1)
        rec(self.root, 0)
        return "\n".join(lines) + "\n"


def frt_embed(m: Metric, sigma: float, seed: int) -> Hst:
    """Random sigma-HST over the metric's points, non-contracting for every
    pair and deterministic given the seed."""
    if sigma <= 1:
        raise ValidationError("sigma must exceed 1")
    n = m.n
    rng = np.random.default_rng(seed)
    beta = sigma ** (rng.random() - 1.0)  # log-uniform in [1/sigma, 1)
    perm = rng.permutation(n)

    ids = iter(range(10**9))
    if n == 1:
        root = HstNode(id=next(ids), depth=0, point=0, leaf_points=(0,))
        return Hst(sigma=sigma, height=0, root=root, leaves={0: root})

    diam = float(m.dist.max())
    lmax = math.ceil(math.log(diam / beta) / math.log(sigma))
    root = HstNode(id=next(ids), depth=0, leaf_points=tuple(range(n)))
    frontier = [(root, list(range(n)))]
    level = lmax
    while any(len(pts) > 1 for _, pts in frontier):
        level -= 1
        radius = beta * sigma**level
        nxt = []
        for node, pts in frontier:
            groups: Dict[int, List[int]] = {}
            for p in pts:
                for center in perm:
                    if m.dist[center, p] <= radius:
                        groups.setdefault(int(center), []).append(p)
                        break
            for center in perm:
                if int(center) in groups:
                    sub = groups[int(center)]
                    child = HstNode(
                        id=next(ids),
                        depth=node.depth + 1,
                        parent=node,
                        leaf_points=tuple(sub),
                    )
                    node.children.append(child)
                    nxt.append((child, sub))
        frontier = nxt

    leaves = {}
    for node, pts in frontier:
        node.point = pts[0]
        leaves[pts[0]] = node
    # Edge below the level-(l+1) node must weigh sigma^(l+1); with that node
    # at depth lmax-l-1 the exponent anchor is exactly lmax.
    return Hst(sigma=sigma, height=lmax, root=root, leaves=leaves)


def induced_metric(tree: Hst) -> np.ndarray:
    """Pairwise leaf distances of the tree, indexed by metric point."""
    pts = sorted(tree.leaves)
    n = len(pts)
    out = np.zeros((n, n))
    for i, u in enumerate(pts):
        for j, v in enumerate(pts):
            if i < j:
                out[i, j] = out[j, i] = tree.distance(u, v)
    return out


def _subtree_mass(node: HstNode, mass: np.ndarray) -> float:
    return float(sum(mass[p] for p in node.leaf_points))


def hst_round_step(
    tree: Hst,
    prev: Optional[Configuration],
    target: FractionalConfiguration,
    seed: int,
) -> Configuration:
    """One rounding step: an integral configuration whose subtree counts all
    lie in {floor, ceil} of the fractional subtree mass, moved as little as
    possible away from prev."""
    n = max(tree.leaves) + 1
    mass = target.vector(n)
    k = int(round(target.total))
    prev_counts = prev.counts(n) if prev is not None else np.zeros(n, dtype=int)
    rng = np.random.default_rng(seed)

    placed: Dict[int, int] = {}

    def assign(node: HstNode, count: int) -> None:
        if node.point is not None:
            if count:
                placed[node.point] = count
            return
        mus = [_subtree_mass(c, mass) for c in node.children]
        floors = [int(math.floor(mu + INT_TOL)) for mu in mus]
        residue = count - sum(floors)
        fracs = [mu - fl for mu, fl in zip(mus, floors)]
        cand = [i for i, fr in enumerate(fracs) if fr > INT_TOL]
        # count is in {floor, ceil} of the node mass, so the residue always
        # fits within the fractional children.
        chosen: List[int] = []
        if residue > 0:
            prev_sub = [
                sum(prev_counts[p] for p in node.children[i].leaf_points)
                for i in range(len(node.children))
            ]
            preferred = [i for i in cand if prev_sub[i] >= floors[i] + 1]
            others = [i for i in cand if i not in preferred]
            for pool in (preferred, others):
                while pool and len(chosen) < residue:
                    w = np.array([fracs[i] for i in pool])
                    pick = rng.choice(len(pool), p=w / w.sum())
                    chosen.append(pool.pop(int(pick)))
        for i, child in enumerate(node.children):
            assign(child, floors[i] + (1 if i in chosen else 0))

    assign(tree.root, k)
    positions = [p for p, c in placed.items() for _ in range(c)]
    return Configuration(positions)


def subtree_counts_consistent(
    tree: Hst, config: Configuration, target: FractionalConfiguration
) -> bool:
    """Check the floor/ceil consistency of every subtree count."""
    n = max(tree.leaves) + 1
    counts = config.counts(n)
    mass = target.vector(n)
    for node in tree.nodes():
        c = sum(counts[p] for p in node.leaf_points)
        mu = _subtree_mass(node, mass)
        if not (math.floor(mu + INT_TOL) - INT_TOL <= c <= math.ceil(mu - INT_TOL) + INT_TOL):
            return False
    return True


def round_plan_general(
    m: Metric, plan: FractionalPlan, sigma: float, seed: int
) -> IntegralPlan:
    """Round a fractional plan on an arbitrary metric: embed into a random
    HST, round each configuration in sequence with a shared seed stream,
    and read the leaf counts back as metric configurations."""
    tree = frt_embed(m, sigma, seed)
    step_seeds = np.random.SeedSequence(seed).spawn(plan.t + 1)
    prev = None
    configs = []
    for tau, target in enumerate(plan.configs):
        prev = hst_round_step(tree, prev, target, step_seeds[tau])
        configs.append(prev)
    return IntegralPlan(configs)
