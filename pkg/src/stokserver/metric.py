"""Finite metric spaces, server configurations and distance primitives.

Points are integers 0..n-1.  A ``Configuration`` is a multiset of k points;
a ``FractionalConfiguration`` assigns nonnegative server mass to every point
with total mass k.  All equality checks use absolute tolerance 1e-9 unless
stated otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import (
    ImbalanceError,
    InfeasibleServeError,
    SizeMismatchError,
    ValidationError,
)

TOL = 1e-9
TRI_TOL = 1e-9  # slack allowed on the triangle inequality


@dataclass(frozen=True)
class Metric:
    """A finite metric: n points with a validated distance matrix.

    kind is one of {"line", "circle", "general", "hst-induced"}.  For line
    metrics ``coords[i]`` is the position on the real line; for circles it
    is the arc position in [0, circumference).
    """

    dist: np.ndarray
    kind: str
    coords: Optional[tuple] = None
    circumference: Optional[float] = None

    def __post_init__(self):
        self.dist.flags.writeable = False

    @property
    def n(self) -> int:
        return self.dist.shape[0]

    @property
    def points(self) -> range:
        return range(self.n)

    def d(self, x: int, y: int) -> float:
        return float(self.dist[x, y])

    @property
    def is_linear(self) -> bool:
        """True when the exact line/circle rounding machinery applies."""
        return self.kind in ("line", "circle")

    def order_by_coordinate(self) -> np.ndarray:
        """Point ids sorted by coordinate (identity for general metrics)."""
        if self.coords is None:
            return np.arange(self.n)
        return np.argsort(np.asarray(self.coords), kind="stable")


def _check_matrix(dist: np.ndarray) -> None:
    n = dist.shape[0]
    if dist.shape != (n, n):
        raise ValidationError(f"distance matrix must be square, got {dist.shape}")
    if np.any(dist < 0):
        raise ValidationError("negative distance")
    if np.any(np.abs(np.diag(dist)) > TOL):
        raise ValidationError("nonzero self-distance")
    if np.any(np.abs(dist - dist.T) > TOL):
        raise ValidationError("asymmetric distance matrix")
    # d(x,z) <= d(x,y) + d(y,z) for all triples, checked densely.
    for y in range(n):
        through_y = dist[:, y][:, None] + dist[y, :][None, :]
        bad = dist > through_y + TRI_TOL
        if np.any(bad):
            x, z = np.argwhere(bad)[0]
            raise ValidationError(
                f"triangle inequality violated on ({x},{y},{z}): "
                f"d={dist[x, z]:.12g} > {through_y[x, z]:.12g}"
            )


def build_line_metric(coords: Sequence[float]) -> Metric:
    coords = [float(c) for c in coords]
    if any(b <= a for a, b in zip(coords, coords[1:])):
        raise ValidationError("line coordinates must be strictly ascending")
    arr = np.asarray(coords)
    dist = np.abs(arr[:, None] - arr[None, :])
    return Metric(dist=dist, kind="line", coords=tuple(coords))


def build_circle_metric(coords: Sequence[float], circumference: float) -> Metric:
    coords = [float(c) for c in coords]
    c0 = float(circumference)
    if c0 <= 0:
        raise ValidationError("circumference must be positive")
    if any(b <= a for a, b in zip(coords, coords[1:])):
        raise ValidationError("circle coordinates must be strictly ascending")
    if coords and (coords[0] < 0 or coords[-1] >= c0):
        raise ValidationError("circle coordinates must lie in [0, circumference)")
    arr = np.asarray(coords)
    gap = np.abs(arr[:, None] - arr[None, :])
    dist = np.minimum(gap, c0 - gap)
    return Metric(dist=dist, kind="circle", coords=tuple(coords), circumference=c0)


def build_general_metric(dist) -> Metric:
    dist = np.array(dist, dtype=float)
    _check_matrix(dist)
    return Metric(dist=dist, kind="general")


@dataclass(frozen=True)
class Configuration:
    """A placement of k servers: a sorted multiset of point ids."""

    positions: tuple

    def __init__(self, positions: Iterable[int]):
        object.__setattr__(self, "positions", tuple(sorted(int(p) for p in positions)))

    @property
    def k(self) -> int:
        return len(self.positions)

    def __contains__(self, point: int) -> bool:
        return point in self.positions

    def counts(self, n: int) -> np.ndarray:
        out = np.zeros(n, dtype=int)
        for p in self.positions:
            out[p] += 1
        return out

    def to_fractional(self, n: int) -> "FractionalConfiguration":
        return FractionalConfiguration(self.counts(n).astype(float))


@dataclass(frozen=True)
class FractionalConfiguration:
    """Nonnegative server mass per point; total mass is the server count k."""

    mass: tuple

    def __init__(self, mass):
        if isinstance(mass, Mapping):
            n = max(mass) + 1 if mass else 0
            vec = np.zeros(n)
            for p, m in mass.items():
                vec[p] = m
        else:
            vec = np.asarray(mass, dtype=float)
        if np.any(vec < -TOL):
            raise ValidationError("negative server mass")
        object.__setattr__(self, "mass", tuple(np.maximum(vec, 0.0)))

    @property
    def total(self) -> float:
        return float(sum(self.mass))

    def __getitem__(self, point: int) -> float:
        return self.mass[point]

    def vector(self, n: int = None) -> np.ndarray:
        vec = np.asarray(self.mass)
        if n is not None and len(vec) < n:
            vec = np.concatenate([vec, np.zeros(n - len(vec))])
        return vec


def _require_same_k(x_k: int, y_k: int) -> None:
    if x_k != y_k:
        raise SizeMismatchError(f"configurations hold {x_k} vs {y_k} servers")


def config_distance(m: Metric, x: Configuration, y: Configuration) -> float:
    """Min-cost perfect matching between the two server multisets."""
    _require_same_k(x.k, y.k)
    if x.positions == y.positions:
        return 0.0
    if m.kind == "line":
        coords = np.asarray(m.coords)
        a = np.sort(coords[list(x.positions)])
        b = np.sort(coords[list(y.positions)])
        return float(np.abs(a - b).sum())
    cost = m.dist[np.ix_(x.positions, y.positions)]
    ri, ci = linear_sum_assignment(cost)
    return float(cost[ri, ci].sum())


def _line_edge_layout(m: Metric):
    """(order, edge lengths) for prefix-flow transport on a line or circle."""
    order = m.order_by_coordinate()
    coords = np.asarray(m.coords)[order]
    edges = np.diff(coords)
    if m.kind == "circle":
        wrap = m.circumference - coords[-1] + coords[0]
        edges = np.append(edges, wrap)
    return order, edges


def fractional_distance(
    m: Metric, x: FractionalConfiguration, y: FractionalConfiguration
) -> float:
    """Optimal transportation cost between the two mass vectors."""
    xv, yv = x.vector(m.n), y.vector(m.n)
    if abs(x.total - y.total) > 1e-6:
        raise ImbalanceError(f"mass totals differ: {x.total} vs {y.total}")
    diff = xv - yv
    if np.all(np.abs(diff) <= TOL):
        return 0.0
    if m.kind == "line":
        order, edges = _line_edge_layout(m)
        cum = np.cumsum(diff[order])[:-1]
        return float(np.abs(cum) @ edges)
    if m.kind == "circle":
        # Cycle transport: prefix flows are free up to a circulation constant;
        # the optimum is the weighted median of the prefix sums.
        order, edges = _line_edge_layout(m)
        cum = np.cumsum(diff[order])
        lam = _weighted_median(cum, edges)
        return float(np.abs(cum - lam) @ edges)
    return _transport_lp(m, xv, yv)


def _weighted_median(values: np.ndarray, weights: np.ndarray) -> float:
    idx = np.argsort(values, kind="stable")
    v, w = values[idx], weights[idx]
    half = w.sum() / 2.0
    c = np.cumsum(w)
    return float(v[np.searchsorted(c, half)])


def _transport_lp(m: Metric, xv: np.ndarray, yv: np.ndarray) -> float:
    from .lp import LinearProgram, solve  # deferred: lp does not import metric

    src = [i for i in range(m.n) if xv[i] > TOL]
    dst = [j for j in range(m.n) if yv[j] > TOL]
    nv = len(src) * len(dst)
    obj = np.array([m.dist[u, v] for u in src for v in dst])
    rows = []
    for a, u in enumerate(src):
        coef = np.zeros(nv)
        coef[a * len(dst) : (a + 1) * len(dst)] = 1.0
        rows.append((coef, "=", float(xv[u])))
    for b, v in enumerate(dst):
        coef = np.zeros(nv)
        coef[b :: len(dst)] = 1.0
        rows.append((coef, "=", float(yv[v])))
    lp = LinearProgram(objective=obj, constraints=rows)
    sol = solve(lp)
    if sol.status != "optimal":
        raise ImbalanceError(f"transportation problem {sol.status}")
    return sol.objective_value


def serve_distance(m: Metric, b: Configuration, r: int) -> float:
    """Distance from the closest server in b to request point r."""
    if not 0 <= r < m.n:
        raise ValidationError(f"invalid point {r}")
    return float(min(m.dist[s, r] for s in b.positions))


def fractional_serve_distance(m: Metric, b: FractionalConfiguration, r: int) -> float:
    """Min transport cost to raise the server mass on r to one unit.

    Greedy by distance is exact here: the problem has a single sink.
    """
    if not 0 <= r < m.n:
        raise ValidationError(f"invalid point {r}")
    if b.total < 1.0 - TOL:
        raise InfeasibleServeError(f"total mass {b.total} < 1")
    deficit = 1.0 - b[r]
    if deficit <= TOL:
        return 0.0
    cost = 0.0
    for p in sorted(m.points, key=lambda q: (m.dist[q, r], q)):
        if p == r or deficit <= TOL:
            continue
        pulled = min(b[p], deficit)
        cost += pulled * m.dist[p, r]
        deficit -= pulled
    return cost
