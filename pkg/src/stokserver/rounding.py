"""Exact rounding of fractional configurations on line and circle metrics.

A fractional configuration is turned into k servers by sweeping the line
and dropping a server every time one more unit of cumulative mass has been
gathered, starting from a random offset in [0, 1).  The same offset is
shared by every configuration of a plan, which preserves pairwise movement
in expectation exactly.  Because the rounded plan's expected cost is
piecewise constant in the offset, the offset can be derandomized by
evaluating every breakpoint.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Sequence, Tuple

import numpy as np

from .errors import ValidationError
from .metric import Configuration, FractionalConfiguration, Metric
from .planner import DistributionSequence, FractionalPlan, IntegralPlan, expected_plan_cost

X_TOL = 1e-9


@dataclass(frozen=True)
class RoundingOffset:
    r: float

    def __post_init__(self):
        if not 0.0 <= self.r < 1.0:
            raise ValidationError(f"offset {self.r} outside [0, 1)")


def _sweep_order(m: Metric, a: FractionalConfiguration):
    """Points sorted by coordinate (circle cut at coordinate 0) with their
    cumulative masses.  Ties in co-located mass are broken by point index."""
    order = m.order_by_coordinate()
    masses = a.vector(m.n)[order]
    return order, np.cumsum(masses)


def mass_function(m: Metric, a: FractionalConfiguration, x: float) -> int:
    """First sweep position where cumulative server mass reaches x.

    Returns the point v_j with cum_{j-1} < x <= cum_j; left-continuous in x
    at the breakpoints.
    """
    k = a.total
    if x <= 0.0 or x > k + X_TOL:
        raise ValidationError(f"mass argument {x} outside (0, {k}]")
    order, cum = _sweep_order(m, a)
    j = int(np.searchsorted(cum, min(x, cum[-1]), side="left"))
    return int(order[j])


def round_line(
    m: Metric, a: FractionalConfiguration, offset: RoundingOffset, k: int = None
) -> Configuration:
    """Place k servers at f_A(r), f_A(r+1), ..., f_A(r+k-1).

    An offset of exactly 0 wraps to the top of the sweep (x = k), matching
    the left-continuity of the mass function: the rounded configuration as
    a function of the offset is constant on each interval between
    consecutive cumulative-mass breakpoints, closed on the right.
    """
    if k is None:
        k = int(round(a.total))
    xs = offset.r + np.arange(k, dtype=float)
    if offset.r == 0.0:
        xs[0] = float(k)
    return Configuration(mass_function(m, a, x) for x in xs)


def round_plan_line(plan: FractionalPlan, m: Metric, offset: RoundingOffset) -> IntegralPlan:
    """Round every configuration of the plan with the same shared offset."""
    return IntegralPlan([round_line(m, a, offset) for a in plan.configs])


def offset_breakpoints(configs: Sequence[FractionalConfiguration], m: Metric) -> List[float]:
    """Fractional parts of all cumulative masses across the configurations.

    The rounded plan is constant in the offset on each interval between
    consecutive breakpoints (closed on the right, with 0 standing for the
    wrap-around piece), so these values index every distinct rounding.
    """
    pts = {0.0}
    for a in configs:
        _, cum = _sweep_order(m, a)
        for c in cum:
            frac = c - np.floor(c)
            frac = round(float(frac), 12)
            if frac >= 1.0:
                frac = 0.0
            pts.add(frac)
    return sorted(pts)


def average_over_offsets(
    breakpoints: Sequence[float], value_at: Callable[[RoundingOffset], float]
) -> float:
    """Exact integral over the offset in [0, 1) of a piecewise-constant
    function evaluated at the breakpoint representatives."""
    bps = list(breakpoints) + [1.0]
    total = 0.0
    # Midpoint representatives avoid landing on a boundary through float
    # rounding; each open interval carries one constant value.
    for left, right in zip(bps, bps[1:]):
        if right > left:
            total += (right - left) * value_at(RoundingOffset((left + right) / 2.0))
    return total


def derandomize_offset(
    m: Metric, plan: FractionalPlan, d: DistributionSequence
) -> RoundingOffset:
    """Breakpoint offset minimizing the rounded plan's exact expected cost.

    The minimum over breakpoints is at most the uniform-offset average,
    which in turn is at most the fractional plan cost, so the derandomized
    rounded plan never costs more than the LP value.
    """
    bps = offset_breakpoints(plan.configs, m)
    mids = [(a + b) / 2.0 for a, b in zip(bps, bps[1:] + [1.0]) if b > a]
    best_r, best_cost = None, np.inf
    for r in bps + mids:
        rounded = round_plan_line(plan, m, RoundingOffset(r))
        cost = expected_plan_cost(m, rounded, d)
        if cost < best_cost - 1e-12:
            best_r, best_cost = r, cost
    return RoundingOffset(best_r)
