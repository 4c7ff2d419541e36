"""Dense two-phase simplex for small/medium linear programs.

Everything is deterministic: pivoting starts with Dantzig's rule and falls
back permanently to Bland's rule once the objective stalls, so the solver
cannot cycle and identical inputs yield identical value vectors.

Tolerances (stated once, reused everywhere):
    PIVOT_TOL = 1e-10   minimum magnitude of a pivot element
    FEAS_TOL  = 1e-7    feasibility of the reported optimum
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import ValidationError

PIVOT_TOL = 1e-10
FEAS_TOL = 1e-7

RELATIONS = ("<=", "=", ">=")


@dataclass
class LinearProgram:
    """min objective @ x subject to constraints and per-variable bounds.

    constraints: list of (coefficient vector, relation, rhs) with relation
    in {"<=", "=", ">="}.  Default bounds are [0, inf).
    """

    objective: np.ndarray
    constraints: List[Tuple[np.ndarray, str, float]]
    bounds: Optional[List[Tuple[float, float]]] = None
    names: Optional[List[str]] = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float)
        n = len(self.objective)
        fixed = []
        for coef, rel, rhs in self.constraints:
            coef = np.asarray(coef, dtype=float)
            if coef.shape != (n,):
                raise ValidationError(
                    f"constraint has {coef.shape} coefficients, expected ({n},)"
                )
            if rel not in RELATIONS:
                raise ValidationError(f"unknown relation {rel!r}")
            if not math.isfinite(rhs):
                raise ValidationError("constraint rhs must be finite")
            fixed.append((coef, rel, float(rhs)))
        self.constraints = fixed
        if self.bounds is None:
            self.bounds = [(0.0, math.inf)] * n
        if len(self.bounds) != n:
            raise ValidationError("bounds length does not match variable count")
        for lo, hi in self.bounds:
            if lo > hi:
                raise ValidationError(f"empty bound interval [{lo}, {hi}]")
        if self.names is None:
            self.names = [f"x{i}" for i in range(n)]
        if len(self.names) != n:
            raise ValidationError("names length does not match variable count")

    @property
    def n_vars(self) -> int:
        return len(self.objective)


@dataclass
class LpSolution:
    values: np.ndarray
    objective_value: float
    status: str  # optimal | infeasible | unbounded
    duals: Optional[np.ndarray] = None  # multipliers of the equality form
    _eq_A: Optional[np.ndarray] = None
    _eq_b: Optional[np.ndarray] = None
    _eq_c: Optional[np.ndarray] = None
    _shift_cost: float = 0.0


def _to_equality_form(lp: LinearProgram):
    """Shift lower bounds to zero, turn finite upper bounds and inequalities
    into equality rows with slack columns, and make the rhs nonnegative."""
    n = lp.n_vars
    lo = np.array([b[0] for b in lp.bounds])
    rows = [(coef, rel, rhs - float(coef @ lo)) for coef, rel, rhs in lp.constraints]
    for j, (_, hi) in enumerate(lp.bounds):
        if math.isfinite(hi):
            coef = np.zeros(n)
            coef[j] = 1.0
            rows.append((coef, "<=", hi - lo[j]))
    m = len(rows)
    n_slack = sum(1 for _, rel, _ in rows if rel != "=")
    A = np.zeros((m, n + n_slack))
    b = np.zeros(m)
    slack_of_row = np.full(m, -1, dtype=int)
    s = n
    for i, (coef, rel, rhs) in enumerate(rows):
        sign = 1.0
        if rhs < 0:
            sign = -1.0
            rel = {"<=": ">=", ">=": "<=", "=": "="}[rel]
        A[i, :n] = sign * coef
        b[i] = sign * rhs
        if rel != "=":
            A[i, s] = 1.0 if rel == "<=" else -1.0
            slack_of_row[i] = s
            s += 1
    return A, b, slack_of_row, lo


def _run_simplex(T, z, basis, allowed, max_iter=200_000):
    """Pivot the tableau T (m x N+1) with reduced-cost row z (length N+1)
    until optimal/unbounded.  Dantzig first, Bland after the warm phase."""
    m, width = T.shape
    bland = False
    stall = 0
    last_obj = z[-1]
    for it in range(max_iter):
        zz = np.where(allowed, z[:-1], 0.0)
        if bland:
            neg = np.nonzero(zz < -PIVOT_TOL)[0]
            if neg.size == 0:
                return "optimal"
            j = int(neg[0])
        else:
            j = int(np.argmin(zz))
            if zz[j] >= -PIVOT_TOL:
                return "optimal"
        col = T[:, j]
        pos = col > PIVOT_TOL
        if not np.any(pos):
            return "unbounded"
        ratios = np.where(pos, T[:, -1] / np.where(pos, col, 1.0), np.inf)
        best = ratios.min()
        cand = np.nonzero(ratios <= best + PIVOT_TOL)[0]
        i = int(cand[np.argmin(basis[cand])])  # Bland tie-break on leaving var
        piv = T[i, j]
        T[i] /= piv
        delta = T[:, j].copy()
        delta[i] = 0.0
        T -= np.outer(delta, T[i])
        z -= z[j] * T[i]
        basis[i] = j
        if not bland:
            if z[-1] > last_obj - 1e-12:
                stall += 1
                if stall > 2 * (m + 10):
                    bland = True
            else:
                stall = 0
            last_obj = z[-1]
    raise RuntimeError("simplex iteration limit exceeded")


def solve(lp: LinearProgram) -> LpSolution:
    """Solve to optimality (or report infeasible/unbounded)."""
    n = lp.n_vars
    A, b, slack_of_row, lo = _to_equality_form(lp)
    m, n_total = A.shape

    # Initial basis: +1 slack columns where available, artificials elsewhere.
    art_rows = [i for i in range(m) if slack_of_row[i] < 0 or A[i, slack_of_row[i]] < 0]
    n_art = len(art_rows)
    T = np.zeros((m, n_total + n_art + 1))
    T[:, :n_total] = A
    T[:, -1] = b
    basis = np.empty(m, dtype=int)
    for i in range(m):
        basis[i] = slack_of_row[i]
    for a, i in enumerate(art_rows):
        col = n_total + a
        T[i, col] = 1.0
        basis[i] = col
    width = n_total + n_art

    if n_art:
        # Phase 1: minimize the sum of artificials.
        z = np.zeros(width + 1)
        z[n_total:width] = 1.0
        for i in art_rows:
            z -= T[i]
        allowed = np.ones(width, dtype=bool)
        status = _run_simplex(T, z, basis, allowed)
        if status != "optimal" or -z[-1] > FEAS_TOL:
            return LpSolution(np.zeros(n), math.nan, "infeasible")
        # Drive leftover artificials out of the basis.
        for i in range(m):
            if basis[i] >= n_total:
                row = T[i, :n_total]
                js = np.nonzero(np.abs(row) > PIVOT_TOL)[0]
                if js.size:
                    j = int(js[0])
                    T[i] /= T[i, j]
                    delta = T[:, j].copy()
                    delta[i] = 0.0
                    T -= np.outer(delta, T[i])
                    basis[i] = j
                else:
                    T[i, -1] = 0.0  # redundant row

    # Phase 2 with the real costs.
    c_full = np.zeros(width)
    c_full[:n] = lp.objective
    z = np.zeros(width + 1)
    z[:width] = c_full
    for i in range(m):
        if basis[i] < n_total:
            z -= c_full[basis[i]] * T[i]
    allowed = np.ones(width, dtype=bool)
    allowed[n_total:] = False  # artificials may not re-enter
    status = _run_simplex(T, z, basis, allowed)
    if status == "unbounded":
        return LpSolution(np.zeros(n), -math.inf, "unbounded")

    x_eq = np.zeros(n_total)
    for i in range(m):
        if basis[i] < n_total:
            x_eq[basis[i]] = T[i, -1]
    values = x_eq[:n] + lo
    shift_cost = float(lp.objective @ lo)
    obj = float(lp.objective @ x_eq[:n]) + shift_cost

    duals = _basis_duals(A, b, lp.objective, basis, n_total, n)
    return LpSolution(
        values=values,
        objective_value=obj,
        status="optimal",
        duals=duals,
        _eq_A=A,
        _eq_b=b,
        _eq_c=np.concatenate([lp.objective, np.zeros(n_total - n)]),
        _shift_cost=shift_cost,
    )


def _basis_duals(A, b, c, basis, n_total, n) -> Optional[np.ndarray]:
    m = A.shape[0]
    cols = [j if j < n_total else -1 for j in basis]
    B = np.zeros((m, m))
    cb = np.zeros(m)
    for i, j in enumerate(cols):
        if j >= 0:
            B[:, i] = A[:, j]
            cb[i] = c[j] if j < n else 0.0
        else:
            B[i, i] = 1.0  # leftover artificial on a redundant row
    try:
        return np.linalg.solve(B.T, cb)
    except np.linalg.LinAlgError:
        return None


@dataclass
class CertificateReport:
    max_violation: float
    duality_gap: Optional[float]
    passed: bool
    detail: str = ""


def lp_dual_bound(lp: LinearProgram, sol: LpSolution) -> CertificateReport:
    """Independent audit of a reported optimum: feasibility of the value
    vector plus, when simplex multipliers are available, a duality gap."""
    x = np.asarray(sol.values, dtype=float)
    viol = 0.0
    for coef, rel, rhs in lp.constraints:
        lhs = float(coef @ x)
        if rel == "<=":
            viol = max(viol, lhs - rhs)
        elif rel == ">=":
            viol = max(viol, rhs - lhs)
        else:
            viol = max(viol, abs(lhs - rhs))
    for j, (lo, hi) in enumerate(lp.bounds):
        viol = max(viol, lo - x[j])
        if math.isfinite(hi):
            viol = max(viol, x[j] - hi)

    gap = None
    if sol.duals is not None and sol._eq_b is not None:
        dual_obj = float(sol.duals @ sol._eq_b) + sol._shift_cost
        scale = max(1.0, abs(sol.objective_value))
        gap = abs(sol.objective_value - dual_obj) / scale
    passed = viol <= FEAS_TOL and (gap is None or gap <= 1e-6)
    return CertificateReport(
        max_violation=float(viol),
        duality_gap=gap,
        passed=passed,
        detail="" if passed else f"violation={viol:.3g} gap={gap}",
    )


def dump_lp_text(lp: LinearProgram) -> str:
    """CPLEX-style LP text dump, for cross-checking with external solvers."""
    out = ["Minimize", " obj: " + _linear_expr(lp.objective, lp.names)]
    out.append("Subject To")
    for i, (coef, rel, rhs) in enumerate(lp.constraints):
        op = {"<=": "<=", ">=": ">=", "=": "="}[rel]
        out.append(f" c{i}: {_linear_expr(coef, lp.names)} {op} {rhs:.12g}")
    out.append("Bounds")
    for j, (lo, hi) in enumerate(lp.bounds):
        hi_s = "+inf" if math.isinf(hi) else f"{hi:.12g}"
        out.append(f" {lo:.12g} <= {lp.names[j]} <= {hi_s}")
    out.append("End")
    return "\n".join(out) + "\n"


def _linear_expr(coef: np.ndarray, names: Sequence[str]) -> str:
    terms = [
        f"{'+' if c >= 0 else '-'} {abs(c):.12g} {names[j]}"
        for j, c in enumerate(coef)
        if c != 0.0
    ]
    return " ".join(terms) if terms else "0"
