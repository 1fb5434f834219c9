"""Dense linear programming for the relaxations and MIP node subproblems.

The solver is a bounded-variable primal simplex over models whose variables
all carry finite box bounds (every LP in this artifact is box-bounded, so the
objective can never be unbounded). Infeasibility is decided by a Phase-1 pass
with one artificial variable per row; Phase 2 then minimises the real
objective from the feasible basis. Bland's rule takes over after 50
consecutive degenerate pivots to rule out cycling, and the basis inverse is
refactorised periodically to contain drift.

Tolerances (fixed for the whole artifact): feasibility 1e-8, optimality
1e-7, pivot threshold 1e-9, iteration cap 50000.

``solve_reference`` is the independent test oracle: exhaustive enumeration of
basic solutions (vertices) for models with at most 8 variables.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"

LE = "<="
EQ = "="
GE = ">="

TOL_FEAS = 1e-8
TOL_OPT = 1e-7
PIVOT_TOL = 1e-9
MAX_ITER = 50_000
_DEGEN_TOL = 1e-12
_BLAND_TRIGGER = 50
_REFACTOR_EVERY = 64


class NumericalFailure(Exception):
    """Simplex stalled or lost feasibility beyond the iteration cap."""


class TooLarge(Exception):
    """Model too large for the enumeration reference solver."""


@dataclass
class LpModel:
    """Minimisation LP: variables with finite bounds, dense rows."""

    lower: list[float] = field(default_factory=list)
    upper: list[float] = field(default_factory=list)
    rows: list[tuple[np.ndarray, str, float]] = field(default_factory=list)
    objective: np.ndarray | None = None

    @property
    def num_vars(self) -> int:
        return len(self.lower)

    def add_var(self, lb: float, ub: float) -> int:
        if not (np.isfinite(lb) and np.isfinite(ub)):
            raise ValueError("variable bounds must be finite")
        if lb > ub:
            raise ValueError("variable lb > ub")
        self.lower.append(float(lb))
        self.upper.append(float(ub))
        return len(self.lower) - 1

    def add_row(self, coefs, rel: str, rhs: float) -> int:
        if rel not in (LE, EQ, GE):
            raise ValueError(f"unknown relation {rel!r}")
        if isinstance(coefs, dict):
            row = np.zeros(self.num_vars)
            for idx, val in coefs.items():
                row[idx] = val
        else:
            row = np.asarray(coefs, dtype=np.float64)
        self.rows.append((row, rel, float(rhs)))
        return len(self.rows) - 1

    def set_objective(self, coefs) -> None:
        if isinstance(coefs, dict):
            c = np.zeros(self.num_vars)
            for idx, val in coefs.items():
                c[idx] = val
        else:
            c = np.asarray(coefs, dtype=np.float64)
        self.objective = c

    def with_objective(self, coefs) -> "LpModel":
        """Shallow copy sharing rows, with a different objective."""
        clone = LpModel(list(self.lower), list(self.upper), list(self.rows))
        clone.set_objective(coefs)
        return clone

    def copy(self) -> "LpModel":
        clone = LpModel(list(self.lower), list(self.upper), list(self.rows))
        if self.objective is not None:
            clone.objective = self.objective.copy()
        return clone


@dataclass
class LpSolution:
    status: str
    objective: float
    x: np.ndarray | None


def _padded_objective(model: LpModel) -> np.ndarray:
    c = np.zeros(model.num_vars)
    if model.objective is not None:
        c[: len(model.objective)] = model.objective
    return c


def solve(model: LpModel) -> LpSolution:
    """Bounded-variable two-phase primal simplex."""
    n = model.num_vars
    lo = np.asarray(model.lower, dtype=np.float64)
    hi = np.asarray(model.upper, dtype=np.float64)
    if n == 0:
        return LpSolution(OPTIMAL, 0.0, np.zeros(0))
    if np.any(lo > hi + 1e-12):
        return LpSolution(INFEASIBLE, np.inf, None)
    hi = np.maximum(hi, lo)  # collapse sub-tolerance inversions
    c_obj = _padded_objective(model)

    m = len(model.rows)
    arow = np.zeros((m, n))
    rhs = np.zeros(m)
    rels = []
    for i, (row, rel, r) in enumerate(model.rows):
        if len(row) > n:
            raise ValueError("row references unknown variables")
        arow[i, : len(row)] = row
        rhs[i] = r
        rels.append(rel)

    # Standard form: one slack per row (fixed at 0 for equalities), finite
    # bounds derived from the row range over the variable boxes.
    wp = np.maximum(arow, 0.0)
    wn = np.minimum(arow, 0.0)
    row_min = wp @ lo + wn @ hi
    row_max = wp @ hi + wn @ lo
    slack_lo = np.zeros(m)
    slack_hi = np.zeros(m)
    for i, rel in enumerate(rels):
        if rel == LE:
            slack_lo[i], slack_hi[i] = 0.0, max(0.0, rhs[i] - row_min[i])
        elif rel == GE:
            slack_lo[i], slack_hi[i] = min(0.0, rhs[i] - row_max[i]), 0.0

    total = n + m + m  # structural | slacks | artificials
    a_full = np.zeros((m, total))
    a_full[:, :n] = arow
    a_full[:, n : n + m] = np.eye(m)

    lo_full = np.concatenate([lo, slack_lo, np.zeros(m)])
    hi_full = np.concatenate([hi, slack_hi, np.zeros(m)])

    x = np.concatenate([lo, np.zeros(m), np.zeros(m)])
    at_upper = np.zeros(total, dtype=bool)
    # Slacks start at whichever of their bounds is nearer the row residual.
    desired = rhs - arow @ lo
    for i in range(m):
        sl = n + i
        if abs(desired[i] - slack_hi[i]) < abs(desired[i] - slack_lo[i]):
            x[sl] = slack_hi[i]
            at_upper[sl] = True
        else:
            x[sl] = slack_lo[i]
    resid = rhs - arow @ lo - x[n : n + m]
    sigma = np.where(resid >= 0.0, 1.0, -1.0)
    a_full[:, n + m :] = np.diag(sigma)
    hi_full[n + m :] = np.abs(resid)
    x[n + m :] = np.abs(resid)

    basis = np.arange(n + m, total)
    in_basis = np.zeros(total, dtype=bool)
    in_basis[basis] = True
    binv = np.diag(sigma).copy()

    state = _SimplexState(a_full, rhs, lo_full, hi_full, x, at_upper, basis, in_basis, binv)

    c_phase1 = np.zeros(total)
    c_phase1[n + m :] = 1.0
    iters_used = _run_simplex(state, c_phase1, MAX_ITER)
    if c_phase1 @ state.x > TOL_FEAS:
        return LpSolution(INFEASIBLE, np.inf, None)

    # Pin artificials at zero for phase 2; basic ones stay at 0 harmlessly.
    state.hi[n + m :] = 0.0
    state.x[n + m :] = np.minimum(state.x[n + m :], 0.0)
    c_phase2 = np.concatenate([c_obj, np.zeros(2 * m)])
    _run_simplex(state, c_phase2, MAX_ITER - iters_used)

    state.refactor()
    xs = state.x[:n]
    if m:
        residual = np.max(np.abs(arow @ xs + state.x[n : n + m] - rhs))
        if residual > 1e-6:
            raise NumericalFailure(f"final residual {residual:.2e}")
    return LpSolution(OPTIMAL, float(c_obj @ xs), xs.copy())


class _SimplexState:
    def __init__(self, a, rhs, lo, hi, x, at_upper, basis, in_basis, binv):
        self.a = a
        self.rhs = rhs
        self.lo = lo
        self.hi = hi
        self.x = x
        self.at_upper = at_upper
        self.basis = basis
        self.in_basis = in_basis
        self.binv = binv

    def refactor(self) -> None:
        m = len(self.basis)
        if m == 0:
            return
        try:
            self.binv = np.linalg.inv(self.a[:, self.basis])
        except np.linalg.LinAlgError as exc:  # pragma: no cover
            raise NumericalFailure("singular basis") from exc
        xn = self.x.copy()
        xn[self.basis] = 0.0
        self.x[self.basis] = self.binv @ (self.rhs - self.a @ xn)


def _run_simplex(state: _SimplexState, c: np.ndarray, max_iter: int) -> int:
    a, lo, hi = state.a, state.lo, state.hi
    m = len(state.basis)
    movable = hi - lo > 0.0
    degen_run = 0
    bland = False

    for it in range(max_iter):
        if m and it > 0 and it % _REFACTOR_EVERY == 0:
            state.refactor()
        x, basis, in_basis, at_upper, binv = state.x, state.basis, state.in_basis, state.at_upper, state.binv

        y = c[basis] @ binv if m else np.zeros(0)
        d = c - (y @ a if m else 0.0)
        lower_mask = ~in_basis & ~at_upper & movable & (d < -TOL_OPT)
        upper_mask = ~in_basis & at_upper & movable & (d > TOL_OPT)
        eligible = lower_mask | upper_mask
        if not np.any(eligible):
            return it
        if bland:
            e = int(np.argmax(eligible))  # first eligible index
        else:
            score = np.where(eligible, np.abs(d), -1.0)
            e = int(np.argmax(score))
        sgn = -1.0 if at_upper[e] else 1.0

        w = binv @ a[:, e] if m else np.zeros(0)
        delta = -sgn * w  # movement of basics per unit step
        t_flip = hi[e] - lo[e]

        t_leave = np.inf
        leave = -1
        if m:
            with np.errstate(divide="ignore", invalid="ignore"):
                up = np.where(delta > PIVOT_TOL, (hi[basis] - x[basis]) / delta, np.inf)
                dn = np.where(delta < -PIVOT_TOL, (x[basis] - lo[basis]) / (-delta), np.inf)
            ratios = np.maximum(np.minimum(up, dn), 0.0)
            t_leave = float(np.min(ratios)) if len(ratios) else np.inf
            if np.isfinite(t_leave):
                near = np.flatnonzero(ratios <= t_leave + 1e-12)
                if bland:
                    leave = int(near[np.argmin(basis[near])])
                else:
                    leave = int(near[np.argmax(np.abs(w[near]))])

        t = min(t_flip, t_leave)
        if not np.isfinite(t):
            raise NumericalFailure("unbounded direction in box-bounded model")

        if t <= _DEGEN_TOL:
            degen_run += 1
            if degen_run >= _BLAND_TRIGGER:
                bland = True
        else:
            degen_run = 0

        x[e] += sgn * t
        if m:
            x[basis] += delta * t
        if t_flip <= t_leave:
            at_upper[e] = not at_upper[e]
            x[e] = hi[e] if at_upper[e] else lo[e]
        else:
            lv = int(basis[leave])
            hit_upper = delta[leave] > 0
            x[lv] = hi[lv] if hit_upper else lo[lv]
            at_upper[lv] = hit_upper
            in_basis[lv] = False
            basis[leave] = e
            in_basis[e] = True
            piv = w[leave]
            if abs(piv) < PIVOT_TOL:
                raise NumericalFailure("pivot below threshold")
            row = binv[leave] / piv
            binv -= np.outer(w, row)
            binv[leave] = row
    raise NumericalFailure(f"iteration cap {MAX_ITER} exceeded")


def solve_reference(model: LpModel) -> LpSolution:
    """Exhaustive vertex enumeration; the independent oracle for ``solve``.

    Every vertex of a box-bounded polyhedron is the solution of n active
    constraints, so enumerating all n-subsets of the (normalised) constraint
    rows and filtering by feasibility finds the optimum. Only usable for
    small models.
    """
    n = model.num_vars
    if n > 8:
        raise TooLarge(f"{n} variables exceeds the reference cap of 8")
    c = _padded_objective(model)
    lo = np.asarray(model.lower)
    hi = np.asarray(model.upper)
    if np.any(lo > hi + 1e-12):
        return LpSolution(INFEASIBLE, np.inf, None)
    hi = np.maximum(hi, lo)

    g_rows: list[np.ndarray] = []
    h_vals: list[float] = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        g_rows.append(e.copy())
        h_vals.append(hi[j])
        g_rows.append(-e)
        h_vals.append(-lo[j])
    for row, rel, rhs in model.rows:
        a = np.zeros(n)
        a[: len(row)] = row
        if rel in (LE, EQ):
            g_rows.append(a)
            h_vals.append(rhs)
        if rel in (GE, EQ):
            g_rows.append(-a)
            h_vals.append(-rhs)

    g = np.array(g_rows)
    h = np.array(h_vals)
    norms = np.linalg.norm(g, axis=1)
    zero_rows = norms < 1e-14
    if np.any(h[zero_rows] < -TOL_FEAS):
        return LpSolution(INFEASIBLE, np.inf, None)
    g, h, norms = g[~zero_rows], h[~zero_rows], norms[~zero_rows]
    g = g / norms[:, None]
    h = h / norms

    combos = np.array(list(itertools.combinations(range(len(g)), n)))
    mats = g[combos]
    rhss = h[combos]
    dets = np.abs(np.linalg.det(mats))
    ok = dets > 1e-8
    if not np.any(ok):
        return LpSolution(INFEASIBLE, np.inf, None)
    pts = np.linalg.solve(mats[ok], rhss[ok][..., None])[..., 0]
    feas = np.all(g @ pts.T <= h[:, None] + 1e-7, axis=0)
    if not np.any(feas):
        return LpSolution(INFEASIBLE, np.inf, None)
    vals = pts[feas] @ c
    best = int(np.argmin(vals))
    return LpSolution(OPTIMAL, float(vals[best]), pts[feas][best])
