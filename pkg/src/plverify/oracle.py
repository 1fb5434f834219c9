"""Ground-truth global minimiser by exhaustive activation-pattern enumeration.

Fixing a total blocked/passing assignment to every ReLU collapses the
network to an affine function of the input, valid on the polyhedron where
the assignment's sign constraints hold. Enumerating all assignments and
solving one small input-space LP per feasible pattern therefore yields the
exact global minimum (up to LP tolerance). This is the test oracle every
other method is judged against; it only scales to a handful of units.

Units whose interval bounds already fix their sign are not enumerated, and
subtrees whose partial sign constraints are interval-infeasible are pruned,
so the 2^R blow-up only counts genuinely ambiguous units.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import lp
from .canon import VerificationProblem, maxpool_to_relu, validate_counterexample
from .interval import propagate_box
from .model import BoxDomain, Linear, MaxPool, Network, Relu, forward_eval


class CapExceeded(Exception):
    """More ambiguous ReLU units than the enumeration cap allows."""


@dataclass
class OracleResult:
    min_value: float
    argmin: np.ndarray
    feasible_patterns: int


def oracle_min(net: Network, box: BoxDomain, relu_cap: int = 16) -> OracleResult:
    """Exact minimum of the scalar output over the box.

    The pattern LP is posed in input space: with all phases fixed the network
    is an affine map, and each unit contributes one halfspace (blocked:
    pre <= 0, passing: pre >= 0). Infeasible patterns are skipped silently;
    their count is reported via ``feasible_patterns``.
    """
    if any(isinstance(l, MaxPool) for l in net.layers):
        raise ValueError("oracle requires a ReLU-only network (lower MaxPools first)")
    if net.output_size != 1:
        raise ValueError("oracle requires a scalar-output network")
    bounds = propagate_box(net, box)
    ambiguous = 0
    for i, layer in enumerate(net.layers):
        if isinstance(layer, Relu):
            lo, hi = bounds.pre_lb[i], bounds.pre_ub[i]
            ambiguous += int(np.sum((lo < 0.0) & (hi > 0.0)))
    if ambiguous > relu_cap:
        raise CapExceeded(f"{ambiguous} ambiguous units exceed cap {relu_cap}")

    state = _Search(net, box, bounds)
    state.descend(0, np.eye(net.input_size), np.zeros(net.input_size), [], [])
    if state.best_x is None:
        raise RuntimeError("no feasible activation pattern; box should be non-empty")
    return OracleResult(state.best_val, state.best_x, state.feasible)


class _Search:
    def __init__(self, net: Network, box: BoxDomain, bounds):
        self.net = net
        self.box = box
        self.bounds = bounds
        self.best_val = np.inf
        self.best_x: np.ndarray | None = None
        self.feasible = 0

    def _row_range(self, row: np.ndarray, const: float) -> tuple[float, float]:
        pos = np.maximum(row, 0.0)
        neg = np.minimum(row, 0.0)
        return (
            float(pos @ self.box.lb + neg @ self.box.ub + const),
            float(pos @ self.box.ub + neg @ self.box.lb + const),
        )

    def descend(self, idx: int, mat: np.ndarray, const: np.ndarray, rows: list, rhs: list) -> None:
        if idx == len(self.net.layers):
            self._solve_leaf(mat, const, rows, rhs)
            return
        layer = self.net.layers[idx]
        if isinstance(layer, Linear):
            self.descend(idx + 1, layer.weight @ mat, layer.weight @ const + layer.bias, rows, rhs)
            return

        lo, hi = self.bounds.pre_lb[idx], self.bounds.pre_ub[idx]
        free = [j for j in range(len(lo)) if lo[j] < 0.0 < hi[j]]
        for mask in range(1 << len(free)):
            chosen = {free[k]: bool(mask >> k & 1) for k in range(len(free))}
            new_rows = list(rows)
            new_rhs = list(rhs)
            new_mat = mat.copy()
            new_const = const.copy()
            ok = True
            for j in range(len(lo)):
                forced = j not in chosen
                is_passing = (lo[j] >= 0.0) if forced else chosen[j]
                r_lo, r_hi = self._row_range(mat[j], const[j])
                if is_passing:
                    if r_hi < 0.0:
                        ok = False
                        break
                    if not forced:  # pre >= 0, written as -pre <= const
                        new_rows.append(-mat[j])
                        new_rhs.append(const[j])
                else:
                    if r_lo > 0.0:
                        ok = False
                        break
                    if not forced:
                        new_rows.append(mat[j].copy())
                        new_rhs.append(-const[j])
                    new_mat[j] = 0.0
                    new_const[j] = 0.0
            if ok:
                self.descend(idx + 1, new_mat, new_const, new_rows, new_rhs)

    def _solve_leaf(self, mat: np.ndarray, const: np.ndarray, rows: list, rhs: list) -> None:
        model = lp.LpModel()
        for j in range(self.box.size):
            model.add_var(self.box.lb[j], self.box.ub[j])
        for row, b in zip(rows, rhs):
            model.add_row(row, lp.LE, float(b))
        model.set_objective(mat[0])
        sol = lp.solve(model)
        if sol.status != lp.OPTIMAL:
            return
        self.feasible += 1
        val = sol.objective + float(const[0])
        if val < self.best_val:
            self.best_val = val
            self.best_x = sol.x


def oracle_verdict(problem: VerificationProblem, relu_cap: int = 16) -> tuple[str, float | np.ndarray]:
    """("sat", counterexample) when the canonical minimum is <= 0, else
    ("unsat", margin). MaxPools are lowered before enumeration."""
    net = problem.canonical_net
    if any(isinstance(l, MaxPool) for l in net.layers):
        net = maxpool_to_relu(net, propagate_box(net, problem.domain))
    res = oracle_min(net, problem.domain, relu_cap)
    if res.min_value <= 0.0:
        if not validate_counterexample(problem, res.argmin, 1e-6):
            raise RuntimeError("oracle argmin failed counterexample validation")
        return "sat", res.argmin
    return "unsat", res.min_value
