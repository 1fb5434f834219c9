"""Interval-arithmetic propagation of per-layer activation bounds.

For an affine layer x_hat = W x + b with incoming bounds [l, u], the output
bounds come from the positive/negative split of the weights,

    lhat[j] = sum_k ( W+[j,k] l[k] + W-[j,k] u[k] ) + b[j]
    uhat[j] = sum_k ( W+[j,k] u[k] + W-[j,k] l[k] ) + b[j]

with a+ = max(a, 0) and a- = min(a, 0). For the first layer the raw box
bounds are used, signs included. ReLU transfer clamps both bounds at zero;
maxpool transfer takes the per-group max of both bounds.

All arithmetic is plain 64-bit float; directed rounding is out of scope and
soundness tests carry a fixed 1e-9 slack instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import BoxDomain, Linear, MaxPool, Network, Relu

# Phase values for a fixed ReLU: passing means x = x_hat, blocked means x = 0.
PASSING = True
BLOCKED = False

# Maps (relu layer index, unit index) -> PASSING | BLOCKED.
PhaseMap = dict[tuple[int, int], bool]


@dataclass
class LayerBounds:
    """Pre- and post-activation interval bounds for every layer.

    ``pre`` is the layer's view of its input values right before the layer
    applies (for ReLU layers these are the l_i, u_i that all relaxations
    consume); ``post`` bounds the layer's output. For a Linear layer pre and
    post coincide with the affine output bounds.
    """

    input_lb: np.ndarray
    input_ub: np.ndarray
    pre_lb: list[np.ndarray]
    pre_ub: list[np.ndarray]
    post_lb: list[np.ndarray]
    post_ub: list[np.ndarray]

    @property
    def output_lb(self) -> np.ndarray:
        return self.post_lb[-1]

    @property
    def output_ub(self) -> np.ndarray:
        return self.post_ub[-1]

    def copy(self) -> "LayerBounds":
        return LayerBounds(
            self.input_lb.copy(),
            self.input_ub.copy(),
            [v.copy() for v in self.pre_lb],
            [v.copy() for v in self.pre_ub],
            [v.copy() for v in self.post_lb],
            [v.copy() for v in self.post_ub],
        )


def _linear_transfer(layer: Linear, lb: np.ndarray, ub: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    wp = np.maximum(layer.weight, 0.0)
    wn = np.minimum(layer.weight, 0.0)
    lo = wp @ lb + wn @ ub + layer.bias
    hi = wp @ ub + wn @ lb + layer.bias
    return lo, hi


def _propagate(net: Network, box: BoxDomain, phases: PhaseMap | None) -> LayerBounds | None:
    """Shared worker; returns None when a fixed phase contradicts the bounds."""
    cur_lb, cur_ub = box.lb.copy(), box.ub.copy()
    pre_lb: list[np.ndarray] = []
    pre_ub: list[np.ndarray] = []
    post_lb: list[np.ndarray] = []
    post_ub: list[np.ndarray] = []

    for i, layer in enumerate(net.layers):
        if isinstance(layer, Linear):
            lo, hi = _linear_transfer(layer, cur_lb, cur_ub)
            p_lo, p_hi = lo.copy(), hi.copy()
        elif isinstance(layer, Relu):
            lo, hi = cur_lb.copy(), cur_ub.copy()
            if phases:
                for j in range(len(lo)):
                    phase = phases.get((i, j))
                    if phase is None:
                        continue
                    if phase == BLOCKED:
                        if lo[j] > 0.0:
                            return None
                        hi[j] = min(hi[j], 0.0)
                    else:
                        if hi[j] < 0.0:
                            return None
                        lo[j] = max(lo[j], 0.0)
            p_lo = np.maximum(lo, 0.0)
            p_hi = np.maximum(hi, 0.0)
            if phases:
                for j in range(len(lo)):
                    if phases.get((i, j)) == BLOCKED:
                        p_lo[j] = 0.0
                        p_hi[j] = 0.0
        else:
            lo, hi = cur_lb.copy(), cur_ub.copy()
            p_lo = np.array([np.max(lo[list(g)]) for g in layer.groups])
            p_hi = np.array([np.max(hi[list(g)]) for g in layer.groups])
        pre_lb.append(lo)
        pre_ub.append(hi)
        post_lb.append(p_lo)
        post_ub.append(p_hi)
        cur_lb, cur_ub = p_lo, p_hi

    return LayerBounds(box.lb.copy(), box.ub.copy(), pre_lb, pre_ub, post_lb, post_ub)


def propagate_box(net: Network, box: BoxDomain) -> LayerBounds:
    """Sound interval bounds for every pre/post activation over the box."""
    out = _propagate(net, box, None)
    assert out is not None
    return out


def refine_with_fixed_phases(net: Network, bounds: LayerBounds, phases: PhaseMap) -> LayerBounds | None:
    """Re-propagate with some ReLU phases pinned.

    A unit fixed BLOCKED gets pre_ub clamped to 0 and post = [0, 0]; fixed
    PASSING gets pre_lb clamped to 0 and post = pre. Everything downstream is
    re-propagated from the clamped bounds. Returns None when a fixed phase
    contradicts the interval bounds (pre_lb > 0 blocked, or pre_ub < 0
    passing): the subdomain is infeasible.
    """
    box = BoxDomain(bounds.input_lb, bounds.input_ub)
    if not phases:
        return bounds.copy()
    return _propagate(net, box, phases)


def ambiguous_units(net: Network, bounds: LayerBounds) -> list[tuple[int, int]]:
    """(layer, unit) pairs of ReLU units whose pre-activation straddles zero."""
    out = []
    for i, layer in enumerate(net.layers):
        if isinstance(layer, Relu):
            lo, hi = bounds.pre_lb[i], bounds.pre_ub[i]
            for j in range(len(lo)):
                if lo[j] < 0.0 < hi[j]:
                    out.append((i, j))
    return out
