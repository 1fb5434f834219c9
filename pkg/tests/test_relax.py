import numpy as np
import pytest
from helpers import random_box, random_net, toy_box, toy_net, toy_problem

from plverify.interval import BLOCKED, PASSING, propagate_box, refine_with_fixed_phases
from plverify.model import BoxDomain, Linear, MaxPool, Network, Relu, forward_eval
from plverify.oracle import oracle_min
from plverify.relax import (
    MAYBE_SAT,
    UNSAT,
    build_planet,
    build_reluplex,
    fast_dual_bound,
    planet_lower_bound,
    reluplex_feasible,
    reluplex_lower_bound,
)


def test_toy_planet_bound_is_one():
    problem = toy_problem(-5.0)
    pm = build_planet(problem.canonical_net, problem.domain)
    assert planet_lower_bound(pm) == pytest.approx(1.0, abs=1e-8)


def test_toy_planet_bound_shifted():
    problem = toy_problem(-3.0)
    pm = build_planet(problem.canonical_net, problem.domain)
    assert planet_lower_bound(pm) == pytest.approx(-1.0, abs=1e-8)


def test_planet_exact_on_point_box():
    rng = np.random.default_rng(0)
    net = random_net(rng, 3, [4, 3])
    x = rng.uniform(-1, 1, size=3)
    box = BoxDomain(x, x)
    pm = build_planet(net, box)
    assert planet_lower_bound(pm) == pytest.approx(forward_eval(net, x)[0], abs=1e-6)


def test_planet_with_blocked_phase():
    problem = toy_problem(-5.0)
    pm = build_planet(problem.canonical_net, problem.domain, phases={(1, 0): BLOCKED}, tighten=True)
    assert not pm.infeasible
    # unit a contributes the constant 0; x_hat_a is clamped <= 0
    bound = planet_lower_bound(pm)
    assert bound >= 1.0 - 1e-8
    assert bound == pytest.approx(1.0, abs=1e-6)


def test_planet_sign_fixed_passing_unit_has_no_hull_rows():
    net = Network(
        1,
        (Linear(np.array([[1.0]]), np.array([2.0])), Relu(), Linear(np.array([[1.0]]), np.zeros(1))),
    )
    box = BoxDomain(np.array([-1.0]), np.array([1.0]))  # pre in [1, 3]
    pm = build_planet(net, box)
    assert pm.hull_units == []
    assert planet_lower_bound(pm) == pytest.approx(1.0, abs=1e-8)


def test_planet_structure_three_constraints_per_ambiguous_unit():
    problem = toy_problem(-5.0)
    pm = build_planet(problem.canonical_net, problem.domain)
    assert len(pm.hull_units) == 2
    for h in pm.hull_units:
        assert pm.model.lower[h.var_post] == 0.0  # x >= 0 as a variable bound
        row, rel, rhs = pm.model.rows[h.row_lower]  # x >= x_hat
        assert rel == ">=" and rhs == 0.0
        assert row[h.var_post] == 1.0 and row[h.var_pre] == -1.0
        row, rel, rhs = pm.model.rows[h.row_upper]
        assert rel == "<="
        # chord: value 0 at x_hat = l and u at x_hat = u
        at_l = (rhs - row[h.var_pre] * h.lb) / row[h.var_post]
        at_u = (rhs - row[h.var_pre] * h.ub) / row[h.var_post]
        assert at_l == pytest.approx(0.0, abs=1e-12)
        assert at_u == pytest.approx(h.ub, rel=1e-12)


def test_planet_infeasible_phases_marker():
    net = Network(
        1,
        (Linear(np.array([[1.0]]), np.array([2.5])), Relu(), Linear(np.array([[1.0]]), np.zeros(1))),
    )
    box = BoxDomain(np.array([-1.0]), np.array([1.0]))
    pm = build_planet(net, box, phases={(1, 0): BLOCKED})
    assert pm.infeasible
    assert planet_lower_bound(pm) == np.inf


def test_reluplex_toy_results():
    # the loose relaxation cannot prove the +5 toy (its optimum is -3)
    p5 = toy_problem(-5.0)
    assert reluplex_feasible(p5.canonical_net, p5.domain) in (MAYBE_SAT, UNSAT)
    val, _ = reluplex_lower_bound(p5.canonical_net, p5.domain)
    assert val == pytest.approx(-3.0, abs=1e-8)
    p3 = toy_problem(-3.0)
    assert reluplex_feasible(p3.canonical_net, p3.domain) == MAYBE_SAT
    contradict = {(1, 0): BLOCKED, (1, 1): BLOCKED}
    # blocking both units forces x1+x2 <= 0 and -x1-x2 <= 0, output 5 > 0
    assert reluplex_feasible(p5.canonical_net, p5.domain, contradict) == UNSAT


def test_fast_dual_toy_value():
    problem = toy_problem(-5.0)
    bounds = propagate_box(problem.canonical_net, problem.domain)
    val = fast_dual_bound(problem.canonical_net, problem.domain, bounds)
    assert val == pytest.approx(1.0, abs=1e-12)


def test_fast_dual_exact_when_all_passing():
    # shift the box so every pre-activation is positive: bound is the exact min
    net = Network(
        2,
        (
            Linear(np.array([[1.0, 0.5], [0.25, 1.0]]), np.array([5.0, 5.0])),
            Relu(),
            Linear(np.array([[1.0, -2.0]]), np.array([0.5])),
        ),
    )
    box = BoxDomain(np.zeros(2), np.ones(2))
    bounds = propagate_box(net, box)
    val = fast_dual_bound(net, box, bounds)
    got = oracle_min(net, box)
    assert val == pytest.approx(got.min_value, abs=1e-9)


def test_fast_dual_can_be_below_interval():
    # single ambiguous unit, objective +x: fast gives d*l = -2, interval gives 0
    net = Network(
        1,
        (Linear(np.array([[1.0]]), np.zeros(1)), Relu(), Linear(np.array([[1.0]]), np.zeros(1))),
    )
    box = BoxDomain(np.array([-4.0]), np.array([4.0]))
    bounds = propagate_box(net, box)
    assert fast_dual_bound(net, box, bounds) == pytest.approx(-2.0, abs=1e-12)
    assert bounds.output_lb[0] == pytest.approx(0.0)


def _bound_suite(n_instances, seed):
    rng = np.random.default_rng(seed)
    for _ in range(n_instances):
        n_in = int(rng.integers(2, 4))
        depth = int(rng.integers(1, 3))
        widths = [int(rng.integers(2, 4)) for _ in range(depth)]
        net = random_net(rng, n_in, widths)
        box = random_box(rng, n_in)
        yield net, box


def test_soundness_and_dominance_on_random_nets():
    for net, box in _bound_suite(200, 99):
        bounds = propagate_box(net, box)
        interval_lb = bounds.output_lb[0]
        pm = build_planet(net, box)
        planet = planet_lower_bound(pm)
        fast = fast_dual_bound(net, box, bounds)
        rlx, _ = reluplex_lower_bound(net, box)
        exact = oracle_min(net, box).min_value
        assert interval_lb <= exact + 1e-6
        assert planet <= exact + 1e-6
        assert fast <= exact + 1e-6
        assert rlx <= exact + 1e-6
        # dominance: interval and fast dual are both below the hull optimum
        assert interval_lb <= planet + 1e-6
        assert fast <= planet + 1e-6
        assert rlx <= planet + 1e-6


def test_sherali_adams_level0_hull_equivalence():
    rng = np.random.default_rng(123)
    for _ in range(1000):
        l = -rng.uniform(0.1, 5.0)
        u = rng.uniform(0.1, 5.0)
        xhat = rng.uniform(l, u)
        d_star = (xhat - l) / (u - l)
        assert 0.0 <= d_star <= 1.0
        val_star = min(xhat - l * (1.0 - d_star), u * d_star)
        hull = u * (xhat - l) / (u - l)
        assert abs(val_star - hull) <= 1e-9
        # d_star maximises the concave min of the two linear pieces
        for d in np.linspace(0.0, 1.0, 21):
            assert min(xhat - l * (1.0 - d), u * d) <= val_star + 1e-9


def test_tightening_never_hurts_and_helps_on_shrinking_boxes():
    rng = np.random.default_rng(17)
    strict_improvement = False
    for trial in range(6):
        net = random_net(rng, 3, [4, 4, 4])
        center = rng.uniform(-0.3, 0.3, size=3)
        for k in range(8):
            half = 1.2 * (0.7**k)
            box = BoxDomain(center - half, center + half)
            loose = planet_lower_bound(build_planet(net, box, tighten=False))
            tight = planet_lower_bound(build_planet(net, box, tighten=True))
            assert tight >= loose - 1e-6
            if tight > loose + 1e-6:
                strict_improvement = True
    assert strict_improvement


def test_maxpool_hull_bound_is_sound():
    rng = np.random.default_rng(31)
    for _ in range(30):
        net = Network(
            3,
            (
                Linear(rng.normal(size=(4, 3)), rng.uniform(-0.5, 0.5, 4)),
                MaxPool(((0, 1), (2, 3))),
                Linear(rng.normal(size=(1, 2)), rng.uniform(-0.5, 0.5, 1)),
            ),
        )
        box = random_box(rng, 3)
        pm = build_planet(net, box)
        lb = planet_lower_bound(pm)
        pts = rng.uniform(box.lb, box.ub, size=(200, 3))
        for x in pts:
            assert forward_eval(net, x)[0] >= lb - 1e-7
