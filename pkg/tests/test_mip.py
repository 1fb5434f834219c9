import numpy as np
import pytest
from helpers import random_box, random_net, toy_box, toy_net, toy_problem

from plverify import lp
from plverify.canon import Geq, canonicalize, validate_counterexample
from plverify.interval import propagate_box
from plverify.mip import (
    ASYM,
    BOUNDS_INTERVAL,
    BOUNDS_PLANET,
    FEASIBILITY,
    INTERVAL_VARIANT,
    OPTIMIZE,
    PLANET_FEASIBLE,
    PLANET_OPT,
    PLANET_SYMFEASIBLE,
    SYM,
    EncodedMip,
    MipVariant,
    encode_mip,
    solve_mip,
)
from plverify.model import BoxDomain, Linear, MaxPool, Network, Relu, forward_eval
from plverify.oracle import oracle_min, oracle_verdict
from plverify.relax import build_planet, planet_lower_bound


def _pin(enc: EncodedMip, fixes: dict[int, int]) -> lp.LpModel:
    model = lp.LpModel(list(enc.model.lower), list(enc.model.upper), list(enc.model.rows))
    for var, val in fixes.items():
        model.lower[var] = float(val)
        model.upper[var] = float(val)
    return model


def test_encoding_delta_zero_forces_blocked():
    problem = toy_problem(-5.0)
    enc = encode_mip(problem.canonical_net, problem.domain, PLANET_OPT)
    assert len(enc.int_vars) == 2
    (_, _, d, pre, post) = enc.relu_units[0]
    model = _pin(enc, {d: 0})
    # max x subject to delta=0 must be 0; max x_hat must be <= 0
    model.set_objective({post: -1.0})
    assert -lp.solve(model).objective == pytest.approx(0.0, abs=1e-9)
    model.set_objective({pre: -1.0})
    assert -lp.solve(model).objective <= 1e-9


def test_encoding_delta_one_forces_passing():
    problem = toy_problem(-5.0)
    enc = encode_mip(problem.canonical_net, problem.domain, PLANET_OPT)
    (_, _, d, pre, post) = enc.relu_units[0]
    model = _pin(enc, {d: 1})
    # x == x_hat when delta = 1: maximise |x - x_hat| in both directions
    model.set_objective({post: 1.0, pre: -1.0})
    assert lp.solve(model).objective == pytest.approx(0.0, abs=1e-9)
    model.set_objective({post: -1.0, pre: 1.0})
    assert lp.solve(model).objective == pytest.approx(0.0, abs=1e-9)


def test_sym_variant_uses_single_m():
    net = Network(
        1,
        (Linear(np.array([[1.0]]), np.array([1.0])), Relu(), Linear(np.array([[1.0]]), np.zeros(1))),
    )
    box = BoxDomain(np.array([-3.0]), np.array([3.0]))  # pre in [-2, 4], M = 4
    enc = encode_mip(net, box, MipVariant(SYM, BOUNDS_INTERVAL, FEASIBILITY))
    (_, _, d, pre, post) = enc.relu_units[0]
    # upper bound row x <= M delta with M = max(2, 4) = 4
    rows = [r for r in enc.model.rows if len(r[0]) > d and r[0][d] != 0.0]
    ubs = [-(r[0][d]) for r in rows if r[0][post] == 1.0 and r[0][pre] == 0.0 if len(r[0]) > post]
    assert any(u == pytest.approx(4.0) for u in ubs)


def test_feasibility_encoding_carries_output_row():
    problem = toy_problem(-5.0)
    enc = encode_mip(problem.canonical_net, problem.domain, PLANET_FEASIBLE)
    assert enc.feas_row is not None
    row, rel, rhs = enc.model.rows[enc.feas_row]
    assert rel == lp.LE and rhs == 0.0
    assert row[enc.output_var] == 1.0
    opt = encode_mip(problem.canonical_net, problem.domain, PLANET_OPT)
    assert opt.feas_row is None


def test_root_relaxation_equals_planet_lp():
    rng = np.random.default_rng(42)
    for _ in range(100):
        n_in = int(rng.integers(2, 4))
        widths = [int(rng.integers(2, 4)) for _ in range(int(rng.integers(1, 3)))]
        net = random_net(rng, n_in, widths)
        box = random_box(rng, n_in)
        enc = encode_mip(net, box, MipVariant(ASYM, BOUNDS_INTERVAL, OPTIMIZE))
        root = lp.solve(enc.model)
        planet = planet_lower_bound(build_planet(net, box, tighten=False))
        assert root.objective == pytest.approx(planet, abs=1e-6)


def test_sym_root_no_tighter_than_asym():
    rng = np.random.default_rng(43)
    for _ in range(50):
        net = random_net(rng, 2, [3])
        box = random_box(rng, 2)
        asym = lp.solve(encode_mip(net, box, MipVariant(ASYM, BOUNDS_INTERVAL, OPTIMIZE)).model)
        sym = lp.solve(encode_mip(net, box, MipVariant(SYM, BOUNDS_INTERVAL, OPTIMIZE)).model)
        assert sym.objective <= asym.objective + 1e-6


def test_integral_deltas_project_to_relu_graph():
    rng = np.random.default_rng(44)
    for _ in range(40):
        net = random_net(rng, 2, [3])
        box = random_box(rng, 2)
        enc = encode_mip(net, box, MipVariant(ASYM, BOUNDS_INTERVAL, OPTIMIZE))
        if not enc.int_vars:
            continue
        fixes = {d: int(rng.integers(0, 2)) for d in enc.int_vars}
        model = _pin(enc, fixes)
        model.set_objective(rng.normal(size=model.num_vars))
        sol = lp.solve(model)
        if sol.status != lp.OPTIMAL:
            continue  # contradictory pattern on this box
        for (_, _, d, pre, post) in enc.relu_units:
            assert sol.x[post] == pytest.approx(max(sol.x[pre], 0.0), abs=1e-6)


def test_maxpool_encoding_projects_to_max():
    rng = np.random.default_rng(45)
    net = Network(
        3,
        (
            Linear(rng.normal(size=(4, 3)), rng.uniform(-0.5, 0.5, 4)),
            MaxPool(((0, 1, 2, 3),)),
            Linear(np.array([[1.0]]), np.zeros(1)),
        ),
    )
    box = BoxDomain(-np.ones(3), np.ones(3))
    enc = encode_mip(net, box, MipVariant(ASYM, BOUNDS_INTERVAL, OPTIMIZE))
    (layer, gi, deltas, y) = enc.pool_groups[0]
    checked = 0
    for pick in range(4):
        fixes = {d: 1 if k == pick else 0 for k, d in enumerate(deltas)}
        model = _pin(enc, fixes)
        model.set_objective(rng.normal(size=model.num_vars))
        sol = lp.solve(model)
        if sol.status != lp.OPTIMAL:
            continue
        pre_vars = [1 + 3 + j for j in range(4)]  # inputs then linear outputs
        vals = [sol.x[v] for v in range(3, 7)]
        assert sol.x[y] == pytest.approx(max(vals), abs=1e-6)
        checked += 1
    assert checked >= 1


def test_toy_all_variants():
    for variant in (PLANET_OPT, PLANET_FEASIBLE, INTERVAL_VARIANT, PLANET_SYMFEASIBLE):
        unsat = toy_problem(-5.0)
        enc = encode_mip(unsat.canonical_net, unsat.domain, variant)
        res = solve_mip(enc)
        assert res.status == "unsat", variant
        assert res.margin == pytest.approx(1.0, abs=1e-3)
        if variant is PLANET_OPT:
            assert res.nodes == 1  # root relaxation equals the hull bound

        sat = toy_problem(-3.0)
        enc = encode_mip(sat.canonical_net, sat.domain, variant)
        res = solve_mip(enc)
        assert res.status == "sat", variant
        assert validate_counterexample(sat, res.counterexample, 1e-6)


def test_verdicts_match_oracle_all_variants():
    rng = np.random.default_rng(46)
    variants = (PLANET_OPT, PLANET_FEASIBLE, INTERVAL_VARIANT, PLANET_SYMFEASIBLE)
    for _ in range(12):
        n_in = int(rng.integers(2, 4))
        widths = [int(rng.integers(2, 4)) for _ in range(int(rng.integers(1, 3)))]
        net = random_net(rng, n_in, widths)
        box = random_box(rng, n_in)
        base = oracle_min(net, box).min_value
        margin = float(rng.choice([-1.0, -0.3, 0.3, 1.0]))
        problem = canonicalize(net, Geq(np.array([1.0]), base - margin), box)
        want = "unsat" if margin > 0 else "sat"
        for variant in variants:
            enc = encode_mip(problem.canonical_net, problem.domain, variant)
            res = solve_mip(enc)
            assert res.status == want, (variant, margin)
            if res.status == "sat":
                assert validate_counterexample(problem, res.counterexample, 1e-6)


def test_timeout():
    problem = toy_problem(-5.0)
    enc = encode_mip(problem.canonical_net, problem.domain, PLANET_OPT)
    res = solve_mip(enc, timeout=0.0)
    assert res.status == "timeout"
