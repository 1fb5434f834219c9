import json

import numpy as np
import pytest

from plverify.gensuite import GenSpec, generate, standard_suite, write_suite
from plverify.model import MaxPool
from plverify.oracle import oracle_verdict


def test_margin_is_imposed_exactly():
    inst = generate(0, GenSpec(2, 2, 3, margin=1.0))
    assert inst.expected == "unsat"
    status, margin = oracle_verdict(inst.problem())
    assert status == "unsat"
    assert margin == pytest.approx(1.0, abs=1e-6)


def test_negative_margin_gives_sat():
    inst = generate(0, GenSpec(2, 2, 3, margin=-1.0))
    assert inst.expected == "sat"
    status, point = oracle_verdict(inst.problem())
    assert status == "sat"


def test_zero_margin_rejected():
    with pytest.raises(ValueError):
        generate(0, GenSpec(2, 2, 3, margin=0.0))
    with pytest.raises(ValueError):
        generate(0, GenSpec(2, 2, 3, margin=5e-4))


def test_maxpool_instances():
    inst = generate(7, GenSpec(3, 2, 2, margin=0.5, maxpool=True))
    assert any(isinstance(l, MaxPool) for l in inst.net.layers)
    status, margin = oracle_verdict(inst.problem())
    assert status == "unsat"
    assert margin == pytest.approx(0.5, abs=1e-6)


def test_generation_is_deterministic():
    a = generate(3, GenSpec(3, 2, 4, margin=0.1))
    b = generate(3, GenSpec(3, 2, 4, margin=0.1))
    for la, lb in zip(a.net.layers, b.net.layers):
        if hasattr(la, "weight"):
            assert np.array_equal(la.weight, lb.weight)
            assert np.array_equal(la.bias, lb.bias)
    assert a.prop.b == b.prop.b


def test_standard_suite_composition():
    specs = standard_suite(60)
    assert len(specs) == 60
    margins = {s.margin for s in specs}
    assert margins == {0.1, -0.1, 1.0, -1.0, 10.0, -10.0}
    assert all(2 <= s.inputs <= 4 for s in specs)
    assert all(2 <= s.depth <= 3 for s in specs)
    assert all(s.depth * s.width <= 12 for s in specs)
    assert len({s.seed for s in specs}) == 60


def test_write_suite_round_trips(tmp_path):
    specs = [GenSpec(2, 2, 3, margin=1.0, seed=11), GenSpec(3, 2, 3, margin=-1.0, seed=12)]
    manifest = write_suite(specs, tmp_path)
    assert (tmp_path / "manifest.json").exists()
    assert len(manifest) == 2
    files = sorted(p.name for p in tmp_path.glob("*.json"))
    assert "i000011.net.json" in files and "i000011.prop.json" in files
    loaded = json.loads((tmp_path / "manifest.json").read_text())
    assert loaded[0]["expected"] == "unsat"
    assert loaded[1]["expected"] == "sat"
