import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rtdkit.cnf import count_unsat, formula_from_lists
from rtdkit.instancegen import (SatStatus, build_test_set, dpll_sat, generate_random_3sat,
                                load_test_set, write_test_set)

from .oracles import brute_force_model


def test_generator_shape_100_430():
    f = generate_random_3sat(100, 430, 1)
    assert f.num_clauses == 430
    for c in f.clauses:
        assert len(c) == 3 and len({abs(l) for l in c}) == 3


def test_generator_three_vars():
    f = generate_random_3sat(3, 1, 9)
    assert sorted(abs(l) for l in f.clauses[0]) == [1, 2, 3]


@given(st.integers(3, 40), st.integers(1, 200), st.integers(0, 2**64 - 1))
def test_generator_deterministic_and_well_formed(n, m, seed):
    f = generate_random_3sat(n, m, seed)
    assert f == generate_random_3sat(n, m, seed)
    assert all(len({abs(l) for l in c}) == 3 for c in f.clauses)


def test_generator_rejects_tiny():
    with pytest.raises(ValueError):
        generate_random_3sat(2, 1, 0)


def test_dpll_trivial():
    assert dpll_sat(formula_from_lists(1, [[1], [-1]])).status is SatStatus.UNSAT
    r = dpll_sat(formula_from_lists(3, [[1, 2, 3]]))
    assert r.status is SatStatus.SAT
    assert count_unsat(formula_from_lists(3, [[1, 2, 3]]), r.model) == 0


def test_dpll_matches_enumeration():
    for i in range(200):
        f = generate_random_3sat(20, 85, 1000 + i)
        r = dpll_sat(f, seed=i)
        model = brute_force_model(f)
        assert r.satisfiable == (model is not None)
        if r.satisfiable:
            assert count_unsat(f, r.model) == 0


def test_dpll_node_budget():
    f = generate_random_3sat(60, 258, 4)
    r = dpll_sat(f, node_limit=1)
    assert r.status in (SatStatus.BUDGET_EXCEEDED, SatStatus.SAT, SatStatus.UNSAT)
    assert r.nodes <= 2


def test_test_set_small_all_sat_by_enumeration():
    ts = build_test_set(20, 4.25, 10, base_seed=3)
    assert ts.count == 10 and len(ts.instances) == 10
    for f in ts.instances:
        assert f.num_clauses == 85
        assert brute_force_model(f) is not None


def test_test_set_determinism_and_round_trip(tmp_path):
    a = build_test_set(30, 4.3, 5, base_seed=11)
    b = build_test_set(30, 4.3, 5, base_seed=11)
    assert a.instances == b.instances and a.candidate_indices == b.candidate_indices
    write_test_set(a, tmp_path)
    desc = json.loads((tmp_path / "testset.json").read_text())
    assert desc["count"] == 5 and desc["num_clauses"] == 129
    c = load_test_set(tmp_path)
    assert c.instances == a.instances
    again = build_test_set(desc["num_vars"], 4.3, desc["count"], desc["base_seed"])
    assert again.instances == a.instances


def test_test_set_candidate_seeds_independent_of_count():
    small = build_test_set(25, 4.3, 2, base_seed=5)
    big = build_test_set(25, 4.3, 6, base_seed=5)
    assert big.instances[:2] == small.instances


def test_test_set_100_vars_shape():
    ts = build_test_set(100, 4.3, 5, base_seed=0)
    for f in ts.instances:
        assert f.num_clauses == 430
        assert dpll_sat(f, seed=1).status is SatStatus.SAT


def test_count_zero_rejected():
    with pytest.raises(ValueError):
        build_test_set(20, 4.3, 0)
