"""CDCL solver unit tests and brute-force fuzzing."""

import itertools
import random

from hypothesis import given, settings, strategies as st

from ifsguard.sat import Solver


def test_trivial_sat():
    s = Solver()
    a = s.new_var()
    s.add_clause([a])
    assert s.solve() is True
    assert s.model()[a] == 1


def test_trivial_unsat():
    s = Solver()
    a = s.new_var()
    s.add_clause([a])
    s.add_clause([-a])
    assert s.solve() is False


def test_unit_propagation_chain():
    s = Solver()
    vs = [s.new_var() for _ in range(5)]
    s.add_clause([vs[0]])
    for x, y in zip(vs, vs[1:]):
        s.add_clause([-x, y])  # x -> y
    assert s.solve() is True
    m = s.model()
    assert all(m[v] == 1 for v in vs)


def test_assumptions_do_not_persist():
    s = Solver()
    a, b = s.new_var(), s.new_var()
    s.add_clause([a, b])
    assert s.solve(assumptions=[-a, -b]) is False
    assert s.solve() is True
    assert s.solve(assumptions=[-a]) is True
    assert s.model()[b] == 1


def test_budget_returns_none():
    # pigeonhole php(5,4) is hard enough to exhaust a tiny budget
    s = Solver()
    n_holes, n_pigeons = 4, 5
    var = {}
    for p in range(n_pigeons):
        for h in range(n_holes):
            var[p, h] = s.new_var()
    for p in range(n_pigeons):
        s.add_clause([var[p, h] for h in range(n_holes)])
    for h in range(n_holes):
        for p1, p2 in itertools.combinations(range(n_pigeons), 2):
            s.add_clause([-var[p1, h], -var[p2, h]])
    assert s.solve(max_decisions=3) is None
    # and the full solve still gives the right answer afterwards
    assert s.solve() is False


def _brute_force(n_vars, clauses):
    for bits in range(1 << n_vars):
        assign = {v: (bits >> (v - 1)) & 1 for v in range(1, n_vars + 1)}
        if all(
            any(assign[abs(l)] == (1 if l > 0 else 0) for l in c) for c in clauses
        ):
            return True
    return False


@settings(max_examples=150, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_fuzz_against_brute_force(seed):
    rng = random.Random(seed)
    n_vars = rng.randint(3, 8)
    n_clauses = rng.randint(3, 30)
    clauses = []
    for _ in range(n_clauses):
        width = rng.randint(1, 3)
        lits = []
        for _ in range(width):
            v = rng.randint(1, n_vars)
            lits.append(v if rng.random() < 0.5 else -v)
        clauses.append(lits)
    s = Solver()
    for _ in range(n_vars):
        s.new_var()
    for c in clauses:
        s.add_clause(list(c))
    expected = _brute_force(n_vars, clauses)
    got = s.solve()
    assert got == expected
    if got:
        m = s.model()
        for c in clauses:
            assert any(m[abs(l)] == (1 if l > 0 else 0) for l in c)
