import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evshare.master import build_master, solve_integer, solve_relaxation
from evshare.solver import (
    INFEASIBLE,
    OPTIMAL,
    TIME_LIMIT,
    UNBOUNDED,
    LinearModel,
    ModelError,
    SolverError,
    solve_lp,
    solve_milp,
)

from _helpers import worked_example_instance


def test_one_variable_lp_and_dual():
    lp = LinearModel()
    x = lp.add_var("x", obj=1.0)
    lp.add_constraint([(x, 1.0)], ">=", 3.0, "floor")
    out = solve_lp(lp)
    assert out.status == OPTIMAL and out.values[x] == pytest.approx(3.0)
    assert out.dual("floor") == pytest.approx(1.0)


def test_infeasible_pair():
    lp = LinearModel()
    x = lp.add_var("x")
    lp.add_constraint([(x, 1.0)], "<=", 0.0, "a")
    lp.add_constraint([(x, 1.0)], ">=", 1.0, "b")
    assert solve_lp(lp).status == INFEASIBLE


def test_unbounded():
    lp = LinearModel(sense="max")
    lp.add_var("x", obj=1.0)
    assert solve_lp(lp).status == UNBOUNDED


@pytest.mark.parametrize("backend", ["highs", "bnb"])
def test_integer_rounding_down(backend):
    lp = LinearModel(sense="max")
    x = lp.add_var("x", integer=True, obj=1.0)
    lp.add_constraint([(x, 1.0)], "<=", 2.5, "cap")
    out = solve_milp(lp, backend=backend)
    assert out.status == OPTIMAL and out.values[x] == pytest.approx(2.0) and out.duals is None
    with pytest.raises(SolverError):
        out.dual("cap")


def test_empty_model():
    out = solve_milp(LinearModel())
    assert out.status == OPTIMAL and out.objective == 0.0


def test_worked_example_relaxation_and_milp():
    net, econ, params, profile, stations = worked_example_instance()
    out = solve_lp(build_master(net, econ, params, profile, stations).lp)
    assert out.objective == pytest.approx(10.0)
    for backend in ("highs", "bnb"):
        out = solve_milp(build_master(net, econ, params, profile, stations, relax=False).lp, backend=backend)
        assert out.objective == pytest.approx(10.0)


def test_model_validation():
    lp = LinearModel()
    x = lp.add_var("x")
    lp.add_constraint([(x, 1.0)], "<=", 1.0, "c")
    with pytest.raises(ModelError):
        lp.add_constraint([(x, 1.0)], "<=", 1.0, "c")
    with pytest.raises(ModelError):
        lp.add_constraint([(5, 1.0)], "<=", 1.0, "d")
    with pytest.raises(ModelError):
        lp.add_constraint([(x, 1.0)], "<", 1.0, "e")
    with pytest.raises(ModelError):
        lp.add_var("y", lb=2, ub=1)
    with pytest.raises(ModelError):
        LinearModel(sense="up")


def test_lp_text_export():
    lp = LinearModel(sense="max")
    x = lp.add_var("x", ub=4, integer=True, obj=2.0)
    lp.add_constraint([(x, 1.0)], "<=", 3.0, "cap")
    text = lp.to_lp_text()
    assert "Maximize" in text and "cap" in text and "x" in text


def random_lp(rng, n, m):
    """Feasible, bounded LP: min c x, A x >= b with A, c >= 0 and b reachable."""
    lp = LinearModel()
    c = rng.uniform(0.5, 2.0, n)
    xs = [lp.add_var(f"x{j}", ub=10.0, obj=float(c[j])) for j in range(n)]
    A = rng.uniform(0, 1, (m, n))
    b = A @ rng.uniform(0, 5, n)
    for i in range(m):
        lp.add_constraint([(xs[j], float(A[i, j])) for j in range(n)], ">=", float(b[i]), f"r{i}")
    return lp, A, b, c


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_strong_duality_random(n, m, seed):
    rng = np.random.default_rng(seed)
    lp, A, b, c = random_lp(rng, n, m)
    out = solve_lp(lp)
    assert out.status == OPTIMAL
    y = out.duals
    assert np.all(y >= -1e-9)  # minimisation, >= rows
    # dual objective with the upper bounds' multipliers from reduced costs
    ub_mult = np.minimum(out.reduced_costs, 0.0)
    dual_obj = b @ y + 10.0 * ub_mult.sum()
    assert dual_obj == pytest.approx(out.objective, abs=1e-6)
    assert np.all(c - A.T @ y - ub_mult >= -1e-7)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 5), st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_bnb_agrees_with_highs(n, m, seed):
    rng = np.random.default_rng(seed)
    lp, *_ = random_lp(rng, n, m)
    for v in lp.variables:
        v.integer = True
    a = solve_milp(lp, backend="highs")
    b = solve_milp(lp, backend="bnb")
    assert a.status == b.status == OPTIMAL
    assert a.objective == pytest.approx(b.objective, abs=1e-6)


def test_resolve_is_stable():
    net, econ, params, profile, stations = worked_example_instance()
    lp = build_master(net, econ, params, profile, stations).lp
    a, b = solve_lp(lp), solve_lp(lp)
    assert a.status == b.status and abs(a.objective - b.objective) < 1e-9


def test_unknown_backend():
    lp = LinearModel()
    lp.add_var("x", integer=True)
    with pytest.raises(SolverError):
        solve_milp(lp, backend="nope")


def test_backend_env_var(monkeypatch):
    net, econ, params, profile, stations = worked_example_instance()
    monkeypatch.setenv("EVSHARE_SOLVER", "bnb")
    mm = build_master(net, econ, params, profile, stations, relax=False)
    assert solve_integer(mm).objective == 10


def test_time_limit_status_is_reported():
    # a knapsack family big enough that a tiny limit stops the search
    rng = np.random.default_rng(0)
    lp = LinearModel(sense="max")
    n = 60
    w = rng.integers(20, 60, n)
    xs = [lp.add_var(f"x{j}", ub=1, integer=True, obj=float(w[j] + rng.integers(0, 3))) for j in range(n)]
    for k in range(25):
        a = rng.integers(1, 60, n)
        lp.add_constraint([(x, float(a[j])) for j, x in enumerate(xs)], "<=", float(a.sum() // 2) + 0.5, f"k{k}")
    out = solve_milp(lp, time_limit=0.01, backend="bnb")
    assert out.status in (TIME_LIMIT, OPTIMAL)
    if out.status == TIME_LIMIT and out.values is not None:
        assert math.isfinite(out.objective)
