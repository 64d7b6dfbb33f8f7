import json
import math

import numpy as np
import pytest

from evshare.bcsa import default_iteration_cap, run_bcsa
from evshare.capacity import CapacityProfile
from evshare.instance import NodeEconomics, ServiceParameters, TripNetwork, generate_synthetic
from evshare.master import build_master, node_stations, solve_integer

from _helpers import random_economics, random_network


def check_trace(trace, net):
    objs = trace.accepted_objectives()
    assert all(b <= a + 1e-7 for a, b in zip(objs, objs[1:]))
    sizes = [r.size for r in trace.records]
    assert all(b <= a for a, b in zip(sizes, sizes[1:]))
    assert len(trace.records) <= default_iteration_cap(net)
    assert trace.solution.objective >= trace.relaxation.objective - 1e-6
    for st in trace.pool:
        assert not st.violations(net, ServiceParameters())
    assert len({s.members for s in trace.pool}) == len(trace.pool)


def test_separated_nodes_match_node_baseline():
    rng = np.random.default_rng(3)
    n = 5
    x = np.arange(n) * 2.0  # 2 km apart: no two nodes can share
    od = rng.integers(0, 6, (2, n, n))
    net = TripNetwork(ids=tuple(range(n)), x=x, y=np.zeros(n), od=od, period_lengths=[3, 4])
    econ = random_economics(rng, n)
    params = ServiceParameters(budget=4.0)
    profile = CapacityProfile.fixed([4, 6])
    trace = run_bcsa(net, econ, params, profile)
    assert all(len(s.members) == 1 for s in trace.pool)
    baseline = solve_integer(build_master(net, econ, params, profile, node_stations(net, econ), relax=False))
    assert trace.solution.objective == pytest.approx(baseline.objective)
    check_trace(trace, net)


def test_zero_od_terminates_at_zero():
    net = TripNetwork(ids=(0, 1, 2), x=[0, 0.3, 2], y=[0, 0, 0], od=np.zeros((2, 3, 3)), period_lengths=[1, 2])
    econ = NodeEconomics([1.0, 2.0, 3.0], [1, 2, 3])
    trace = run_bcsa(net, econ, ServiceParameters(budget=5.0), CapacityProfile.fixed([2, 2]))
    assert trace.solution.objective == 0 and trace.complete
    assert not any(r.accepted for r in trace.records)


def test_two_close_nodes_share_one_station():
    net = TripNetwork(ids=(0, 1), x=[0, 0.4], y=[0, 0], od=[[[0, 10], [10, 0]]], period_lengths=[1])
    econ = NodeEconomics([1.0, 1.0], [3, 3])
    trace = run_bcsa(net, econ, ServiceParameters(budget=math.inf), CapacityProfile.fixed([20]))
    assert trace.solution.objective == 0
    assert any(s.members == (0, 1) for s in trace.pool)


@pytest.mark.parametrize("seed", range(8))
def test_trace_invariants_random(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 7))
    net = random_network(rng, n, 2, box=1.5, max_trips=10)
    econ = random_economics(rng, n)
    params = ServiceParameters(budget=float(rng.uniform(1, 6)))
    trace = run_bcsa(net, econ, params, CapacityProfile.fixed([4, 8]))
    assert trace.complete
    check_trace(trace, net)


def test_iteration_cap_flags_incomplete():
    net, econ, params = generate_synthetic(10, seed=2, width=2, height=2)
    trace = run_bcsa(net, econ, params, max_iterations=1)
    assert not trace.complete and "iteration cap" in trace.reason
    assert len(trace.records) == 1
    assert trace.solution.objective >= trace.relaxation.objective - 1e-6


def test_time_limit_flags_incomplete():
    net, econ, params = generate_synthetic(10, seed=2, width=2, height=2)
    trace = run_bcsa(net, econ, params, time_limit=0.0)
    assert not trace.complete and "time limit" in trace.reason


def test_trace_jsonl(tmp_path):
    net, econ, params = generate_synthetic(8, seed=4, width=2, height=2)
    trace = run_bcsa(net, econ, params)
    path = trace.write_jsonl(tmp_path / "t.jsonl")
    rows = [json.loads(line) for line in path.read_text().splitlines()]
    assert len(rows) == len(trace.records)
    assert {"iteration", "size", "h", "accepted", "relaxation_objective"} <= rows[0].keys()
    check_trace(trace, net)
