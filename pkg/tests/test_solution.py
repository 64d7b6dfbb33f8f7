import copy

import numpy as np
import pytest

from evshare.master import build_master, solve_integer
from evshare.solution import check_solution, solution_from_dict, solution_to_dict
from evshare.svgmap import count_markers, render_map
from evshare.instance import NodeEconomics, ServiceParameters, TripNetwork
from evshare.master import Station
from evshare.capacity import CapacityProfile

from _helpers import worked_example_instance


def solved_worked_example():
    net, econ, params, profile, stations = worked_example_instance()
    sol = solve_integer(build_master(net, econ, params, profile, stations, relax=False))
    return net, econ, params, profile, stations, sol


def failing(results):
    return {r.name for r in results if not r.passed}


def test_valid_solution_passes_every_check():
    net, econ, params, profile, stations, sol = solved_worked_example()
    assert failing(check_solution(net, econ, params, profile, stations, sol)) == set()


def test_round_trip_through_json():
    net, econ, params, profile, stations, sol = solved_worked_example()
    doc = solution_to_dict(net, stations, sol, profile, method="nodes")
    st2, sol2, prof2 = solution_from_dict(doc, net)
    assert st2 == stations and prof2 == profile
    assert np.array_equal(sol2.unmet, sol.unmet) and np.array_equal(sol2.fplus, sol.fplus)
    assert doc["objective"] == 10 and doc["stations"][0]["member_ids"] == ["n1"]


def test_tampered_unmet_fails_trip_integrity():
    net, econ, params, profile, stations, sol = solved_worked_example()
    bad = copy.deepcopy(sol)
    bad.unmet[0, 0, 0] = 1.0  # no trips from n1 to itself
    bad.objective += 1
    assert "trip integrity" in failing(check_solution(net, econ, params, profile, stations, bad))


def test_unbalanced_station_fails_balance():
    net, econ, params, profile, stations, sol = solved_worked_example()
    bad = copy.deepcopy(sol)
    bad.fplus[0, 0, 0] -= 1.0
    bad.unmet[0, 1, 0] += 1.0
    bad.objective += 1
    names = failing(check_solution(net, econ, params, profile, stations, bad))
    assert "station balance" in names


def test_capacity_budget_and_integrality_checks():
    net, econ, _, profile, stations, sol = solved_worked_example()
    bad = copy.deepcopy(sol)
    bad.pairs[:] = 0.5
    names = failing(check_solution(net, econ, ServiceParameters(budget=1.0), profile, stations, bad))
    assert {"station capacity", "budget", "integrality"} <= names


# ---------------------------------------------------------------- maps


def test_one_node_one_station_map():
    net = TripNetwork(ids=(0,), x=[1.0], y=[2.0], od=[[[0]]], period_lengths=[1])
    econ = NodeEconomics([1.0], [1])
    svg = render_map(net, [Station.at_node(net, econ, 0)], [1])
    assert count_markers(svg) == {"node": 1, "station": 1, "centroid": 1}
    assert svg.count("<circle") + svg.count('<rect class') == 3


def test_empty_solution_map():
    net, econ, *_ = worked_example_instance()
    svg = render_map(net, [], [])
    assert count_markers(svg) == {"node": 2, "station": 0, "centroid": 1}


def test_only_built_stations_are_drawn_and_output_is_deterministic():
    net, econ, params, profile, stations, sol = solved_worked_example()
    a = render_map(net, stations, [1, 0, 1])
    assert count_markers(a)["station"] == 2
    assert a == render_map(net, stations, [1, 0, 1])


def test_station_drawn_at_neighbourhood_centroid():
    net = TripNetwork(ids=(0, 1), x=[0.0, 0.4], y=[0.0, 0.0], od=np.zeros((1, 2, 2)), period_lengths=[1])
    econ = NodeEconomics([1.0, 2.0], [1, 1])
    st = Station.from_weights(net, econ, (0, 1), (1.0, 0.0))  # optimised location on node 0
    assert st.centroid(net) == pytest.approx((0.2, 0.0))
    svg = render_map(net, [st], [1])
    node_cx = [float(s.split('cx="')[1].split('"')[0]) for s in svg.splitlines() if 'class="node"' in s]
    st_cx = [float(s.split('cx="')[1].split('"')[0]) for s in svg.splitlines() if 'class="station"' in s][0]
    assert st_cx == pytest.approx(sum(node_cx) / 2, abs=0.01)
