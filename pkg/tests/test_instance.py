import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evshare.instance import (
    InstanceParseError,
    InstanceValidationError,
    NodeEconomics,
    ServiceParameters,
    TripNetwork,
    compute_flows,
    default_budget,
    distance,
    economics_from_center_distance,
    generate_synthetic,
    instance_from_dict,
    instance_to_dict,
    load_instance,
    max_station_distance,
    save_instance,
)

from _helpers import worked_example_instance


def line(xs, od=None):
    n = len(xs)
    od = np.zeros((1, n, n), dtype=int) if od is None else od
    return TripNetwork(ids=tuple(range(n)), x=xs, y=[0.0] * n, od=od, period_lengths=[1.0])


@pytest.mark.parametrize("a,b,d", [((0, 0), (0, 0), 0), ((0, 0), (1, 2), 3), ((-1, 0), (1, -1), 3)])
def test_distance_examples(a, b, d):
    assert distance(a, b) == d


coord = st.floats(-100, 100, allow_nan=False)
point = st.tuples(coord, coord)


@given(point, point, point)
def test_distance_is_a_metric(a, b, c):
    assert distance(a, b) == distance(b, a)
    assert distance(a, c) <= distance(a, b) + distance(b, c) + 1e-9
    assert distance(a, a) == 0


def test_compute_flows_examples():
    net, *_ = worked_example_instance()
    f = compute_flows(net)
    assert f.outward.tolist() == [[10, 10]] and f.inward.tolist() == [[10, 10]]

    f = compute_flows(line([0.0, 1.0]))
    assert not f.outward.any() and not f.inward.any()

    f = compute_flows(line([0.0, 1.0], od=[[[0, 3], [0, 0]]]))
    assert f.outward.tolist() == [[3, 0]] and f.inward.tolist() == [[0, 3]]


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_flow_totals_balance(n, T, seed):
    rng = np.random.default_rng(seed)
    od = rng.integers(0, 20, size=(T, n, n))
    net = TripNetwork(ids=tuple(range(n)), x=rng.random(n), y=rng.random(n), od=od, period_lengths=np.ones(T))
    f = compute_flows(net)
    assert np.array_equal(f.outward.sum(axis=1), f.inward.sum(axis=1))
    assert np.array_equal(f.outward.sum(axis=1), od.sum(axis=(1, 2)))


def test_max_station_distance_examples():
    assert max_station_distance(line([0.0])).tolist() == [0.0]
    net = TripNetwork(ids=(0, 1), x=[0, 1], y=[0, 2], od=np.zeros((1, 2, 2)), period_lengths=[1])
    assert max_station_distance(net).tolist() == [3.0, 3.0]
    assert max_station_distance(line([0.0, 1.0, 3.0])).tolist() == [3.0, 2.0, 3.0]


@pytest.mark.parametrize(
    "kwargs,invariant",
    [
        (dict(od=[[[0, -1], [0, 0]]]), "od-nonnegative"),
        (dict(od=[[[0, 0.5], [0, 0]]]), "od-integral"),
        (dict(period_lengths=[0.0]), "period-length"),
        (dict(period_lengths=[]), "period-count"),
        (dict(ids=(1, 1)), "unique-ids"),
    ],
)
def test_network_invariants(kwargs, invariant):
    base = dict(ids=(0, 1), x=[0, 1], y=[0, 0], od=[[[0, 1], [0, 0]]], period_lengths=[1.0])
    base.update(kwargs)
    if "period_lengths" in kwargs and not kwargs["period_lengths"]:
        base["od"] = np.zeros((0, 2, 2))
    with pytest.raises(InstanceValidationError) as exc:
        TripNetwork(**base)
    assert exc.value.invariant == invariant


def test_network_needs_a_node():
    with pytest.raises(InstanceValidationError):
        TripNetwork(ids=(), x=[], y=[], od=np.zeros((1, 0, 0)), period_lengths=[1.0])


def test_network_arrays_are_read_only():
    net, *_ = worked_example_instance()
    with pytest.raises(ValueError):
        net.od[0, 0, 0] = 4


def test_economics_invariants():
    with pytest.raises(InstanceValidationError):
        NodeEconomics([0.0], [1])
    with pytest.raises(InstanceValidationError):
        NodeEconomics([1.0], [0])
    with pytest.raises(InstanceValidationError):
        NodeEconomics([1.0], [1.5])


def test_service_parameter_invariants():
    for bad in (dict(walk_radius=0), dict(market_share=0), dict(market_share=1.5), dict(handling_time=-1),
                dict(charge_rate=-0.1), dict(budget=-1)):
        with pytest.raises(InstanceValidationError):
            ServiceParameters(**bad)
    assert ServiceParameters().walk_radius == 0.5


def test_center_distance_economics():
    econ = economics_from_center_distance(np.array([0.0, 1.0, 2.0, 3.0]))
    assert econ.pair_cost[0] == 3.0  # node at the centre
    assert econ.pair_cost[-1] == 1.0  # furthest node
    assert np.allclose(econ.pair_cost, [3, 3 - 2 / 3, 3 - 4 / 3, 1])
    assert econ.pair_capacity.tolist() == [1, 1, 2, 3]


def test_default_budget_example():
    assert default_budget(NodeEconomics([1.0, 2.0], [1, 1])) == pytest.approx(0.9)


def test_generator_rejects_bad_arguments():
    with pytest.raises(InstanceValidationError):
        generate_synthetic(0, seed=1)
    with pytest.raises(InstanceValidationError):
        generate_synthetic(3, seed=1, width=0)
    with pytest.raises(InstanceValidationError):
        generate_synthetic(3, seed=1, height=-1)


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 25), st.integers(0, 10_000))
def test_generator_rules(n, seed):
    trips = (40, 0, 25)
    net, econ, params = generate_synthetic(n, seed, trips_per_period=trips, period_lengths=(3, 2, 4))
    assert np.all(econ.pair_cost >= 1 - 1e-12) and np.all(econ.pair_cost <= 3 + 1e-12)
    assert set(econ.pair_capacity.tolist()) <= {1, 2, 3}
    assert params.budget == 0.3 * float(econ.pair_cost @ econ.pair_capacity)
    for t in range(net.n_periods):
        assert np.all(np.diag(net.od[t]) == 0)
    assert net.od.sum(axis=(1, 2)).tolist() == list(trips)
    assert np.all((net.x >= 0) & (net.x <= 5) & (net.y >= 0) & (net.y <= 5))
    d = np.abs(net.x - net.x.mean()) + np.abs(net.y - net.y.mean())
    assert econ.pair_cost[np.argmin(d)] == pytest.approx(3.0)
    if d.max() - d.min() > 1e-9:  # two nodes are always equidistant from their centroid
        assert econ.pair_cost[np.argmax(d)] == pytest.approx(1.0)


def test_single_node_city():
    net, econ, _ = generate_synthetic(1, seed=0, trips_per_period=(0, 0), period_lengths=(1, 2))
    assert net.n_nodes == 1 and econ.pair_cost.tolist() == [3.0] and not net.od.any()
    # with diagonal trips excluded there is nowhere to put a positive total
    with pytest.raises(InstanceValidationError):
        generate_synthetic(1, seed=0, trips_per_period=(5,), period_lengths=(1,))


def test_generator_is_reproducible():
    a = generate_synthetic(12, seed=5)
    b = generate_synthetic(12, seed=5)
    c = generate_synthetic(12, seed=6)
    assert a[0] == b[0] and a[1] == b[1] and a[2] == b[2]
    assert not a[0] == c[0]


def test_round_trip_worked_example(tmp_path):
    net, econ, params, *_ = worked_example_instance()
    path = save_instance(tmp_path / "a.json", net, econ, params)
    net2, econ2, params2 = load_instance(path)
    assert net2 == net and econ2 == econ and params2 == params
    assert json.loads(path.read_text())["params"]["budget"] is None


def test_round_trip_synthetic(tmp_path):
    net, econ, params = generate_synthetic(9, seed=3)
    path = save_instance(tmp_path / "s.json", net, econ, params)
    assert load_instance(path) == (net, econ, params)


def test_load_negative_od_is_validation_error():
    net, econ, params, *_ = worked_example_instance()
    doc = instance_to_dict(net, econ, params)
    doc["periods"][0]["od"][0][1] = -1
    with pytest.raises(InstanceValidationError) as exc:
        instance_from_dict(doc)
    assert exc.value.invariant == "od-nonnegative"


def test_load_missing_period_length_is_parse_error():
    net, econ, params, *_ = worked_example_instance()
    doc = instance_to_dict(net, econ, params)
    del doc["periods"][0]["length_hours"]
    with pytest.raises(InstanceParseError) as exc:
        instance_from_dict(doc)
    assert "periods[0]" in str(exc.value) and "length_hours" in str(exc.value)


def test_load_malformed_json_reports_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"nodes": [\n  {"id": 1,,}\n]}', encoding="utf-8")
    with pytest.raises(InstanceParseError) as exc:
        load_instance(p)
    assert "line 2" in str(exc.value)


def test_load_wrong_od_shape():
    net, econ, params, *_ = worked_example_instance()
    doc = instance_to_dict(net, econ, params)
    doc["periods"][0]["od"][1] = [1]
    with pytest.raises(InstanceParseError) as exc:
        instance_from_dict(doc)
    assert "periods[0].od[1]" in str(exc.value)


def test_infinite_budget_survives_round_trip():
    net, econ, _, *_ = worked_example_instance()
    doc = instance_to_dict(net, econ, ServiceParameters(budget=math.inf))
    assert instance_from_dict(doc)[2].budget == math.inf
