"""Problem instances: trip network, node economics, service parameters.

Also holds the l1 distance helpers, the JSON instance format and the
synthetic city generator used for experiments.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np

__all__ = [
    "InstanceError",
    "InstanceParseError",
    "InstanceValidationError",
    "TripNetwork",
    "NodeEconomics",
    "ServiceParameters",
    "FlowTotals",
    "distance",
    "distance_matrix",
    "compute_flows",
    "max_station_distance",
    "generate_synthetic",
    "load_instance",
    "save_instance",
    "instance_to_dict",
    "instance_from_dict",
]


class InstanceError(ValueError):
    pass


class InstanceParseError(InstanceError):
    """Malformed instance document. ``where`` locates the offending line or field."""

    def __init__(self, message: str, where: str | None = None):
        self.where = where
        super().__init__(f"{where}: {message}" if where else message)


class InstanceValidationError(InstanceError):
    """An instance invariant does not hold. ``invariant`` names it."""

    def __init__(self, invariant: str, message: str):
        self.invariant = invariant
        super().__init__(f"[{invariant}] {message}")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TripNetwork:
    """Nodes with planar coordinates (km) and per-period OD trip matrices.

    ``od[t, n, n2]`` counts trips from node ``n`` to node ``n2`` during
    period ``t``; ``period_lengths[t]`` is in hours.
    """

    ids: tuple
    x: np.ndarray
    y: np.ndarray
    od: np.ndarray
    period_lengths: np.ndarray

    def __post_init__(self):
        ids = tuple(self.ids)
        x = np.asarray(self.x, dtype=float).reshape(-1)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        lengths = np.asarray(self.period_lengths, dtype=float).reshape(-1)
        raw = np.asarray(self.od)
        n = len(ids)
        if n < 1:
            raise InstanceValidationError("node-count", "a network needs at least one node")
        if len(set(ids)) != n:
            raise InstanceValidationError("unique-ids", "node ids must be unique")
        if x.shape != (n,) or y.shape != (n,):
            raise InstanceValidationError("coordinates", "one x and one y per node required")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise InstanceValidationError("coordinates", "coordinates must be finite")
        if lengths.size < 1:
            raise InstanceValidationError("period-count", "at least one period required")
        if np.any(~np.isfinite(lengths)) or np.any(lengths <= 0):
            raise InstanceValidationError("period-length", "period lengths must be positive")
        if raw.shape != (lengths.size, n, n):
            raise InstanceValidationError(
                "od-shape", f"od must have shape {(lengths.size, n, n)}, got {raw.shape}"
            )
        if raw.size and not np.all(np.isfinite(raw)):
            raise InstanceValidationError("od-integral", "od entries must be finite")
        od = np.rint(raw).astype(np.int64)
        if raw.size and np.any(np.abs(raw - od) > 0):
            raise InstanceValidationError("od-integral", "od entries must be integers")
        if np.any(od < 0):
            raise InstanceValidationError("od-nonnegative", "od entries must be >= 0")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "x", _frozen(x))
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "od", _frozen(od))
        object.__setattr__(self, "period_lengths", _frozen(lengths))

    @property
    def n_nodes(self) -> int:
        return len(self.ids)

    @property
    def n_periods(self) -> int:
        return int(self.period_lengths.size)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TripNetwork):
            return NotImplemented
        return (
            self.ids == other.ids
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.od, other.od)
            and np.array_equal(self.period_lengths, other.period_lengths)
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=False)
class NodeEconomics:
    """Per-node cost of one parking pair and the number of pairs that fit."""

    pair_cost: np.ndarray
    pair_capacity: np.ndarray

    def __post_init__(self):
        cost = np.asarray(self.pair_cost, dtype=float).reshape(-1)
        raw = np.asarray(self.pair_capacity)
        cap = np.rint(raw).astype(np.int64).reshape(-1)
        if cost.shape != cap.shape:
            raise InstanceValidationError("economics-shape", "cost and capacity lengths differ")
        if np.any(~np.isfinite(cost)) or np.any(cost <= 0):
            raise InstanceValidationError("cost-positive", "pair costs must be > 0")
        if np.any(np.abs(raw.reshape(-1) - cap) > 0) or np.any(cap < 1):
            raise InstanceValidationError("capacity-integral", "pair capacities must be integers >= 1")
        object.__setattr__(self, "pair_cost", _frozen(cost))
        object.__setattr__(self, "pair_capacity", _frozen(cap))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, NodeEconomics):
            return NotImplemented
        return np.array_equal(self.pair_cost, other.pair_cost) and np.array_equal(
            self.pair_capacity, other.pair_capacity
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class ServiceParameters:
    """Walking radius (km), market share, handling time (h), charge rate (h/km), budget.

    ``budget`` may be ``math.inf`` for an unconstrained build.
    """

    walk_radius: float = 0.5
    market_share: float = 0.005
    handling_time: float = 1.0 / 6.0
    charge_rate: float = 4.0 / 250.0
    budget: float = math.inf

    def __post_init__(self):
        if not self.walk_radius > 0:
            raise InstanceValidationError("walk-radius", "walk radius must be > 0")
        if not 0 < self.market_share <= 1:
            raise InstanceValidationError("market-share", "market share must lie in (0, 1]")
        if not self.handling_time >= 0:
            raise InstanceValidationError("handling-time", "handling time must be >= 0")
        if not self.charge_rate >= 0:
            raise InstanceValidationError("charge-rate", "charge rate must be >= 0")
        if math.isnan(self.budget) or self.budget < 0:
            raise InstanceValidationError("budget", "budget must be >= 0")


@dataclass(frozen=True)
class FlowTotals:
    outward: np.ndarray  # (T, N) departures
    inward: np.ndarray  # (T, N) arrivals


def distance(a: Sequence[float], b: Sequence[float]) -> float:
    """l1 distance between two points in km."""
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


def distance_matrix(net: TripNetwork) -> np.ndarray:
    return np.abs(net.x[:, None] - net.x[None, :]) + np.abs(net.y[:, None] - net.y[None, :])


def compute_flows(net: TripNetwork) -> FlowTotals:
    return FlowTotals(outward=net.od.sum(axis=2), inward=net.od.sum(axis=1))


def max_station_distance(net: TripNetwork) -> np.ndarray:
    """Largest l1 distance from each node to any node (the big-M of the geometry rows)."""
    return distance_matrix(net).max(axis=1)


# ---------------------------------------------------------------------------
# Synthetic cities
# ---------------------------------------------------------------------------


def economics_from_center_distance(dist_to_center: np.ndarray) -> NodeEconomics:
    """Cost falls linearly from 3 (nearest the centre) to 1 (furthest).

    Capacity is 1 pair within a third of the largest centre distance, 2 pairs
    up to two thirds and 3 pairs beyond.
    """
    d = np.asarray(dist_to_center, dtype=float)
    lo, hi = float(d.min()), float(d.max())
    if hi > lo:
        cost = 3.0 - 2.0 * (d - lo) / (hi - lo)
    else:
        cost = np.full(d.shape, 3.0)
    cap = np.where(d <= hi / 3.0, 1, np.where(d <= 2.0 * hi / 3.0, 2, 3))
    return NodeEconomics(pair_cost=cost, pair_capacity=cap)


def default_budget(econ: NodeEconomics) -> float:
    return 0.3 * float(econ.pair_cost @ econ.pair_capacity)


def generate_synthetic(
    node_count: int,
    seed: int,
    width: float = 5.0,
    height: float = 5.0,
    trips_per_period: Sequence[int] = (400, 1200, 800, 900, 600),
    period_lengths: Sequence[float] = (3, 6, 4, 5, 6),
    decay_km: float = 1.0,
    mass_shape: float = 1.0,
    params: ServiceParameters | None = None,
) -> tuple[TripNetwork, NodeEconomics, ServiceParameters]:
    """Random city: uniform nodes, gravity-model OD, centre-distance economics.

    Per period, each node draws a production and an attraction mass from a
    gamma distribution; the OD intensity between distinct nodes is
    ``prod[n] * attr[n2] * exp(-d(n, n2) / decay_km)`` and the integral OD
    matrix is a multinomial draw of the requested total. The budget is set to
    ``0.3 * cost @ capacity`` unless ``params`` carries a finite budget.
    """
    if node_count < 1:
        raise InstanceValidationError("node-count", "node_count must be >= 1")
    if not (width > 0 and height > 0):
        raise InstanceValidationError("bounds", "geometry bounds must be positive")
    if decay_km <= 0 or mass_shape <= 0:
        raise InstanceValidationError("gravity", "decay and mass shape must be positive")
    trips = [int(v) for v in trips_per_period]
    if len(trips) != len(period_lengths):
        raise InstanceValidationError("period-count", "one trip total per period required")
    if any(v < 0 for v in trips):
        raise InstanceValidationError("od-nonnegative", "trip totals must be >= 0")

    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, width, node_count)
    y = rng.uniform(0.0, height, node_count)
    cx, cy = x.mean(), y.mean()
    econ = economics_from_center_distance(np.abs(x - cx) + np.abs(y - cy))

    dist = np.abs(x[:, None] - x[None, :]) + np.abs(y[:, None] - y[None, :])
    decay = np.exp(-dist / decay_km)
    np.fill_diagonal(decay, 0.0)
    od = np.zeros((len(trips), node_count, node_count), dtype=np.int64)
    for t, total in enumerate(trips):
        prod = rng.gamma(mass_shape, 1.0, node_count)
        attr = rng.gamma(mass_shape, 1.0, node_count)
        w = prod[:, None] * attr[None, :] * decay
        if total == 0:
            continue
        if w.sum() <= 0:
            raise InstanceValidationError("od-support", "no off-diagonal pair to place trips on")
        od[t] = rng.multinomial(total, (w / w.sum()).ravel()).reshape(node_count, node_count)

    net = TripNetwork(
        ids=tuple(range(node_count)), x=x, y=y, od=od, period_lengths=period_lengths
    )
    base = params if params is not None else ServiceParameters()
    budget = base.budget if math.isfinite(base.budget) else default_budget(econ)
    p = ServiceParameters(
        walk_radius=base.walk_radius,
        market_share=base.market_share,
        handling_time=base.handling_time,
        charge_rate=base.charge_rate,
        budget=budget,
    )
    return net, econ, p


# ---------------------------------------------------------------------------
# JSON format
# ---------------------------------------------------------------------------


def instance_to_dict(
    net: TripNetwork, econ: NodeEconomics, params: ServiceParameters
) -> dict[str, Any]:
    if len(econ.pair_cost) != net.n_nodes:
        raise InstanceValidationError("economics-shape", "economics do not match node count")
    nodes = [
        {
            "id": _plain(net.ids[i]),
            "x": float(net.x[i]),
            "y": float(net.y[i]),
            "cost": float(econ.pair_cost[i]),
            "capacity_pairs": int(econ.pair_capacity[i]),
        }
        for i in range(net.n_nodes)
    ]
    periods = [
        {"length_hours": float(net.period_lengths[t]), "od": net.od[t].tolist()}
        for t in range(net.n_periods)
    ]
    return {
        "nodes": nodes,
        "periods": periods,
        "params": {
            "walk_radius": params.walk_radius,
            "market_share": params.market_share,
            "handling_time_hours": params.handling_time,
            "charge_rate_hours_per_km": params.charge_rate,
            "budget": params.budget if math.isfinite(params.budget) else None,
        },
    }


def _plain(v):
    return v.item() if isinstance(v, np.generic) else v


def _field(obj: Any, key: str, where: str, kind=(int, float)):
    if not isinstance(obj, dict):
        raise InstanceParseError("expected an object", where)
    if key not in obj:
        raise InstanceParseError(f"missing field '{key}'", where)
    val = obj[key]
    if kind is not None and (isinstance(val, bool) or not isinstance(val, kind)):
        raise InstanceParseError(f"field '{key}' has wrong type {type(val).__name__}", where)
    return val


def instance_from_dict(doc: Any) -> tuple[TripNetwork, NodeEconomics, ServiceParameters]:
    if not isinstance(doc, dict):
        raise InstanceParseError("top level must be an object", "$")
    nodes = _field(doc, "nodes", "$", list)
    periods = _field(doc, "periods", "$", list)
    pdoc = _field(doc, "params", "$", dict)

    ids, xs, ys, costs, caps = [], [], [], [], []
    for i, node in enumerate(nodes):
        where = f"nodes[{i}]"
        ids.append(_field(node, "id", where, (int, str)))
        xs.append(_field(node, "x", where))
        ys.append(_field(node, "y", where))
        costs.append(_field(node, "cost", where))
        caps.append(_field(node, "capacity_pairs", where))

    lengths, ods = [], []
    for t, period in enumerate(periods):
        where = f"periods[{t}]"
        lengths.append(_field(period, "length_hours", where))
        od = _field(period, "od", where, list)
        if len(od) != len(nodes):
            raise InstanceParseError(f"od needs {len(nodes)} rows, got {len(od)}", where + ".od")
        for r, row in enumerate(od):
            rw = f"{where}.od[{r}]"
            if not isinstance(row, list) or len(row) != len(nodes):
                raise InstanceParseError(f"row must hold {len(nodes)} numbers", rw)
            for c, v in enumerate(row):
                if isinstance(v, bool) or not isinstance(v, (int, float)):
                    raise InstanceParseError("od entries must be numbers", f"{rw}[{c}]")
        ods.append(od)

    budget = _field(pdoc, "budget", "params", None)
    if budget is None:
        budget = math.inf
    elif isinstance(budget, bool) or not isinstance(budget, (int, float)):
        raise InstanceParseError("field 'budget' must be a number or null", "params")
    params = ServiceParameters(
        walk_radius=float(_field(pdoc, "walk_radius", "params")),
        market_share=float(_field(pdoc, "market_share", "params")),
        handling_time=float(_field(pdoc, "handling_time_hours", "params")),
        charge_rate=float(_field(pdoc, "charge_rate_hours_per_km", "params")),
        budget=float(budget),
    )
    n = len(nodes)
    od_arr = np.array(ods, dtype=float).reshape(len(periods), n, n)
    net = TripNetwork(ids=tuple(ids), x=xs, y=ys, od=od_arr, period_lengths=lengths)
    econ = NodeEconomics(pair_cost=costs, pair_capacity=np.array(caps, dtype=float))
    return net, econ, params


def save_instance(
    path: str | Path, net: TripNetwork, econ: NodeEconomics, params: ServiceParameters
) -> Path:
    path = Path(path)
    text = json.dumps(instance_to_dict(net, econ, params), indent=1)
    path.write_text(text + "\n", encoding="utf-8")
    return path


def load_instance(path: str | Path) -> tuple[TripNetwork, NodeEconomics, ServiceParameters]:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceParseError(exc.msg, f"line {exc.lineno} column {exc.colno}") from exc
    return instance_from_dict(doc)
