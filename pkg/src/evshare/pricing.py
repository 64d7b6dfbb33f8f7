"""Finding new stations from master duals, and placing them.

``price_station`` solves the station-pricing MILP for a fixed neighbourhood
size. ``refine_location`` then chooses the convex weights (and so cost and
capacity) of the priced neighbourhood, ``min_cost_location`` places a given
neighbourhood as cheaply as its flow allows, and ``greatest_flow_station``
builds the initial station carrying the most balanced flow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .capacity import CapacityProfile
from .geometry import add_location, min_cost_weights
from .instance import FlowTotals, NodeEconomics, ServiceParameters, TripNetwork, compute_flows, distance_matrix
from .master import DualSolution, Station, StationError, compute_pg
from .solver import INFEASIBLE, OPTIMAL, TIME_LIMIT, LinearModel, SolverError, solve_milp

H_EPS = 1e-6


@dataclass
class PricingResult:
    members: tuple[int, ...]
    U: np.ndarray  # (T,) capacity dual the new station would need
    D: np.ndarray  # (T, N, N) selected node pair per period
    h: float  # reduced benefit
    cost: float
    weights: np.ndarray


@dataclass(frozen=True)
class FlowBounds:
    max_assignable: np.ndarray  # (T,) trips the neighbourhood could route through one station
    m_c: int  # pairs the neighbourhood could ever need
    m_min: int
    m_max: int

    @property
    def m_cbar(self) -> int:
        return min(self.m_c, self.m_max)


def flow_bounds(members: Sequence[int], econ: NodeEconomics, flows: FlowTotals, profile: CapacityProfile) -> FlowBounds:
    idx = list(members)
    fbar = 2.0 * np.minimum(flows.outward[:, idx].sum(axis=1), flows.inward[:, idx].sum(axis=1))
    need = 0
    for t, f in enumerate(fbar):
        if f <= 0:
            continue
        v = profile.pair_capacity[t]
        if v == 0:
            need = math.inf
            break
        need = max(need, math.ceil(f / v - 1e-9))
    caps = econ.pair_capacity[idx]
    m_max = int(caps.max())
    m_c = m_max if math.isinf(need) else int(need)
    return FlowBounds(max_assignable=fbar, m_c=m_c, m_min=int(caps.min()), m_max=m_max)


def valid_inequalities(net: TripNetwork, walk_radius: float) -> list[tuple[int, ...]]:
    """Node sets that are pairwise more than ``2 * walk_radius`` apart.

    At most one node of each set can share a station. Sets are emitted in
    seed order, sorted, with duplicates removed.
    """
    d = distance_matrix(net)
    seen: set[tuple[int, ...]] = set()
    out = []
    for n in range(net.n_nodes):
        group = [n]
        for n2 in range(net.n_nodes):
            if all(d[y, n2] > 2 * walk_radius for y in group):
                group.append(n2)
        if len(group) > 1:
            key = tuple(sorted(group))
            if key not in seen:
                seen.add(key)
                out.append(key)
    return out


def _selection_model(net: TripNetwork, params: ServiceParameters, name: str, sense: str):
    lp = LinearModel(name, sense)
    B = [lp.add_var(f"B[{n}]", ub=1.0, integer=True) for n in range(net.n_nodes)]
    loc = add_location(lp, net, params.walk_radius, select=B)
    return lp, B, loc


def _chosen(x: np.ndarray, B: Sequence[int]) -> tuple[int, ...]:
    return tuple(n for n, j in enumerate(B) if x[j] > 0.5)


def max_neighborhood_size(net: TripNetwork, walk_radius: float) -> int:
    """Most nodes one feasible station location can serve."""
    if net.n_nodes == 1:
        return 1
    params = ServiceParameters(walk_radius=walk_radius)
    lp, B, _ = _selection_model(net, params, "size", "max")
    lp.set_objective([(j, 1.0) for j in B])
    out = solve_milp(lp)
    if out.values is None:
        raise SolverError(f"neighbourhood-size model failed: {out.status}")
    return max(1, len(_chosen(out.values, B)))


def _uniqueness_rows(lp: LinearModel, B: Sequence[int], excluded: Iterable[Sequence[int]]):
    for k, members in enumerate(excluded):
        inside = set(members)
        terms = [(j, 1.0 if n in inside else -1.0) for n, j in enumerate(B)]
        lp.add_constraint(terms, "<=", float(len(inside) - 1), f"uniq[{k}]")


def price_station(
    dual: DualSolution,
    net: TripNetwork,
    econ: NodeEconomics,
    params: ServiceParameters,
    profile: CapacityProfile,
    pool: Iterable[Sequence[int]],
    size: int,
    cuts: Sequence[Sequence[int]] | None = None,
    time_limit: float | None = None,
) -> PricingResult | None:
    """Best new neighbourhood of exactly ``size`` nodes, or None if none exists.

    ``pool`` holds the member tuples that may not be generated again.
    ``cuts`` defaults to :func:`valid_inequalities`.
    """
    pg = compute_pg(dual)
    T, N = net.n_periods, net.n_nodes
    v = profile.v
    lp, B, loc = _selection_model(net, params, "pricing", "max")
    obj = [(loc.alpha[n], -dual.q * float(econ.pair_cost[n])) for n in range(N) if dual.q != 0]
    dvars = []
    for t in range(T):
        pairs = np.argwhere(pg[t] > 0)
        row = []
        for n, n2 in pairs.tolist():
            j = lp.add_var(f"D[{t},{n},{n2}]", ub=1.0)
            lp.add_constraint([(j, 1.0), (B[n], -1.0)], "<=", 0.0, f"Dr[{t},{n},{n2}]")
            lp.add_constraint([(j, 1.0), (B[n2], -1.0)], "<=", 0.0, f"Dc[{t},{n},{n2}]")
            obj.append((j, float(v[t] * pg[t, n, n2])))
            row.append((n, n2, j))
        if row:
            # zero-valued pairs are left out, so the unit of mass becomes "at most one"
            lp.add_constraint([(j, 1.0) for _, _, j in row], "<=", 1.0, f"Dsum[{t}]")
        dvars.append(row)
    lp.set_objective(obj)
    _uniqueness_rows(lp, B, pool)
    for k, group in enumerate(valid_inequalities(net, params.walk_radius) if cuts is None else cuts):
        lp.add_constraint([(B[n], 1.0) for n in group], "<=", 1.0, f"valid[{k}]")
    lp.add_constraint([(j, 1.0) for j in B], "==", float(size), "size")

    out = solve_milp(lp, time_limit=time_limit)
    if out.status == INFEASIBLE or out.values is None:
        if out.status not in (INFEASIBLE, TIME_LIMIT):
            raise SolverError(f"pricing model failed: {out.status}")
        return None
    x = out.values
    members = _chosen(x, B)
    D = np.zeros((T, N, N))
    for t, row in enumerate(dvars):
        for n, n2, j in row:
            D[t, n, n2] = max(0.0, x[j])
        rest = 1.0 - D[t].sum()
        if rest > 1e-12:
            D[t, members[0], members[0]] += rest
    U = (pg * D).sum(axis=(1, 2))
    w = np.clip(np.array([x[loc.alpha[n]] for n in members]), 0.0, None)
    w /= w.sum()
    cost = float(w @ econ.pair_cost[list(members)])
    h = float(v @ U - dual.q * cost)
    return PricingResult(members=members, U=U, D=D, h=h, cost=cost, weights=w)


def refine_location(
    pricing: PricingResult,
    dual: DualSolution,
    net: TripNetwork,
    econ: NodeEconomics,
    params: ServiceParameters,
    profile: CapacityProfile,
    flows: FlowTotals | None = None,
) -> Station | None:
    """Choose weights for a priced neighbourhood, trading capacity against cost.

    Each integer capacity level from the smallest member capacity up to the
    capacity the neighbourhood's flow could use is tried as a floor; the
    level maximising ``level * (sum_t v_t U_t - q * cost)`` wins, ties going
    to the larger level and then the cheaper placement. Returns None when the
    neighbourhood has no flow to balance.
    """
    flows = flows if flows is not None else compute_flows(net)
    fb = flow_bounds(pricing.members, econ, flows, profile)
    if fb.m_c == 0:
        return None
    gain = float(profile.v @ pricing.U)
    best = None
    for level in range(fb.m_min, max(fb.m_min, fb.m_cbar) + 1):
        placed = min_cost_weights(net, econ, params.walk_radius, pricing.members, capacity_floor=level)
        if placed is None:
            continue
        w, cost = placed
        score = level * (gain - dual.q * cost)
        key = (score, level, -cost)
        if best is None or _better(key, best[0]):
            best = (key, w)
    if best is None:
        raise AssertionError(f"no feasible placement for neighbourhood {pricing.members}")
    return Station.from_weights(net, econ, pricing.members, best[1])


def _better(a, b) -> bool:
    tol = 1e-9 * max(1.0, abs(a[0]), abs(b[0]))
    if abs(a[0] - b[0]) > tol:
        return a[0] > b[0]
    if a[1] != b[1]:
        return a[1] > b[1]
    return a[2] > b[2] + 1e-12


def min_cost_location(
    members: Sequence[int],
    net: TripNetwork,
    econ: NodeEconomics,
    params: ServiceParameters,
    profile: CapacityProfile,
    flows: FlowTotals | None = None,
) -> Station:
    """Cheapest placement of ``members`` that keeps the capacity its flow can use.

    If the walking limits make that capacity floor unreachable, the floor is
    lowered one pair at a time.
    """
    members = sorted(int(n) for n in members)
    flows = flows if flows is not None else compute_flows(net)
    fb = flow_bounds(members, econ, flows, profile)
    for floor in range(fb.m_cbar, fb.m_min - 1, -1):
        placed = min_cost_weights(net, econ, params.walk_radius, members, capacity_floor=floor)
        if placed is not None:
            return Station.from_weights(net, econ, members, placed[0])
    placed = min_cost_weights(net, econ, params.walk_radius, members)
    if placed is None:
        raise StationError(f"neighbourhood {tuple(members)} has no feasible station location")
    return Station.from_weights(net, econ, members, placed[0])


def greatest_flow(
    net: TripNetwork,
    econ: NodeEconomics,
    params: ServiceParameters,
    profile: CapacityProfile,
    flows: FlowTotals | None = None,
) -> tuple[tuple[int, ...], float]:
    """Neighbourhood of the single station that can balance the most trips, and that flow."""
    flows = flows if flows is not None else compute_flows(net)
    lp, B, loc = _selection_model(net, params, "greatest-flow", "max")
    inf = float("inf")
    m = lp.add_var("m", lb=1.0, ub=float(econ.pair_capacity.max()), integer=True)
    lp.add_constraint(
        [(m, 1.0)] + [(loc.alpha[n], -float(econ.pair_capacity[n])) for n in range(net.n_nodes)],
        "<=",
        0.5,
        "mcap",
    )
    y = []
    for t in range(net.n_periods):
        yt = lp.add_var(f"y[{t}]", ub=inf)
        out_terms = [(B[n], -2.0 * float(flows.outward[t, n])) for n in range(net.n_nodes)]
        in_terms = [(B[n], -2.0 * float(flows.inward[t, n])) for n in range(net.n_nodes)]
        lp.add_constraint([(yt, 1.0)] + out_terms, "<=", 0.0, f"yout[{t}]")
        lp.add_constraint([(yt, 1.0)] + in_terms, "<=", 0.0, f"yin[{t}]")
        lp.add_constraint([(yt, 1.0), (m, -float(profile.pair_capacity[t]))], "<=", 0.0, f"ycap[{t}]")
        y.append(yt)
    lp.set_objective([(j, 1.0) for j in y])
    out = solve_milp(lp)
    if out.status != OPTIMAL:
        raise SolverError(f"greatest-flow model failed: {out.status}")
    members = _chosen(out.values, B)
    return members, float(out.objective)


def greatest_flow_station(
    net: TripNetwork,
    econ: NodeEconomics,
    params: ServiceParameters,
    profile: CapacityProfile,
    flows: FlowTotals | None = None,
) -> Station:
    flows = flows if flows is not None else compute_flows(net)
    members, _ = greatest_flow(net, econ, params, profile, flows)
    return min_cost_location(members, net, econ, params, profile, flows)
