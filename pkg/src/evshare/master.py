"""The balanced-flow master program over a fixed pool of stations.

For every period the model assigns node arrivals (``fplus``) and departures
(``fminus``) to nearby stations, requires each station to be balanced, and
counts the trips nobody can serve in ``unmet``. The number of parking pairs
per station is limited by its capacity and by the global budget.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .capacity import CapacityProfile
from .instance import NodeEconomics, ServiceParameters, TripNetwork, compute_flows
from .solver import (
    INFEASIBLE,
    OPTIMAL,
    TIME_LIMIT,
    UNBOUNDED,
    LinearModel,
    SolverError,
    solve_lp,
    solve_milp,
)

GEOM_TOL = 1e-6


class StationError(ValueError):
    pass


def round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5 + 1e-9))


@dataclass(frozen=True)
class Station:
    """A candidate site: a neighbourhood of nodes and a convex-combination location.

    ``members`` are sorted node indices; ``weights`` is the convex weight of
    each member, and ``(x, y)`` must equal the weighted member coordinates.
    """

    members: tuple[int, ...]
    weights: tuple[float, ...]
    x: float
    y: float
    cost: float
    capacity: int

    @classmethod
    def at_node(cls, net: TripNetwork, econ: NodeEconomics, n: int) -> "Station":
        return cls(
            members=(int(n),),
            weights=(1.0,),
            x=float(net.x[n]),
            y=float(net.y[n]),
            cost=float(econ.pair_cost[n]),
            capacity=int(econ.pair_capacity[n]),
        )

    @classmethod
    def from_weights(
        cls,
        net: TripNetwork,
        econ: NodeEconomics,
        members: Sequence[int],
        weights: Sequence[float],
        capacity: int | None = None,
    ) -> "Station":
        order = np.argsort(members)
        members = tuple(int(members[i]) for i in order)
        w = np.clip(np.asarray([weights[i] for i in order], dtype=float), 0.0, None)
        w = w / w.sum()
        idx = list(members)
        if capacity is None:
            capacity = round_half_up(float(w @ econ.pair_capacity[idx]))
        return cls(
            members=members,
            weights=tuple(float(v) for v in w),
            x=float(w @ net.x[idx]),
            y=float(w @ net.y[idx]),
            cost=float(w @ econ.pair_cost[idx]),
            capacity=int(capacity),
        )

    def indicator(self, n_nodes: int) -> np.ndarray:
        b = np.zeros(n_nodes, dtype=bool)
        b[list(self.members)] = True
        return b

    def centroid(self, net: TripNetwork) -> tuple[float, float]:
        idx = list(self.members)
        return float(net.x[idx].mean()), float(net.y[idx].mean())

    def violations(
        self,
        net: TripNetwork,
        params: ServiceParameters,
        econ: NodeEconomics | None = None,
        tol: float = GEOM_TOL,
    ) -> list[str]:
        """Broken station invariants; cost/capacity consistency is checked only with ``econ``."""
        out = []
        if not self.members:
            return ["empty neighbourhood"]
        if len(set(self.members)) != len(self.members) or list(self.members) != sorted(self.members):
            out.append("members must be sorted and distinct")
        if min(self.members) < 0 or max(self.members) >= net.n_nodes:
            return out + ["member index out of range"]
        if len(self.weights) != len(self.members):
            return out + ["one weight per member required"]
        w = np.asarray(self.weights)
        idx = list(self.members)
        if np.any(w < -tol) or abs(w.sum() - 1.0) > tol:
            out.append("weights must be non-negative and sum to 1")
        if abs(w @ net.x[idx] - self.x) > tol or abs(w @ net.y[idx] - self.y) > tol:
            out.append("location is not the weighted member location")
        d = np.abs(net.x[idx] - self.x) + np.abs(net.y[idx] - self.y)
        if np.any(d > params.walk_radius + tol):
            out.append("a member lies beyond the walking radius")
        if not self.cost > 0:
            out.append("pair cost must be > 0")
        if self.capacity < 1:
            out.append("capacity must be >= 1 pair")
        if econ is not None:
            if abs(w @ econ.pair_cost[idx] - self.cost) > tol:
                out.append("cost is not the weighted member cost")
            if self.capacity != round_half_up(float(w @ econ.pair_capacity[idx])):
                out.append("capacity is not the rounded weighted member capacity")
        return out


def node_stations(net: TripNetwork, econ: NodeEconomics) -> list[Station]:
    """One station on every node (the no-sharing baseline)."""
    return [Station.at_node(net, econ, n) for n in range(net.n_nodes)]


@dataclass
class MasterModel:
    lp: LinearModel
    net: TripNetwork
    params: ServiceParameters
    profile: CapacityProfile
    stations: list[Station]
    relax: bool
    trip_integrity: bool
    # per period: (station, node, variable) triples
    fplus: list[np.ndarray]
    fminus: list[np.ndarray]
    unmet: np.ndarray  # (T, N, N) variable index
    pairs: np.ndarray  # (S,) variable index
    cap_rows: np.ndarray  # (T, S)
    arr_rows: np.ndarray  # (T, N)
    dep_rows: np.ndarray  # (T, N)
    bal_rows: np.ndarray  # (T, S)
    trip_rows: np.ndarray | None  # (T, N, N)
    budget_row: int | None
    zcap_rows: np.ndarray  # (S,)

    def fix_pairs(self, z: Sequence[float]) -> "MasterModel":
        """Copy of this model with every station's pair count fixed."""
        lp = self.lp.copy()
        for j, v in zip(self.pairs, z):
            lp.fix(int(j), float(v))
        return MasterModel(**{**self.__dict__, "lp": lp})

    def period_block(self, t: int, z: Sequence[float]) -> tuple[np.ndarray, list[str], np.ndarray]:
        """Dense per-period system over columns [fplus; fminus; unmet (column-major)].

        Row order: halved capacity rows (pairs fixed at ``z``), arrival rows,
        departure rows, balance rows, trip-integrity rows.
        """
        fp, fm = self.fplus[t], self.fminus[t]
        cols = np.concatenate([fp[:, 2], fm[:, 2], self.unmet[t].T.reshape(-1)])
        pos = {int(j): k for k, j in enumerate(cols)}
        rows, senses, rhs = [], [], []
        v = self.profile.pair_capacity[t]
        for s in range(len(self.stations)):
            r = np.zeros(len(cols))
            r[[pos[int(j)] for j in fp[fp[:, 0] == s, 2]]] = 1.0
            rows.append(r)
            senses.append("<=")
            rhs.append(v * z[s] / 2)
        labelled = [self.arr_rows[t], self.dep_rows[t], self.bal_rows[t]]
        if self.trip_rows is not None:
            labelled.append(self.trip_rows[t].T.reshape(-1))
        for group in labelled:
            for i in group:
                c = self.lp.constraints[int(i)]
                r = np.zeros(len(cols))
                for j, a in zip(c.index, c.coef):
                    if int(j) in pos:
                        r[pos[int(j)]] = a
                rows.append(r)
                senses.append(c.sense)
                rhs.append(c.rhs)
        A = np.array(rows).reshape(-1, len(cols)) if rows else np.zeros((0, len(cols)))
        return A, senses, np.array(rhs, dtype=float)


@dataclass
class MasterSolution:
    status: str
    objective: float
    fplus: np.ndarray  # (T, S, N)
    fminus: np.ndarray  # (T, S, N)
    unmet: np.ndarray  # (T, N, N)
    pairs: np.ndarray  # (S,)
    solve_time: float = 0.0
    trivial: bool = False  # no solver incumbent; the nothing-built fallback

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


@dataclass
class DualSolution:
    """Dual values of the relaxation, signed so that U, W, q, h are non-negative."""

    U: np.ndarray  # (T, S) station capacity
    P: np.ndarray  # (T, N) arrivals
    G: np.ndarray  # (T, N) departures
    R: np.ndarray  # (T, S) balance
    W: np.ndarray  # (T, N, N) trip integrity
    q: float  # budget
    h: np.ndarray  # (S,) pair limit
    objective: float


def _check_stations(net, params, stations):
    for k, s in enumerate(stations):
        bad = s.violations(net, params)
        if bad:
            raise StationError(f"station {k} {s.members}: " + "; ".join(bad))


def _group(triples: np.ndarray, S: int, N: int):
    by_station: list[list[int]] = [[] for _ in range(S)]
    by_node: list[list[int]] = [[] for _ in range(N)]
    for s, n, j in triples.tolist():
        by_station[s].append(j)
        by_node[n].append(j)
    return by_station, by_node


def build_master(
    net: TripNetwork,
    econ: NodeEconomics,
    params: ServiceParameters,
    profile: CapacityProfile,
    stations: Sequence[Station],
    relax: bool = True,
    trip_integrity: bool = True,
) -> MasterModel:
    """Build the master program over ``stations``.

    With ``relax`` the pair counts are continuous. ``trip_integrity=False``
    drops the rows bounding unmet trips by the OD matrix; it exists only to
    demonstrate why those rows are needed.
    """
    stations = list(stations)
    _check_stations(net, params, stations)
    if len(profile.pair_capacity) != net.n_periods:
        raise ValueError("capacity profile does not match the number of periods")
    T, N, S = net.n_periods, net.n_nodes, len(stations)
    flows = compute_flows(net)
    lp = LinearModel("master", "min")

    by_node: list[list[int]] = [[] for _ in range(N)]
    for s, st in enumerate(stations):
        for n in st.members:
            by_node[n].append(s)

    fplus, fminus = [], []
    unmet = np.zeros((T, N, N), dtype=np.int64)
    for t in range(T):
        fp = [(s, n, lp.add_var(f"Fp[{t},{s},{n}]")) for n in range(N) for s in by_node[n]]
        fm = [(s, n, lp.add_var(f"Fm[{t},{s},{n}]")) for n in range(N) for s in by_node[n]]
        fplus.append(np.array(fp, dtype=np.int64).reshape(-1, 3))
        fminus.append(np.array(fm, dtype=np.int64).reshape(-1, 3))
        for n2 in range(N):
            for n in range(N):
                unmet[t, n, n2] = lp.add_var(f"E[{t},{n},{n2}]", obj=1.0)
    pairs = np.array(
        [lp.add_var(f"z[{s}]", integer=not relax) for s in range(S)], dtype=np.int64
    )

    cap_rows = np.zeros((T, S), dtype=np.int64)
    arr_rows = np.zeros((T, N), dtype=np.int64)
    dep_rows = np.zeros((T, N), dtype=np.int64)
    bal_rows = np.zeros((T, S), dtype=np.int64)
    trip_rows = np.zeros((T, N, N), dtype=np.int64) if trip_integrity else None
    v = profile.pair_capacity
    for t in range(T):
        p_st, p_nd = _group(fplus[t], S, N)
        m_st, m_nd = _group(fminus[t], S, N)
        for s in range(S):
            terms = [(j, 1.0) for j in p_st[s]] + [(j, 1.0) for j in m_st[s]]
            cap_rows[t, s] = lp.add_constraint(terms + [(int(pairs[s]), -float(v[t]))], "<=", 0.0, f"cap[{t},{s}]")
        for n in range(N):
            terms = [(j, 1.0) for j in p_nd[n]] + [(int(unmet[t, n1, n]), 1.0) for n1 in range(N)]
            arr_rows[t, n] = lp.add_constraint(terms, "==", float(flows.inward[t, n]), f"arr[{t},{n}]")
        for n in range(N):
            terms = [(j, 1.0) for j in m_nd[n]] + [(int(unmet[t, n, n2]), 1.0) for n2 in range(N)]
            dep_rows[t, n] = lp.add_constraint(terms, "==", float(flows.outward[t, n]), f"dep[{t},{n}]")
        for s in range(S):
            terms = [(j, 1.0) for j in p_st[s]] + [(j, -1.0) for j in m_st[s]]
            bal_rows[t, s] = lp.add_constraint(terms, "==", 0.0, f"bal[{t},{s}]")
        if trip_rows is not None:
            for n2 in range(N):
                for n in range(N):
                    trip_rows[t, n, n2] = lp.add_constraint(
                        [(int(unmet[t, n, n2]), 1.0)], "<=", float(net.od[t, n, n2]), f"trip[{t},{n},{n2}]"
                    )
    budget_row = None
    if math.isfinite(params.budget):
        budget_row = lp.add_constraint(
            [(int(pairs[s]), stations[s].cost) for s in range(S)], "<=", float(params.budget), "budget"
        )
    zcap_rows = np.array(
        [lp.add_constraint([(int(pairs[s]), 1.0)], "<=", float(stations[s].capacity), f"zcap[{s}]") for s in range(S)],
        dtype=np.int64,
    )
    return MasterModel(
        lp=lp,
        net=net,
        params=params,
        profile=profile,
        stations=stations,
        relax=relax,
        trip_integrity=trip_integrity,
        fplus=fplus,
        fminus=fminus,
        unmet=unmet,
        pairs=pairs,
        cap_rows=cap_rows,
        arr_rows=arr_rows,
        dep_rows=dep_rows,
        bal_rows=bal_rows,
        trip_rows=trip_rows,
        budget_row=budget_row,
        zcap_rows=zcap_rows,
    )


def _primal(mm: MasterModel, x: np.ndarray, status: str, elapsed: float) -> MasterSolution:
    T, N, S = mm.net.n_periods, mm.net.n_nodes, len(mm.stations)
    fplus = np.zeros((T, S, N))
    fminus = np.zeros((T, S, N))
    for t in range(T):
        fp, fm = mm.fplus[t], mm.fminus[t]
        fplus[t, fp[:, 0], fp[:, 1]] = x[fp[:, 2]]
        fminus[t, fm[:, 0], fm[:, 1]] = x[fm[:, 2]]
    unmet = x[mm.unmet] + 0.0
    return MasterSolution(
        status=status,
        objective=float(unmet.sum()),
        fplus=fplus,
        fminus=fminus,
        unmet=unmet,
        pairs=x[mm.pairs].copy(),
        solve_time=elapsed,
    )


def dual_objective(mm: MasterModel, U, P, G, W, q, h) -> float:
    flows = compute_flows(mm.net)
    m = np.array([s.capacity for s in mm.stations], dtype=float)
    val = -float(m @ h) - float((flows.inward * P).sum() + (flows.outward * G).sum())
    if W is not None and mm.trip_integrity:
        val -= float((mm.net.od * W).sum())
    if mm.budget_row is not None:
        val -= mm.params.budget * q
    return val


def solve_relaxation(mm: MasterModel) -> tuple[MasterSolution, DualSolution]:
    """Solve the continuous relaxation and extract duals in the non-negative convention."""
    out = solve_lp(mm.lp)
    if out.status == INFEASIBLE:
        raise AssertionError("master relaxation infeasible: zero flow with all trips unmet is always feasible")
    if out.status == UNBOUNDED:
        raise AssertionError("master relaxation unbounded: objective is bounded below by zero")
    y = -out.duals
    U = y[mm.cap_rows]
    P = y[mm.arr_rows]
    G = y[mm.dep_rows]
    R = y[mm.bal_rows]
    W = y[mm.trip_rows] if mm.trip_rows is not None else np.zeros_like(mm.net.od, dtype=float)
    q = float(y[mm.budget_row]) if mm.budget_row is not None else 0.0
    h = y[mm.zcap_rows]
    dual = DualSolution(U=U, P=P, G=G, R=R, W=W, q=q, h=h, objective=dual_objective(mm, U, P, G, W, q, h))
    return _primal(mm, out.values, OPTIMAL, out.solve_time), dual


def trivial_solution(mm: MasterModel) -> MasterSolution:
    """No stations built: every trip is unmet."""
    T, N, S = mm.net.n_periods, mm.net.n_nodes, len(mm.stations)
    unmet = mm.net.od.astype(float)
    return MasterSolution(
        status=OPTIMAL,
        objective=float(unmet.sum()),
        fplus=np.zeros((T, S, N)),
        fminus=np.zeros((T, S, N)),
        unmet=unmet,
        pairs=np.zeros(S),
    )


def solve_integer(mm: MasterModel, time_limit: float | None = None, backend: str | None = None) -> MasterSolution:
    """Solve with integral pair counts.

    The flows are then re-optimised by simplex with the pair counts fixed, so
    that the returned flows sit on a vertex and are integral.
    """
    if mm.relax:
        raise ValueError("model was built with relax=True; rebuild with relax=False")
    t0 = time.perf_counter()
    out = solve_milp(mm.lp, time_limit=time_limit, backend=backend)
    if out.status == INFEASIBLE:
        raise AssertionError("master program infeasible: zero flow with all trips unmet is always feasible")
    if out.status == UNBOUNDED:
        raise AssertionError("master program unbounded")
    if out.values is None:
        sol = trivial_solution(mm)
        sol.status = TIME_LIMIT
        sol.trivial = True
        sol.solve_time = time.perf_counter() - t0
        return sol
    z = np.round(out.values[mm.pairs])
    fixed = mm.fix_pairs(z)
    polish = solve_lp(fixed.lp)
    if polish.status != OPTIMAL:
        raise SolverError(f"re-solve with fixed pairs failed: {polish.status}")
    x = polish.values.copy()
    flow_idx = np.concatenate([np.concatenate([f[:, 2] for f in mm.fplus + mm.fminus]), mm.unmet.reshape(-1)])
    vals = x[flow_idx]
    if np.max(np.abs(vals - np.round(vals)), initial=0.0) < 1e-6:
        x[flow_idx] = np.round(vals)
    x[mm.pairs] = z
    return _primal(mm, x, out.status, time.perf_counter() - t0)


@dataclass
class DualModel:
    lp: LinearModel
    U: np.ndarray
    P: np.ndarray
    G: np.ndarray
    R: np.ndarray
    W: np.ndarray
    q: int | None
    h: np.ndarray


def build_dual(
    net: TripNetwork,
    econ: NodeEconomics,
    params: ServiceParameters,
    profile: CapacityProfile,
    stations: Sequence[Station],
) -> DualModel:
    """Explicit dual of the master relaxation, for verification."""
    stations = list(stations)
    _check_stations(net, params, stations)
    T, N, S = net.n_periods, net.n_nodes, len(stations)
    flows = compute_flows(net)
    lp = LinearModel("dual", "max")
    inf = math.inf
    U = np.array([[lp.add_var(f"U[{t},{s}]") for s in range(S)] for t in range(T)], dtype=np.int64).reshape(T, S)
    P = np.array(
        [[lp.add_var(f"P[{t},{n}]", lb=-inf, obj=-float(flows.inward[t, n])) for n in range(N)] for t in range(T)]
    )
    G = np.array(
        [[lp.add_var(f"G[{t},{n}]", lb=-inf, obj=-float(flows.outward[t, n])) for n in range(N)] for t in range(T)]
    )
    R = np.array([[lp.add_var(f"R[{t},{s}]", lb=-inf) for s in range(S)] for t in range(T)], dtype=np.int64).reshape(T, S)
    W = np.array(
        [
            [[lp.add_var(f"W[{t},{n},{n2}]", obj=-float(net.od[t, n, n2])) for n2 in range(N)] for n in range(N)]
            for t in range(T)
        ]
    )
    q = lp.add_var("q", obj=-float(params.budget)) if math.isfinite(params.budget) else None
    h = np.array([lp.add_var(f"h[{s}]", obj=-float(st.capacity)) for s, st in enumerate(stations)], dtype=np.int64)
    v = profile.pair_capacity
    for t in range(T):
        for n in range(N):
            for n2 in range(N):
                lp.add_constraint(
                    [(int(G[t, n]), 1.0), (int(P[t, n2]), 1.0), (int(W[t, n, n2]), 1.0)],
                    ">=",
                    -1.0,
                    f"E[{t},{n},{n2}]",
                )
        for s, st in enumerate(stations):
            for n in st.members:
                lp.add_constraint(
                    [(int(U[t, s]), 1.0), (int(P[t, n]), 1.0), (int(R[t, s]), 1.0)], ">=", 0.0, f"Fp[{t},{s},{n}]"
                )
                lp.add_constraint(
                    [(int(U[t, s]), 1.0), (int(G[t, n]), 1.0), (int(R[t, s]), -1.0)], ">=", 0.0, f"Fm[{t},{s},{n}]"
                )
    for s, st in enumerate(stations):
        terms = [(int(h[s]), 1.0)] + [(int(U[t, s]), -float(v[t])) for t in range(T)]
        if q is not None:
            terms.append((q, st.cost))
        lp.add_constraint(terms, ">=", 0.0, f"z[{s}]")
    return DualModel(lp=lp, U=U, P=P, G=G, R=R, W=W, q=q, h=h)


def compute_pg(dual: DualSolution) -> np.ndarray:
    """``pg[t, n, n2] = max(-(P[t, n] + G[t, n2]) / 2, 0)``."""
    return np.maximum(-(dual.P[:, :, None] + dual.G[:, None, :]) / 2.0, 0.0)
