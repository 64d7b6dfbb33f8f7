"""Solution files and independent re-validation of master solutions."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .capacity import CapacityProfile
from .instance import NodeEconomics, ServiceParameters, TripNetwork, compute_flows
from .master import MasterSolution, Station

TOL = 1e-6


def _clean(v: float) -> float | int:
    r = round(v)
    return int(r) if abs(v - r) < 1e-9 else float(v)


def solution_to_dict(
    net: TripNetwork,
    stations: Sequence[Station],
    sol: MasterSolution,
    profile: CapacityProfile,
    method: str = "",
) -> dict:
    out_stations = []
    for s, st in enumerate(stations):
        cx, cy = st.centroid(net)
        out_stations.append(
            {
                "members": list(st.members),
                "member_ids": [net.ids[n] for n in st.members],
                "weights": list(st.weights),
                "x": st.x,
                "y": st.y,
                "centroid_x": cx,
                "centroid_y": cy,
                "cost": st.cost,
                "capacity": st.capacity,
                "pairs": _clean(float(sol.pairs[s])),
            }
        )
    periods = []
    for t in range(net.n_periods):
        def triples(F):
            s_idx, n_idx = np.nonzero(np.abs(F) > 1e-12)
            return [[int(s), int(n), _clean(float(F[s, n]))] for s, n in zip(s_idx, n_idx)]

        periods.append(
            {
                "inflow": triples(sol.fplus[t]),
                "outflow": triples(sol.fminus[t]),
                "unmet": [[_clean(float(v)) for v in row] for row in sol.unmet[t]],
            }
        )
    return {
        "method": method,
        "status": sol.status,
        "objective": _clean(sol.objective),
        "pair_capacity": list(profile.pair_capacity),
        "stations": out_stations,
        "periods": periods,
    }


def write_solution(path: str | Path, doc: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    return path


def solution_from_dict(doc: dict, net: TripNetwork) -> tuple[list[Station], MasterSolution, CapacityProfile | None]:
    stations = [
        Station(
            members=tuple(int(n) for n in s["members"]),
            weights=tuple(float(w) for w in s["weights"]),
            x=float(s["x"]),
            y=float(s["y"]),
            cost=float(s["cost"]),
            capacity=int(s["capacity"]),
        )
        for s in doc["stations"]
    ]
    T, N, S = net.n_periods, net.n_nodes, len(stations)
    if len(doc["periods"]) != T:
        raise ValueError(f"solution has {len(doc['periods'])} periods, instance has {T}")
    fplus = np.zeros((T, S, N))
    fminus = np.zeros((T, S, N))
    unmet = np.zeros((T, N, N))
    for t, p in enumerate(doc["periods"]):
        for s, n, v in p["inflow"]:
            fplus[t, s, n] = v
        for s, n, v in p["outflow"]:
            fminus[t, s, n] = v
        unmet[t] = np.asarray(p["unmet"], dtype=float).reshape(N, N)
    sol = MasterSolution(
        status=doc.get("status", ""),
        objective=float(doc["objective"]),
        fplus=fplus,
        fminus=fminus,
        unmet=unmet,
        pairs=np.array([float(s["pairs"]) for s in doc["stations"]]),
    )
    prof = CapacityProfile.fixed(doc["pair_capacity"]) if "pair_capacity" in doc else None
    return stations, sol, prof


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


def check_solution(
    net: TripNetwork,
    econ: NodeEconomics,
    params: ServiceParameters,
    profile: CapacityProfile,
    stations: Sequence[Station],
    sol: MasterSolution,
    tol: float = TOL,
    require_integral: bool = True,
) -> list[CheckResult]:
    """Re-evaluate every master constraint against ``sol``; one result per family."""
    flows = compute_flows(net)
    T, N = net.n_periods, net.n_nodes
    S = len(stations)
    v = profile.v
    results = []

    def add(name, worst, detail=""):
        results.append(CheckResult(name, bool(worst <= tol), detail or f"worst violation {worst:.3g}"))

    bad = [k for k, s in enumerate(stations) if s.violations(net, params)]
    results.append(CheckResult("stations", not bad, f"invalid stations {bad}" if bad else "all stations valid"))

    neg = min(sol.fplus.min(initial=0.0), sol.fminus.min(initial=0.0), sol.unmet.min(initial=0.0), sol.pairs.min(initial=0.0))
    add("non-negativity", max(0.0, -neg))

    member = np.zeros((S, N), dtype=bool)
    for s, st in enumerate(stations):
        member[s, list(st.members)] = True
    outside = np.abs(sol.fplus[:, ~member]).max(initial=0.0)
    outside = max(outside, np.abs(sol.fminus[:, ~member]).max(initial=0.0))
    add("neighbourhood-support", outside)

    load = sol.fplus.sum(axis=2) + sol.fminus.sum(axis=2)  # (T, S)
    add("station capacity", (load - v[:, None] * sol.pairs[None, :]).max(initial=0.0))
    arr = sol.fplus.sum(axis=1) + sol.unmet.sum(axis=1)
    add("arrivals", np.abs(arr - flows.inward).max(initial=0.0))
    dep = sol.fminus.sum(axis=1) + sol.unmet.sum(axis=2)
    add("departures", np.abs(dep - flows.outward).max(initial=0.0))
    bal = sol.fplus.sum(axis=2) - sol.fminus.sum(axis=2)
    add("station balance", np.abs(bal).max(initial=0.0))
    add("trip integrity", (sol.unmet - net.od).max(initial=0.0))

    spend = float(sum(st.cost * z for st, z in zip(stations, sol.pairs)))
    over = spend - params.budget if math.isfinite(params.budget) else 0.0
    add("budget", over, f"spend {spend:.6g} of {params.budget:.6g}")
    limit = np.array([st.capacity for st in stations], dtype=float)
    add("pair limit", (sol.pairs - limit).max(initial=0.0))
    if require_integral:
        frac = 0.0
        for arr_ in (sol.pairs, sol.fplus, sol.fminus, sol.unmet):
            if arr_.size:
                frac = max(frac, float(np.abs(arr_ - np.round(arr_)).max()))
        add("integrality", frac)
    add("objective", abs(float(sol.unmet.sum()) - sol.objective))
    return results
