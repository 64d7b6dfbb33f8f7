"""Exhaustive enumeration: every feasible neighbourhood becomes a station up front."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .capacity import CapacityProfile, capacity_profile
from .geometry import has_feasible_center
from .instance import NodeEconomics, ServiceParameters, TripNetwork, compute_flows, distance_matrix
from .master import MasterSolution, Station, build_master, solve_integer
from .pricing import min_cost_location

DEFAULT_CAP = 200_000


class CatalogTooLarge(RuntimeError):
    pass


@dataclass
class StationCatalog:
    stations: list[Station]
    examined: int  # compatible subsets generated, counting repeats across seeds
    accepted: int
    no_center: int  # compatible subsets without a feasible location

    def to_dict(self) -> dict:
        return {
            "examined": self.examined,
            "accepted": self.accepted,
            "no_center": self.no_center,
            "stations": [
                {"members": list(s.members), "weights": list(s.weights), "x": s.x, "y": s.y,
                 "cost": s.cost, "capacity": s.capacity}
                for s in self.stations
            ],
        }

    def write_json(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")
        return path


def candidate_neighborhoods(net: TripNetwork, walk_radius: float, cap: int = DEFAULT_CAP) -> tuple[list[tuple[int, ...]], int]:
    """All node sets, seeded at each node, whose members are pairwise within ``2 * walk_radius``.

    Returns the distinct sets (sorted by size, then members) and the number
    generated before deduplication.
    """
    d = distance_matrix(net)
    near = d <= 2 * walk_radius
    found: set[tuple[int, ...]] = set()
    examined = 0
    for n in range(net.n_nodes):
        others = [m for m in range(net.n_nodes) if m != n and near[n, m]]
        stack = [((n,), 0)]
        while stack:
            chosen, start = stack.pop()
            examined += 1
            found.add(tuple(sorted(chosen)))
            if len(found) > cap:
                raise CatalogTooLarge(f"more than {cap} candidate neighbourhoods")
            for k in range(start, len(others)):
                m = others[k]
                if all(near[m, c] for c in chosen):
                    stack.append((chosen + (m,), k + 1))
    return sorted(found, key=lambda s: (len(s), s)), examined


def enumerate_stations(
    net: TripNetwork,
    econ: NodeEconomics,
    params: ServiceParameters,
    profile: CapacityProfile | None = None,
    cap: int = DEFAULT_CAP,
    threads: int = 1,
) -> StationCatalog:
    profile = profile or capacity_profile(net, params)
    flows = compute_flows(net)
    sets, examined = candidate_neighborhoods(net, params.walk_radius, cap)

    def place(members):
        if not has_feasible_center(net, params.walk_radius, members):
            return None
        return min_cost_location(members, net, econ, params, profile, flows)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            placed = list(ex.map(place, sets))
    else:
        placed = [place(m) for m in sets]
    stations = [s for s in placed if s is not None]
    return StationCatalog(stations=stations, examined=examined, accepted=len(stations),
                          no_center=len(placed) - len(stations))


@dataclass
class EnumerationResult:
    catalog: StationCatalog
    solution: MasterSolution


def run_ee(
    net: TripNetwork,
    econ: NodeEconomics,
    params: ServiceParameters,
    profile: CapacityProfile | None = None,
    time_limit: float | None = None,
    cap: int = DEFAULT_CAP,
    threads: int = 1,
) -> EnumerationResult:
    profile = profile or capacity_profile(net, params)
    catalog = enumerate_stations(net, econ, params, profile, cap=cap, threads=threads)
    mm = build_master(net, econ, params, profile, catalog.stations, relax=False)
    return EnumerationResult(catalog=catalog, solution=solve_integer(mm, time_limit=time_limit))
