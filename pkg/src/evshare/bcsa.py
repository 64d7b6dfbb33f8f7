"""Balanced charging station algorithm: column generation over stations.

Starting from the greatest-flow station, the loop prices a new station of
the current target neighbourhood size against the relaxation duals. A
station with positive reduced benefit is placed and added to the pool; a
failed pricing round lowers the target size by one. When the size reaches
zero the integer master is solved over the generated pool.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .capacity import CapacityProfile, capacity_profile
from .instance import NodeEconomics, ServiceParameters, TripNetwork, compute_flows
from .master import MasterSolution, Station, build_master, solve_integer, solve_relaxation
from .pricing import H_EPS, greatest_flow_station, max_neighborhood_size, price_station, refine_location

log = logging.getLogger(__name__)


@dataclass
class IterationRecord:
    iteration: int
    size: int
    h: float | None
    accepted: bool
    pool_size: int
    relaxation_objective: float
    elapsed: float
    members: list[int] | None = None
    note: str = ""


@dataclass
class BcsaTrace:
    records: list[IterationRecord]
    pool: list[Station]
    max_size: int
    relaxation: MasterSolution
    solution: MasterSolution | None
    complete: bool = True
    reason: str = ""
    elapsed: float = 0.0
    relaxation_history: list[float] = field(default_factory=list)

    @property
    def relaxation_objective(self) -> float:
        return self.relaxation.objective

    def accepted_objectives(self) -> list[float]:
        """Relaxation objective after the initial pool and after every accepted station."""
        return list(self.relaxation_history)

    def write_jsonl(self, path: str | Path) -> Path:
        path = Path(path)
        with path.open("w", encoding="utf-8") as fh:
            for rec in self.records:
                fh.write(json.dumps(asdict(rec)) + "\n")
        return path


def default_iteration_cap(net: TripNetwork) -> int:
    return 10 * net.n_nodes * net.n_periods


def run_bcsa(
    net: TripNetwork,
    econ: NodeEconomics,
    params: ServiceParameters,
    profile: CapacityProfile | None = None,
    max_iterations: int | None = None,
    time_limit: float | None = None,
    milp_time_limit: float | None = None,
    eps: float = H_EPS,
) -> BcsaTrace:
    """Run column generation and the final integer solve.

    ``max_iterations`` caps pricing rounds (default ``10 * |N| * periods``)
    and ``time_limit`` caps the column-generation loop in seconds. Hitting
    either still solves the integer master on the current pool, but the
    trace is flagged incomplete.
    """
    t0 = time.perf_counter()
    profile = profile or capacity_profile(net, params)
    flows = compute_flows(net)
    cap = default_iteration_cap(net) if max_iterations is None else max_iterations

    pool = [greatest_flow_station(net, econ, params, profile, flows)]
    excluded = [pool[0].members]
    size = max_neighborhood_size(net, params.walk_radius)
    max_size = size
    relax, dual = solve_relaxation(build_master(net, econ, params, profile, pool))
    history = [relax.objective]
    records: list[IterationRecord] = []
    complete, reason = True, ""
    it = 0
    while size > 0:
        if it >= cap:
            complete, reason = False, f"iteration cap {cap} reached"
            break
        if time_limit is not None and time.perf_counter() - t0 > time_limit:
            complete, reason = False, f"time limit {time_limit}s reached"
            break
        it += 1
        res = price_station(dual, net, econ, params, profile, excluded, size)
        if res is None or res.h <= eps:
            records.append(
                IterationRecord(it, size, None if res is None else res.h, False, len(pool), relax.objective,
                                time.perf_counter() - t0, note="no improving station")
            )
            size -= 1
            continue
        station = refine_location(res, dual, net, econ, params, profile, flows)
        if station is None:
            excluded.append(res.members)
            records.append(
                IterationRecord(it, size, res.h, False, len(pool), relax.objective, time.perf_counter() - t0,
                                list(res.members), note="neighbourhood carries no flow")
            )
            continue
        pool.append(station)
        excluded.append(station.members)
        relax, dual = solve_relaxation(build_master(net, econ, params, profile, pool))
        history.append(relax.objective)
        records.append(
            IterationRecord(it, size, res.h, True, len(pool), relax.objective, time.perf_counter() - t0,
                            list(station.members))
        )
        log.debug("iteration %d size %d h=%.4g objective %.6g", it, size, res.h, relax.objective)

    final = solve_integer(build_master(net, econ, params, profile, pool, relax=False), time_limit=milp_time_limit)
    return BcsaTrace(
        records=records,
        pool=pool,
        max_size=max_size,
        relaxation=relax,
        solution=final,
        complete=complete,
        reason=reason,
        elapsed=time.perf_counter() - t0,
        relaxation_history=history,
    )
