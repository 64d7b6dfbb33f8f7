"""Station location as a convex combination of neighbourhood nodes under l1 walking limits."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .instance import NodeEconomics, TripNetwork, max_station_distance
from .solver import OPTIMAL, LinearModel, solve_lp


@dataclass
class LocationVars:
    alpha: dict[int, int]  # node -> variable
    sx: int
    sy: int


def add_location(
    lp: LinearModel,
    net: TripNetwork,
    walk_radius: float,
    members: Sequence[int] | None = None,
    select: Sequence[int] | None = None,
    tag: str = "",
) -> LocationVars:
    """Add weights, coordinates and walking-distance rows to ``lp``.

    Pass ``members`` for a fixed neighbourhood, or ``select`` (one binary
    variable per node) to let the model choose it. With ``select`` the
    distance row of a node is relaxed by ``(1 - B_n)(d_n - w)``, and the
    l1 norm is linearised with per-node x/y deviation variables.
    """
    if (members is None) == (select is None):
        raise ValueError("give exactly one of members or select")
    nodes = list(members) if members is not None else list(range(net.n_nodes))
    inf = float("inf")
    alpha = {n: lp.add_var(f"a{tag}[{n}]", ub=1.0) for n in nodes}
    sx = lp.add_var(f"sx{tag}", lb=-inf)
    sy = lp.add_var(f"sy{tag}", lb=-inf)
    lp.add_constraint([(sx, 1.0)] + [(alpha[n], -float(net.x[n])) for n in nodes], "==", 0.0, f"locx{tag}")
    lp.add_constraint([(sy, 1.0)] + [(alpha[n], -float(net.y[n])) for n in nodes], "==", 0.0, f"locy{tag}")
    lp.add_constraint([(alpha[n], 1.0) for n in nodes], "==", 1.0, f"convex{tag}")
    far = max_station_distance(net)
    for k, n in enumerate(nodes):
        dx = lp.add_var(f"dx{tag}[{n}]")
        dy = lp.add_var(f"dy{tag}[{n}]")
        xn, yn = float(net.x[n]), float(net.y[n])
        lp.add_constraint([(dx, 1.0), (sx, -1.0)], ">=", -xn, f"dxp{tag}[{n}]")
        lp.add_constraint([(dx, 1.0), (sx, 1.0)], ">=", xn, f"dxm{tag}[{n}]")
        lp.add_constraint([(dy, 1.0), (sy, -1.0)], ">=", -yn, f"dyp{tag}[{n}]")
        lp.add_constraint([(dy, 1.0), (sy, 1.0)], ">=", yn, f"dym{tag}[{n}]")
        if select is None:
            lp.add_constraint([(dx, 1.0), (dy, 1.0)], "<=", walk_radius, f"walk{tag}[{n}]")
        else:
            b = int(select[k])
            slack = float(far[n]) - walk_radius
            lp.add_constraint([(dx, 1.0), (dy, 1.0), (b, slack)], "<=", float(far[n]), f"walk{tag}[{n}]")
            lp.add_constraint([(alpha[n], 1.0), (b, -1.0)], "<=", 0.0, f"supp{tag}[{n}]")
    return LocationVars(alpha=alpha, sx=sx, sy=sy)


def has_feasible_center(net: TripNetwork, walk_radius: float, members: Sequence[int]) -> bool:
    """True if some convex combination of the members is within walking distance of all of them."""
    if len(members) == 1:
        return True
    lp = LinearModel("center")
    add_location(lp, net, walk_radius, members=members)
    return solve_lp(lp).status == OPTIMAL


def min_cost_weights(
    net: TripNetwork,
    econ: NodeEconomics,
    walk_radius: float,
    members: Sequence[int],
    capacity_floor: float | None = None,
) -> tuple[np.ndarray, float] | None:
    """Cheapest feasible convex weights over ``members``; None if infeasible.

    ``capacity_floor`` requires ``weights @ capacity + 0.5 >= floor``. Among
    equally cheap weights, mass is pushed onto the lowest-indexed members.
    """
    members = list(members)
    if len(members) == 1:
        if capacity_floor is not None and econ.pair_capacity[members[0]] + 0.5 < capacity_floor - 1e-9:
            return None
        return np.ones(1), float(econ.pair_cost[members[0]])

    def model():
        lp = LinearModel("oa")
        loc = add_location(lp, net, walk_radius, members=members)
        if capacity_floor is not None:
            lp.add_constraint(
                [(loc.alpha[n], float(econ.pair_capacity[n])) for n in members],
                ">=",
                float(capacity_floor) - 0.5,
                "capfloor",
            )
        return lp, loc

    lp, loc = model()
    lp.set_objective([(loc.alpha[n], float(econ.pair_cost[n])) for n in members], "min")
    first = solve_lp(lp)
    if first.status != OPTIMAL:
        return None
    best = first.objective
    lp, loc = model()
    cost_terms = [(loc.alpha[n], float(econ.pair_cost[n])) for n in members]
    lp.add_constraint(cost_terms, "<=", best + 1e-9 * max(1.0, abs(best)), "costcap")
    lp.set_objective([(loc.alpha[n], float(k)) for k, n in enumerate(members)], "min")
    second = solve_lp(lp)
    out = second if second.status == OPTIMAL else first
    w = np.clip(np.array([out.values[loc.alpha[n]] for n in members]), 0.0, None)
    w /= w.sum()
    return w, float(w @ econ.pair_cost[members])
