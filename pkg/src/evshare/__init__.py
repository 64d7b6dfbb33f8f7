"""Charging-station placement for balanced one-way electric car sharing."""

from .bcsa import BcsaTrace, run_bcsa
from .capacity import CapacityProfile, capacity_profile, pair_capacity
from .enumeration import StationCatalog, enumerate_stations, run_ee
from .instance import (
    InstanceError,
    InstanceParseError,
    InstanceValidationError,
    NodeEconomics,
    ServiceParameters,
    TripNetwork,
    compute_flows,
    generate_synthetic,
    load_instance,
    save_instance,
)
from .master import (
    DualSolution,
    MasterSolution,
    Station,
    build_dual,
    build_master,
    compute_pg,
    node_stations,
    solve_integer,
    solve_relaxation,
)
from .pricing import price_station, refine_location
from .solution import check_solution

__all__ = [
    "BcsaTrace", "CapacityProfile", "DualSolution", "InstanceError", "InstanceParseError",
    "InstanceValidationError", "MasterSolution", "NodeEconomics", "ServiceParameters", "Station",
    "StationCatalog", "TripNetwork", "build_dual", "build_master", "capacity_profile", "check_solution",
    "compute_flows", "compute_pg", "enumerate_stations", "generate_synthetic", "load_instance",
    "node_stations", "pair_capacity", "price_station", "refine_location", "run_bcsa", "run_ee",
    "save_instance", "solve_integer", "solve_relaxation",
]
