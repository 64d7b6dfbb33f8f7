"""Throughput of one pair of parking spaces per period."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .instance import ServiceParameters, TripNetwork, distance_matrix


@dataclass(frozen=True)
class CapacityProfile:
    avg_trip_length: tuple[float, ...]  # km
    charge_time: tuple[float, ...]  # hours
    pair_capacity: tuple[int, ...]  # trips per pair per period, always even

    def __post_init__(self):
        for v in self.pair_capacity:
            if v < 0 or v % 2:
                raise ValueError(f"pair capacity must be a non-negative even integer, got {v}")

    @property
    def v(self) -> np.ndarray:
        return np.asarray(self.pair_capacity, dtype=float)

    @classmethod
    def fixed(cls, pair_capacity) -> "CapacityProfile":
        """Profile with the per-period pair capacity given directly."""
        v = tuple(int(x) for x in pair_capacity)
        zeros = tuple(0.0 for _ in v)
        return cls(avg_trip_length=zeros, charge_time=zeros, pair_capacity=v)


def average_trip_length(net: TripNetwork, t: int) -> float:
    """Trip-weighted mean l1 length of period ``t``; 0.0 for an empty period."""
    od = net.od[t]
    total = int(od.sum())
    if total == 0:
        return 0.0
    return float((od * distance_matrix(net)).sum() / total)


def pair_capacity(length_hours: float, market_share: float, handling_time: float, charge_time: float) -> int:
    denom = market_share * (handling_time + charge_time / 2)
    if denom == 0:
        raise ZeroDivisionError("market_share * (handling_time + charge_time / 2) is zero")
    v = 2 * math.floor(length_hours / denom)
    assert v % 2 == 0
    return v


def capacity_profile(net: TripNetwork, params: ServiceParameters) -> CapacityProfile:
    lengths, charges, caps = [], [], []
    for t in range(net.n_periods):
        lt = average_trip_length(net, t)
        at = params.charge_rate * lt
        lengths.append(lt)
        charges.append(at)
        caps.append(pair_capacity(float(net.period_lengths[t]), params.market_share, params.handling_time, at))
    return CapacityProfile(tuple(lengths), tuple(charges), tuple(caps))
