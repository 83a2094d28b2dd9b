"""Static highway vehicle drops.

Vehicles are placed on a 1-D road as a Poisson point process with a given
linear density. The road is circular by default (wraparound distances), which
removes border effects on a finite segment. Positions are frozen for the whole
simulated time of one drop; statistical variety comes from independent drops.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ScenarioError(ValueError):
    """Invalid scenario parameters or position data."""


@dataclass(frozen=True)
class RoadScenario:
    """One vehicle drop. Vehicle IDs are indices into the sorted position array."""

    length_m: float
    positions: np.ndarray
    density_veh_per_km: float
    wraparound: bool = True

    def __post_init__(self):
        if self.length_m <= 0:
            raise ScenarioError(f"road length must be positive, got {self.length_m}")
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 1:
            raise ScenarioError("positions must be a 1-D array")
        if pos.size and (pos.min() < 0 or pos.max() >= self.length_m):
            raise ScenarioError("positions must lie in [0, length_m)")
        if np.any(np.diff(pos) < 0):
            pos = np.sort(pos)
        object.__setattr__(self, "positions", pos)

    @property
    def n_vehicles(self) -> int:
        return int(self.positions.size)


def generate_drop(density_veh_per_km: float, length_m: float, rng_seed: int) -> RoadScenario:
    """Draw one Poisson drop: count ~ Poisson(density * length / 1000), positions uniform."""
    if length_m <= 0:
        raise ScenarioError(f"road length must be positive, got {length_m}")
    if density_veh_per_km < 0:
        raise ScenarioError(f"density must be non-negative, got {density_veh_per_km}")
    rng = np.random.default_rng(rng_seed)
    mean_count = density_veh_per_km * length_m / 1000.0
    n = rng.poisson(mean_count)
    positions = np.sort(rng.uniform(0.0, length_m, size=n))
    return RoadScenario(length_m=length_m, positions=positions,
                        density_veh_per_km=density_veh_per_km)


def scenario_from_positions(positions, length_m: float, wraparound: bool = True,
                            density_veh_per_km: float | None = None) -> RoadScenario:
    """Build a scenario from an explicit coordinate list (regression fixtures)."""
    pos = np.sort(np.asarray(list(positions), dtype=float))
    if density_veh_per_km is None:
        density_veh_per_km = pos.size / (length_m / 1000.0)
    return RoadScenario(length_m=length_m, positions=pos,
                        density_veh_per_km=density_veh_per_km, wraparound=wraparound)


def scenario_from_file(path, length_m: float, wraparound: bool = True) -> RoadScenario:
    """Read one coordinate per line (meters); blank lines and '#' comments ignored."""
    coords = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            try:
                coords.append(float(text))
            except ValueError as exc:
                raise ScenarioError(f"{path}:{lineno}: not a coordinate: {text!r}") from exc
    return scenario_from_positions(coords, length_m, wraparound)


def distance(scenario: RoadScenario, a: int, b: int) -> float:
    """Distance between two vehicles; on a circular road the shorter arc."""
    n = scenario.n_vehicles
    for vid in (a, b):
        if not (isinstance(vid, (int, np.integer)) and 0 <= vid < n):
            raise LookupError(f"unknown vehicle id {vid} (drop has {n} vehicles)")
    gap = abs(scenario.positions[a] - scenario.positions[b])
    if scenario.wraparound:
        gap = min(gap, scenario.length_m - gap)
    return float(gap)


def distance_matrix(scenario: RoadScenario) -> np.ndarray:
    """All pairwise distances, respecting the wraparound rule. Shape (N, N)."""
    pos = scenario.positions
    gap = np.abs(pos[:, None] - pos[None, :])
    if scenario.wraparound:
        gap = np.minimum(gap, scenario.length_m - gap)
    return gap
