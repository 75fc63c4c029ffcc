"""
Default synthetic campaign: a 400 m x 200 m campus block with a handful of
tall buildings, four ground UEs and two loop trajectories (35 m rooftop
height, 70 m aerial height) flown around the block perimeter.

Coordinates: x east, y north, z up, meters; the origin is the south-west
corner of the area.
"""

from __future__ import annotations

from .field import Building, EnvironmentModel
from .sounder import FlightPlan, rectangle_loop

AREA = (400.0, 200.0)

BUILDINGS = (
    # around UE1 in the south-east parking lot: west, north and east sides
    Building(290.0, 40.0, 315.0, 80.0, 25.0),
    Building(345.0, 80.0, 395.0, 100.0, 30.0),
    Building(390.0, 30.0, 398.0, 50.0, 15.0),
    # east of UE2 near the centre
    Building(240.0, 80.0, 262.0, 130.0, 40.0),
    # south and east of UE3/UE4 in the north-west corner
    Building(15.0, 125.0, 70.0, 140.0, 20.0),
    Building(105.0, 160.0, 125.0, 195.0, 25.0),
    # scattered campus blocks
    Building(140.0, 30.0, 180.0, 60.0, 20.0),
    Building(270.0, 150.0, 320.0, 185.0, 30.0),
)

# ue_id -> (x, y, z)
UE_POSITIONS = {
    1: (360.0, 35.0, 1.5),
    2: (200.0, 100.0, 1.5),
    3: (40.0, 170.0, 1.5),
    4: (52.0, 162.0, 1.5),
}

ALTITUDES_M = (35.0, 70.0)


def default_environment(seed: int = 0, **overrides) -> EnvironmentModel:
    params = dict(area=AREA, buildings=BUILDINGS, seed=seed)
    params.update(overrides)
    return EnvironmentModel(**params)


def default_flight_plan(altitude_m: float = 35.0, **overrides) -> FlightPlan:
    """Perimeter loop of the area: 1200 m, i.e. 6001 captures at the default cadence."""
    params = dict(waypoints=rectangle_loop(0.0, 0.0, AREA[0], AREA[1]), altitude_m=altitude_m)
    params.update(overrides)
    return FlightPlan(**params)


def default_ue_specs() -> list:
    return [(uid, pos) for uid, pos in sorted(UE_POSITIONS.items())]
