"""UAV downlink planner with a per-slot movable linear transmit array.

Maximizes the total downlink rate for a UAV serving single-antenna ground
users by alternating among three convexified blocks: transmit beamforming
(rank-relaxed covariances), the flight path (frozen-steering distance
bounds), and the element coordinates of the array (global cosine bounds with
a fractional-programming reweighting).
"""

from .scenario import (
    AntennaLayout,
    BeamformerSet,
    Scenario,
    ScenarioError,
    Trajectory,
    load_bundled,
    load_scenario,
    save_scenario,
    validate,
)
from .channel import total_rate
from .driver import AoOptions, AoResult, initialize, optimize

__version__ = "0.1.0"

__all__ = [
    "AntennaLayout",
    "AoOptions",
    "AoResult",
    "BeamformerSet",
    "Scenario",
    "ScenarioError",
    "Trajectory",
    "initialize",
    "load_bundled",
    "load_scenario",
    "optimize",
    "save_scenario",
    "total_rate",
    "validate",
    "__version__",
]
