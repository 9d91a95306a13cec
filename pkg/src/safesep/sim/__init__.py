from safesep.sim.airspace import CASE_IDS, Airspace, Intersection, RouteSpec, build_case, load_geometry
from safesep.sim.world import (
    ACCELERATE,
    DECELERATE,
    HOLD,
    N_ACTIONS,
    AircraftState,
    ConflictEvent,
    EpisodeResult,
    SimConfig,
    Status,
    World,
    compute_reward,
    detect_conflicts,
    episode_score,
    observe,
    spawn_schedule,
    step,
)

__all__ = [
    "ACCELERATE", "DECELERATE", "HOLD", "N_ACTIONS", "CASE_IDS",
    "AircraftState", "Airspace", "ConflictEvent", "EpisodeResult", "Intersection",
    "RouteSpec", "SimConfig", "Status", "World",
    "build_case", "compute_reward", "detect_conflicts", "episode_score",
    "load_geometry", "observe", "spawn_schedule", "step",
]
