"""Fixed-timestep multi-agent simulator for speed-controlled aircraft on routes."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from safesep.errors import ConfigError, ContractViolation
from safesep.sim.airspace import Airspace

DECELERATE, HOLD, ACCELERATE = 0, 1, 2
N_ACTIONS = 3
KT_TO_NM_PER_S = 1.0 / 3600.0
FEATURES_OWN = 3
FEATURES_PER_NEIGHBOR = 3
PAD = 1.0


@dataclass
class SimConfig:
    separation_nm: float = 3.0
    dt: float = 12.0
    v_min: float = 200.0
    v_max: float = 300.0
    v_init: float = 250.0
    delta_v: float = 20.0
    accel_kt_per_s: float = 1.0
    neighbors: int = 2
    dist_norm_nm: float = 50.0
    warning_radius_nm: float = 10.0
    alpha: float = 0.1
    beta: float = 0.0
    per_route_count: int = 10
    interval_s: tuple[float, float] = (180.0, 360.0)
    max_steps: int = 2000

    def __post_init__(self):
        self.interval_s = tuple(float(x) for x in self.interval_s)
        if self.separation_nm <= 0 or self.dt <= 0:
            raise ConfigError("separation and dt must be positive")
        if not self.v_min < self.v_max or not self.v_min <= self.v_init <= self.v_max:
            raise ConfigError("need v_min < v_max and v_init within bounds")
        if self.neighbors < 0 or self.per_route_count < 1:
            raise ConfigError("neighbors >= 0 and per_route_count >= 1 required")
        lo, hi = self.interval_s
        if not 0 < lo <= hi:
            raise ConfigError(f"bad inter-arrival interval {self.interval_s}")

    @property
    def obs_dim(self) -> int:
        return FEATURES_OWN + FEATURES_PER_NEIGHBOR * self.neighbors


class Status(str, enum.Enum):
    PENDING = "pending"
    ACTIVE = "active"
    EXITED = "exited"
    IN_CONFLICT = "in_conflict"


@dataclass
class AircraftState:
    id: int
    route_id: str
    spawn_time: float
    along_track: float = 0.0
    speed: float = 0.0
    speed_cmd: float = 0.0
    status: Status = Status.PENDING


@dataclass(frozen=True)
class ConflictEvent:
    time: float
    pair: tuple[int, int]
    separation: float


@dataclass
class EpisodeResult:
    score: int
    conflicts: list[ConflictEvent]
    spawned: int
    steps: int
    complete: bool = True


def spawn_schedule(interval_range, per_route_count: int, rng: np.random.Generator, route_ids=("R1",)):
    """Spawn times per route: first at t=0, then uniform gaps in ``interval_range``."""
    lo, hi = interval_range
    if not 0 < lo <= hi:
        raise ConfigError(f"bad inter-arrival interval {interval_range}")
    if per_route_count < 1:
        raise ConfigError("per_route_count must be >= 1")
    out = []
    for rid in route_ids:
        t = 0.0
        out.append((rid, t))
        for _ in range(per_route_count - 1):
            t += float(rng.uniform(lo, hi))
            out.append((rid, t))
    return out


def detect_conflicts(positions: Mapping[int, np.ndarray], separation_nm: float, time: float = 0.0) -> list[ConflictEvent]:
    """All pairs closer than ``separation_nm``; ids ordered within and across pairs."""
    ids = sorted(positions)
    if len(ids) < 2:
        return []
    pts = np.array([positions[i] for i in ids], dtype=float)
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    ii, jj = np.nonzero(np.triu(dist < separation_nm, k=1))
    return [ConflictEvent(time, (ids[i], ids[j]), float(dist[i, j])) for i, j in zip(ii, jj)]


def _advance(v0: float, v_cmd: float, accel: float, dt: float) -> tuple[float, float]:
    """New speed and distance flown (NM) with speed ramping linearly toward ``v_cmd``."""
    gap = v_cmd - v0
    if gap == 0.0:
        return v0, v0 * dt * KT_TO_NM_PER_S
    t_ramp = abs(gap) / accel
    if t_ramp >= dt:
        v1 = v0 + np.sign(gap) * accel * dt
        return v1, 0.5 * (v0 + v1) * dt * KT_TO_NM_PER_S
    return v_cmd, (0.5 * (v0 + v_cmd) * t_ramp + v_cmd * (dt - t_ramp)) * KT_TO_NM_PER_S


class World:
    """One episode of traffic in an airspace. Mutated in place by :meth:`step`."""

    def __init__(self, airspace: Airspace, config: SimConfig, schedule: Iterable[tuple[str, float]]):
        self.airspace = airspace
        self.config = config
        self.time = 0.0
        self.steps = 0
        self.conflicts: list[ConflictEvent] = []
        order = {rid: k for k, rid in enumerate(airspace.route_ids)}
        sched = sorted(schedule, key=lambda rt: (rt[1], order[rt[0]]))
        self.aircraft: dict[int, AircraftState] = {
            i: AircraftState(i, rid, float(t)) for i, (rid, t) in enumerate(sched)
        }
        self._routes = {r.id: r for r in airspace.routes}
        self._nodes = {rid: [s for s, _ in airspace.nodes(rid)] for rid in airspace.route_ids}
        self._shared = _shared_nodes(airspace)
        self._pos: dict[int, np.ndarray] = {}
        self._activate_due()

    @classmethod
    def from_seed(cls, airspace: Airspace, config: SimConfig, rng: np.random.Generator) -> "World":
        sched = spawn_schedule(config.interval_s, config.per_route_count, rng, airspace.route_ids)
        return cls(airspace, config, sched)

    # -- queries ---------------------------------------------------------
    @property
    def active_ids(self) -> list[int]:
        return [i for i, a in self.aircraft.items() if a.status is Status.ACTIVE]

    @property
    def done(self) -> bool:
        return all(a.status in (Status.EXITED, Status.IN_CONFLICT) for a in self.aircraft.values())

    def position(self, aircraft_id: int) -> np.ndarray:
        a = self.aircraft[aircraft_id]
        return self._routes[a.route_id].point_at(a.along_track)

    def positions(self) -> dict[int, np.ndarray]:
        return dict(self._pos)

    def route_length(self, route_id: str) -> float:
        return self._routes[route_id].length

    def result(self) -> EpisodeResult:
        bad = {i for ev in self.conflicts for i in ev.pair}
        exited = sum(1 for a in self.aircraft.values() if a.status is Status.EXITED and a.id not in bad)
        return EpisodeResult(exited, list(self.conflicts), len(self.aircraft), self.steps, self.done)

    # -- dynamics --------------------------------------------------------
    def _activate_due(self):
        cfg = self.config
        for a in self.aircraft.values():
            if a.status is Status.PENDING and a.spawn_time <= self.time + 1e-9:
                a.status = Status.ACTIVE
                a.along_track = 0.0
                a.speed = a.speed_cmd = cfg.v_init
                self._pos[a.id] = self.position(a.id)

    def step(self, actions: Mapping[int, int], dt: float | None = None) -> list[ConflictEvent]:
        cfg = self.config
        dt = cfg.dt if dt is None else float(dt)
        if dt <= 0:
            raise ContractViolation("dt must be positive")
        active = self.active_ids
        extra = set(actions) - set(active)
        if extra:
            raise ContractViolation(f"actions for inactive or unknown aircraft: {sorted(extra)}")
        missing = set(active) - set(actions)
        if missing:
            raise ContractViolation(f"no action for active aircraft: {sorted(missing)}")

        for i in active:
            a = self.aircraft[i]
            act = int(actions[i])
            if act not in (DECELERATE, HOLD, ACCELERATE):
                raise ContractViolation(f"invalid action {act}")
            a.speed_cmd = min(max(a.speed_cmd + (act - HOLD) * cfg.delta_v, cfg.v_min), cfg.v_max)
            a.speed, flown = _advance(a.speed, a.speed_cmd, cfg.accel_kt_per_s, dt)
            a.along_track += flown
            length = self._routes[a.route_id].length
            if a.along_track >= length:
                a.along_track = length
                a.status = Status.EXITED
            self._pos[i] = self.position(i)
        for i in active:
            if self.aircraft[i].status is Status.EXITED:
                self._pos.pop(i)

        self.time += dt
        self.steps += 1
        events = detect_conflicts(self._pos, cfg.separation_nm, self.time)
        for ev in events:
            for i in ev.pair:
                self.aircraft[i].status = Status.IN_CONFLICT
                self._pos.pop(i, None)
        self.conflicts.extend(events)
        self._activate_due()
        return events

    # -- observation helpers ----------------------------------------------
    def _next_node_distance(self, route_id: str, s: float) -> float | None:
        for ns in self._nodes[route_id]:
            if ns > s + 1e-9:
                return ns - s
        return None

    def _shared_distance(self, ego: AircraftState, other: AircraftState) -> float | None:
        for sa, sb in self._shared[(ego.route_id, other.route_id)]:
            if sa > ego.along_track + 1e-9 and sb > other.along_track + 1e-9:
                return sb - other.along_track
        return None


def _shared_nodes(airspace: Airspace) -> dict[tuple[str, str], list[tuple[float, float]]]:
    """For each ordered route pair, along-track positions of points both routes pass through."""
    nodes = {rid: airspace.nodes(rid) for rid in airspace.route_ids}
    out = {}
    for ra in airspace.route_ids:
        for rb in airspace.route_ids:
            pairs = []
            for sa, pa in nodes[ra]:
                for sb, pb in nodes[rb]:
                    if np.hypot(pa[0] - pb[0], pa[1] - pb[1]) < 1e-6:
                        pairs.append((sa, sb))
            out[(ra, rb)] = sorted(pairs)
    return out


def step(world: World, joint_actions: Mapping[int, int], dt: float | None = None):
    """Advance ``world`` by one step; returns ``(world, conflict_events)``."""
    events = world.step(joint_actions, dt)
    return world, events


def observe(aircraft_id: int, world: World) -> np.ndarray:
    """Normalized observation for one active aircraft, every component in [0, 1].

    Layout: own (along-track fraction, speed, distance to next intersection),
    then per neighbor (distance, speed, neighbor distance to the next point
    both routes share), nearest first, padded with 1.0.
    """
    cfg = world.config
    ego = world.aircraft.get(aircraft_id)
    if ego is None or ego.status is not Status.ACTIVE:
        raise ContractViolation(f"aircraft {aircraft_id} is not active")
    norm = cfg.dist_norm_nm
    span = cfg.v_max - cfg.v_min
    out = np.full(cfg.obs_dim, PAD)
    out[0] = ego.along_track / world.route_length(ego.route_id)
    out[1] = (ego.speed - cfg.v_min) / span
    nxt = world._next_node_distance(ego.route_id, ego.along_track)
    out[2] = PAD if nxt is None else nxt / norm

    if cfg.neighbors:
        here = world._pos[aircraft_id]
        others = [(float(np.hypot(*(p - here))), j) for j, p in world._pos.items() if j != aircraft_id]
        others.sort()
        for k, (d, j) in enumerate(others[: cfg.neighbors]):
            nb = world.aircraft[j]
            base = FEATURES_OWN + FEATURES_PER_NEIGHBOR * k
            shared = world._shared_distance(ego, nb)
            out[base] = d / norm
            out[base + 1] = (nb.speed - cfg.v_min) / span
            out[base + 2] = PAD if shared is None else shared / norm
    return np.clip(out, 0.0, 1.0)


def nearest_distance(aircraft_id: int, world: World) -> float:
    """Distance from ``aircraft_id``'s last position to the nearest active aircraft."""
    here = world._pos.get(aircraft_id)
    if here is None:
        here = world.position(aircraft_id)
    best = np.inf
    for j, p in world._pos.items():
        if j != aircraft_id:
            best = min(best, float(np.hypot(*(p - here))))
    return best


def compute_reward(aircraft_id: int, events: Iterable[ConflictEvent], action: int, world: World) -> float:
    cfg = world.config
    if any(aircraft_id in ev.pair for ev in events):
        return -1.0
    reward = 0.0
    d = nearest_distance(aircraft_id, world)
    if d < cfg.warning_radius_nm:
        reward -= cfg.alpha * (cfg.warning_radius_nm - d) / cfg.warning_radius_nm
    if action != HOLD:
        reward -= cfg.beta
    return reward


def episode_score(result: EpisodeResult) -> int:
    if not result.complete:
        raise ContractViolation("episode has aircraft that have not reached a terminal state")
    return result.spawned - len({i for ev in result.conflicts for i in ev.pair})
