import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import brute_force_conflicts
from safesep.errors import ConfigError, ContractViolation
from safesep.sim import (
    ACCELERATE, DECELERATE, HOLD, CASE_IDS, ConflictEvent, EpisodeResult, SimConfig, Status, World,
    build_case, compute_reward, detect_conflicts, episode_score, observe, spawn_schedule,
)
from safesep.sim.airspace import RouteSpec


def single_route_world(cfg=None, schedule=(("R1", 0.0),), length=100.0):
    from safesep.sim.airspace import Airspace
    route = RouteSpec("R1", np.array([[0.0, 0.0], [length, 0.0]]))
    space = Airspace("A", (route,), ())
    return World(space, cfg or SimConfig(), list(schedule))


# -- geometry -----------------------------------------------------------------

@pytest.mark.parametrize("case", CASE_IDS)
def test_intersections_lie_on_both_routes(case):
    space = build_case(case)
    assert space.intersections
    for ix in space.intersections:
        for rid, s in zip(ix.routes, ix.along_track):
            route = space.route(rid)
            assert route.distance_to(ix.point) < 1e-6
            assert np.allclose(route.point_at(s), ix.point, atol=1e-6)


def test_case_a_is_two_crossing_routes():
    a = build_case("A")
    assert len(a.routes) == 2 and len(a.intersections) == 1


def test_case_d_is_most_connected():
    a, d = build_case("A"), build_case("D")
    assert len(d.routes) == 4 and len(d.intersections) >= 3
    assert len(d.routes) + len(d.intersections) > len(a.routes) + len(a.intersections)


def test_case_a_simplest():
    size = {c: len(build_case(c).routes) + len(build_case(c).intersections) for c in CASE_IDS}
    assert all(size["A"] < size[c] for c in "BCD")


def test_case_c_has_a_merge():
    c = build_case("C")
    merge = [ix for ix in c.intersections if set(ix.routes) == {"R1", "R2"}]
    assert len(merge) == 1 and np.allclose(merge[0].point, (30.0, 30.0))


@pytest.mark.parametrize("case", CASE_IDS)
def test_intersections_leave_lead_distance(case):
    space = build_case(case)
    assert min(min(ix.along_track) for ix in space.intersections) >= 28.0


def test_unknown_case():
    with pytest.raises(ConfigError):
        build_case("E")


def test_route_invariants():
    with pytest.raises(ConfigError):
        RouteSpec("bad", np.array([[0.0, 0.0]]))
    with pytest.raises(ConfigError):
        RouteSpec("bad", np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0]]))
    r = RouteSpec("ok", np.array([[0.0, 0.0], [3.0, 4.0], [3.0, 10.0]]))
    assert r.length == pytest.approx(11.0)
    assert np.allclose(r.point_at(5.0), (3.0, 4.0))


def test_geometry_deterministic():
    a1, a2 = build_case("D"), build_case("D")
    assert a1.intersections == a2.intersections


# -- spawning -----------------------------------------------------------------

@pytest.mark.parametrize("interval", [(156.0, 180.0), (360.0, 600.0), (180.0, 360.0)])
def test_spawn_gaps_within_interval(interval):
    rng = np.random.default_rng(1)
    sched = spawn_schedule(interval, 10, rng, ("R1", "R2", "R3"))
    for rid in ("R1", "R2", "R3"):
        times = [t for r, t in sched if r == rid]
        assert times[0] == 0.0 and len(times) == 10
        gaps = np.diff(times)
        assert np.all(gaps >= interval[0]) and np.all(gaps <= interval[1])


def test_spawn_degenerate_interval():
    sched = spawn_schedule((200.0, 200.0), 5, np.random.default_rng(0))
    assert np.all(np.diff([t for _, t in sched]) == 200.0)


def test_world_starts_with_one_aircraft_per_route():
    space = build_case("B")
    w = World.from_seed(space, SimConfig(), np.random.default_rng(0))
    active = [w.aircraft[i].route_id for i in w.active_ids]
    assert sorted(active) == ["R1", "R2", "R3"]


# -- kinematics ---------------------------------------------------------------

def test_step_hold_advances_speed_times_dt():
    cfg = SimConfig(v_init=240.0, v_min=200.0, v_max=300.0)
    w = single_route_world(cfg)
    w.aircraft[0].along_track = 10.0
    w.step({0: HOLD}, 12.0)
    assert w.aircraft[0].along_track == pytest.approx(10.8, abs=1e-12)
    assert w.time == 12.0


def test_kinematic_consistency_constant_speed():
    w = single_route_world()
    before = w.aircraft[0].along_track
    for _ in range(20):
        w.step({0: HOLD})
    assert abs(w.aircraft[0].along_track - (before + 250.0 / 3600.0 * 12.0 * 20)) < 1e-9


def test_speed_moves_toward_command_with_bounded_accel():
    cfg = SimConfig(accel_kt_per_s=1.0)
    w = single_route_world(cfg)
    w.step({0: ACCELERATE})
    a = w.aircraft[0]
    assert a.speed_cmd == 270.0 and a.speed == 262.0
    # ramp 250 -> 262 over 12 s
    assert a.along_track == pytest.approx(256.0 * 12.0 / 3600.0)
    w.step({0: HOLD})
    assert a.speed == 270.0


def test_speed_command_clipped():
    w = single_route_world()
    for _ in range(10):
        w.step({0: DECELERATE})
    assert w.aircraft[0].speed_cmd == 200.0 and w.aircraft[0].speed == 200.0


def test_empty_airspace_advances_time():
    w = single_route_world(schedule=(("R1", 1000.0),))
    _, events = w.step({}), None
    assert w.time == 12.0 and w.active_ids == []


def test_action_for_inactive_aircraft_rejected():
    w = single_route_world(schedule=(("R1", 0.0), ("R1", 500.0)))
    with pytest.raises(ContractViolation):
        w.step({0: HOLD, 1: HOLD})
    with pytest.raises(ContractViolation):
        w.step({})
    with pytest.raises(ContractViolation):
        w.step({0: HOLD}, dt=0.0)


def test_exit_is_absorbing():
    w = single_route_world(length=2.0)
    while w.active_ids:
        w.step({0: HOLD})
    assert w.aircraft[0].status is Status.EXITED and w.done
    assert w.aircraft[0].along_track == 2.0
    res = w.result()
    assert episode_score(res) == 1 == res.score


def test_head_on_intersection_conflict():
    # two aircraft placed equidistant from a right-angle crossing at equal speed
    from safesep.sim.airspace import Airspace, find_intersections
    r1 = RouteSpec("R1", np.array([[0.0, 20.0], [40.0, 20.0]]))
    r2 = RouteSpec("R2", np.array([[20.0, 0.0], [20.0, 40.0]]))
    space = Airspace("A", (r1, r2), tuple(find_intersections(r1, r2)))
    w = World(space, SimConfig(), [("R1", 0.0), ("R2", 0.0)])
    events = []
    while not events:
        events = w.step({i: HOLD for i in w.active_ids})
    ev = events[0]
    assert ev.pair == (0, 1) and ev.separation < 3.0
    # at equal along-track s the gap is sqrt(2) * (20 - s)
    s = w.aircraft[0].along_track
    assert ev.separation == pytest.approx(np.sqrt(2) * abs(20.0 - s))
    assert {w.aircraft[0].status, w.aircraft[1].status} == {Status.IN_CONFLICT}


# -- conflict detection ---------------------------------------------------------

def test_detect_conflicts_small():
    assert detect_conflicts({}, 3.0) == []
    assert detect_conflicts({1: np.zeros(2)}, 3.0) == []
    ev = detect_conflicts({1: np.array([0.0, 0.0]), 2: np.array([2.9, 0.0])}, 3.0, time=5.0)
    assert ev == [ConflictEvent(5.0, (1, 2), pytest.approx(2.9))]
    assert detect_conflicts({1: np.array([0.0, 0.0]), 2: np.array([3.0, 0.0])}, 3.0) == []


def test_detect_conflicts_matches_brute_force_20():
    rng = np.random.default_rng(7)
    for _ in range(50):
        pos = {int(i): rng.uniform(0, 20, 2) for i in rng.choice(1000, 20, replace=False)}
        got = {ev.pair for ev in detect_conflicts(pos, 3.0)}
        assert got == brute_force_conflicts(pos, 3.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 30), st.floats(0, 30)), max_size=12), st.randoms())
def test_conflict_symmetry_under_permutation(points, rnd):
    pos = {i: np.array(p) for i, p in enumerate(points)}
    keys = list(pos)
    rnd.shuffle(keys)
    shuffled = {k: pos[k] for k in keys}
    assert detect_conflicts(pos, 3.0) == detect_conflicts(shuffled, 3.0)
    for ev in detect_conflicts(pos, 3.0):
        assert ev.pair[0] < ev.pair[1] and ev.separation < 3.0


# -- observation ---------------------------------------------------------------

def test_sole_aircraft_neighbor_slots_padded():
    w = single_route_world()
    obs = observe(0, w)
    assert obs.shape == (SimConfig().obs_dim,)
    assert np.all(obs[3:] == 1.0)


def test_midpoint_at_vmin_features():
    cfg = SimConfig(v_init=200.0)
    w = single_route_world(cfg, length=100.0)
    w.aircraft[0].along_track = 50.0
    obs = observe(0, w)
    assert obs[0] == 0.5 and obs[1] == 0.0


def test_observe_inactive_rejected():
    w = single_route_world(schedule=(("R1", 0.0), ("R1", 500.0)))
    with pytest.raises(ContractViolation):
        observe(1, w)
    with pytest.raises(ContractViolation):
        observe(99, w)


def test_observation_neighbor_features():
    space = build_case("A")
    w = World(space, SimConfig(), [("R1", 0.0), ("R2", 0.0)])
    obs = observe(0, w)
    # own distance to the crossing: 30 NM on R1; neighbor on R2 is 31.62 NM from it
    assert obs[2] == pytest.approx(30.0 / 50.0)
    assert obs[3] == pytest.approx(np.hypot(20.0, 30.0) / 50.0)
    assert obs[4] == pytest.approx(0.5)
    assert obs[5] == pytest.approx(np.hypot(10.0, 30.0) / 50.0)
    assert np.all(obs[6:] == 1.0)


def random_world(rng, case):
    space = build_case(case)
    cfg = SimConfig(per_route_count=int(rng.integers(1, 6)), interval_s=(20.0, 120.0))
    w = World.from_seed(space, cfg, rng)
    for _ in range(int(rng.integers(0, 40))):
        if w.done:
            break
        w.step({i: int(rng.integers(3)) for i in w.active_ids})
    return w


def test_observation_bounded_random_worlds():
    rng = np.random.default_rng(3)
    count = 0
    while count < 100_000:
        w = random_world(rng, CASE_IDS[count % 4])
        for i in w.active_ids:
            o = observe(i, w)
            assert o.shape == (9,) and o.min() >= 0.0 and o.max() <= 1.0
        # perturb raw states directly to cover extreme speeds and positions
        for i in w.active_ids:
            a = w.aircraft[i]
            a.along_track = float(rng.uniform(0, w.route_length(a.route_id)))
            a.speed = float(rng.uniform(w.config.v_min, w.config.v_max))
            w._pos[i] = w.position(i)
        for i in w.active_ids:
            o = observe(i, w)
            assert o.min() >= 0.0 and o.max() <= 1.0
            count += 9
        count += 1


# -- reward and score -------------------------------------------------------------

def test_reward_cases():
    cfg = SimConfig(beta=0.01)
    w = single_route_world(cfg)
    w.step({0: HOLD})
    assert compute_reward(0, [], HOLD, w) == 0.0
    assert compute_reward(0, [], ACCELERATE, w) == pytest.approx(-0.01)
    assert compute_reward(0, [ConflictEvent(0.0, (0, 5), 1.0)], HOLD, w) == -1.0


def test_reward_warning_radius():
    cfg = SimConfig(alpha=0.1, warning_radius_nm=10.0)
    w = single_route_world(cfg, schedule=(("R1", 0.0), ("R1", 0.0)))
    w.aircraft[1].along_track = 5.0
    w._pos[1] = w.position(1)
    assert compute_reward(0, [], HOLD, w) == pytest.approx(-0.1 * 5.0 / 10.0)


def test_episode_score():
    assert episode_score(EpisodeResult(30, [], 30, 100)) == 30
    evs = [ConflictEvent(0.0, (1, 2), 1.0), ConflictEvent(0.0, (2, 3), 1.0), ConflictEvent(1.0, (4, 5), 1.0)]
    assert episode_score(EpisodeResult(25, evs, 30, 100)) == 25
    assert episode_score(EpisodeResult(0, [], 0, 0)) == 0
    with pytest.raises(ContractViolation):
        episode_score(EpisodeResult(0, [], 3, 1, complete=False))


def run_random_episode(case, seed):
    space = build_case(case)
    rng = np.random.default_rng(seed)
    w = World.from_seed(space, SimConfig(per_route_count=4), rng)
    while not w.done:
        w.step({i: int(rng.integers(3)) for i in w.active_ids})
    return w


@pytest.mark.parametrize("case", CASE_IDS)
def test_conservation_and_determinism(case):
    w1, w2 = run_random_episode(case, 11), run_random_episode(case, 11)
    r1, r2 = w1.result(), w2.result()
    assert r1 == r2
    conflicted = {i for ev in r1.conflicts for i in ev.pair}
    clean = [a for a in w1.aircraft.values() if a.status is Status.EXITED]
    assert r1.spawned == len(clean) + len(conflicted)
    assert r1.score == len(clean) == episode_score(r1)
    assert 0 <= r1.score <= r1.spawned


def test_status_transitions_only_forward():
    w = run_random_episode("C", 2)
    for a in w.aircraft.values():
        assert a.status in (Status.EXITED, Status.IN_CONFLICT)
