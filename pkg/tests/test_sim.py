import numpy as np
import pytest
from helpers import car, oracle_collisions, oracle_neighbors, random_world, world_of

from paqmix import sim
from paqmix.idm import IDMParams, idm_accel
from paqmix.infostate import info_dim
from paqmix.sim import (
    ContractError,
    KinematicState,
    Route,
    ScenarioConfig,
    ScenarioError,
    Status,
    detect_collisions,
    front_vehicle,
    generate_scenario,
    opposite_vehicle,
)

CFG = ScenarioConfig()


# scenario generation

def test_generation_is_deterministic():
    assert generate_scenario(CFG, 7) == generate_scenario(CFG, 7)
    assert generate_scenario(CFG, 7) != generate_scenario(CFG, 8)


def test_default_scenario_shape():
    vehicles = generate_scenario(CFG, 0)
    assert len(vehicles) == 16
    assert all(v.length == 5.0 for v in vehicles)
    assert all(v.status is Status.PENDING for v in vehicles)
    for v in vehicles:
        assert 0.0 <= v.depart_time <= 100.0
        if v.route is Route.HW:
            assert v.lane in (0, 1) and 7.0 <= v.kinematics.v <= 10.0
            assert v.kinematics.x == 0.0
        else:
            assert v.lane == 2 and 4.0 <= v.kinematics.v <= 8.0
            assert v.kinematics.x == CFG.ramp_start


def test_highway_speed_mean_and_route_balance():
    speeds, routes, lanes = [], [], []
    seed = 0
    while len(speeds) < 10_000:
        for v in generate_scenario(CFG, seed):
            routes.append(v.route is Route.HW)
            if v.route is Route.HW:
                speeds.append(v.kinematics.v)
                lanes.append(v.lane)
        seed += 1
    assert 8.3 <= np.mean(speeds) <= 8.7
    # binomial 3-sigma bands
    n = len(routes)
    assert abs(np.mean(routes) - 0.5) < 3 * 0.5 / np.sqrt(n)
    assert abs(np.mean(lanes) - 0.5) < 3 * 0.5 / np.sqrt(len(lanes))


def test_same_lane_departures_are_spaced():
    for seed in range(50):
        vehicles = generate_scenario(CFG, seed)
        for lane in (0, 1, 2):
            members = sorted((v for v in vehicles if v.lane == lane), key=lambda v: v.depart_time)
            for lead, follow in zip(members, members[1:]):
                gap = lead.kinematics.v * (follow.depart_time - lead.depart_time) - lead.length
                assert gap >= 2 * lead.length


def test_infeasible_packing_raises():
    cfg = ScenarioConfig(n_agents=40, depart_range=(0.0, 1.0))
    with pytest.raises(ScenarioError):
        generate_scenario(cfg, 0)


def test_invalid_config_rejected():
    with pytest.raises(sim.ConfigError):
        ScenarioConfig(dt=0.0)
    with pytest.raises(sim.ConfigError):
        ScenarioConfig(depart_range=(5.0, 1.0))
    with pytest.raises(sim.ConfigError):
        ScenarioConfig(max_steps=0)


def test_scenario_file_round_trip(tmp_path):
    vehicles = generate_scenario(CFG, 3)
    path = tmp_path / "scenario.csv"
    sim.save_scenario(path, vehicles)
    assert sim.load_scenario(path, CFG) == vehicles
    bad = tmp_path / "bad.csv"
    bad.write_text("route,lane,depart_time,speed\nXX,0,1.0,5.0\n")
    with pytest.raises(ScenarioError):
        sim.load_scenario(bad, CFG)


# stepping

def test_constant_velocity_advances_one_metre():
    world = world_of(car(0, 0, 50.0, v=10.0))
    new, _ = sim.step(world, {0: 0.0}, CFG)
    assert new.vehicles[0].kinematics.x == 51.0
    assert new.vehicles[0].kinematics.v == 10.0


def test_no_reverse_motion():
    world = world_of(car(0, 0, 50.0, v=0.0))
    new, events = sim.step(world, {0: -6.0}, CFG)
    assert new.vehicles[0].kinematics.v == 0.0
    assert new.vehicles[0].kinematics.x == 50.0
    assert events.waiting == {0: CFG.dt}


def test_semi_implicit_update_and_speed_cap():
    world = world_of(car(0, 0, 10.0, v=14.9))
    new, _ = sim.step(world, {0: 6.0}, CFG)
    assert new.vehicles[0].kinematics.v == CFG.v_max
    assert new.vehicles[0].kinematics.x == pytest.approx(10.0 + CFG.v_max * CFG.dt, abs=1e-12)


def test_action_contracts():
    world = world_of(car(0, 0, 50.0), car(1, 0, 100.0, status=Status.PENDING, depart=50.0))
    with pytest.raises(ContractError):
        sim.step(world, {0: 0.0, 1: 0.0}, CFG)
    with pytest.raises(ContractError):
        sim.step(world, {}, CFG)
    with pytest.raises(ContractError):
        sim.step(world, {0: 7.0}, CFG)


def test_ramp_vehicle_transfers_to_lane_zero():
    world = world_of(car(0, 2, 199.5, v=10.0))
    new, _ = sim.step(world, {0: 0.0}, CFG)
    v = new.vehicles[0]
    assert v.lane == 0 and v.kinematics.y == sim.LANE_Y[0]
    assert v.kinematics.x == pytest.approx(200.5)


def test_arrival_and_departure_events():
    world = world_of(car(0, 0, 399.5, v=10.0), car(1, 1, 0.0, v=8.0, status=Status.PENDING, depart=0.05))
    new, events = sim.step(world, {0: 0.0}, CFG)
    assert events.arrivals == (0,) and events.departures == (1,)
    assert new.vehicles[0].status is Status.ARRIVED
    assert new.vehicles[1].status is Status.ACTIVE
    assert events.log_lines() == ["t=0.1 event=depart ids=1", "t=0.1 event=arrival ids=0"]


def test_departure_waits_for_clear_entry():
    # a vehicle sitting on the spawn point blocks insertion until it has moved on
    world = world_of(car(0, 0, 6.0, v=5.0), car(1, 0, 0.0, v=8.0, status=Status.PENDING, depart=0.0))
    new, events = sim.step(world, {0: 0.0}, CFG)
    assert events.departures == () and new.vehicles[1].status is Status.PENDING
    while new.vehicles[1].status is Status.PENDING:
        new, events = sim.step(new, {0: 0.0}, CFG)
    lead = new.vehicles[0].kinematics.x - 5.0
    assert lead >= sim.insertion_gap(CFG, 8.0)


def test_collision_terminates_episode():
    world = world_of(car(0, 0, 100.0, v=0.0), car(1, 0, 94.5, v=10.0))
    new, events = sim.step(world, {0: 0.0, 1: 0.0}, CFG)
    assert events.collisions == ((0, 1),)
    assert new.done
    assert {v.status for v in new.vehicles} == {Status.CRASHED}
    assert events.log_lines() == ["t=0.1 event=collision ids=0,1"]
    with pytest.raises(ContractError):
        sim.step(new, {}, CFG)


def _run(cfg, seed, policy):
    world = sim.initial_world(generate_scenario(cfg, seed))
    trace = [world]
    while not world.done:
        world, _ = sim.step(world, {i: policy(world, i) for i in world.active_ids}, cfg)
        trace.append(world)
    return trace


def test_zero_action_episode_is_reproducible():
    a = _run(CFG, 7, lambda w, i: 0.0)
    b = _run(CFG, 7, lambda w, i: 0.0)
    assert a == b


def test_full_braking_policy_stops_everyone():
    trace = _run(CFG, 7, lambda w, i: -6.0)
    last = trace[-1]
    assert last.step == CFG.max_steps
    assert all(w.collision_count_step == 0 for w in trace)
    assert all(v.status is not Status.ARRIVED for v in last.vehicles)


def test_speed_bounds_and_no_teleporting():
    rng = np.random.default_rng(0)
    actions = np.array([-6.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 6.0])
    cfg = ScenarioConfig(n_agents=8, depart_range=(0.0, 30.0), max_steps=600)
    for seed in range(5):
        trace = _run(cfg, seed, lambda w, i: float(rng.choice(actions)))
        for prev, cur in zip(trace, trace[1:]):
            for p, c in zip(prev.vehicles, cur.vehicles):
                assert 0.0 <= c.kinematics.v <= cfg.v_max
                assert c.kinematics.x - p.kinematics.x <= cfg.v_max * cfg.dt + 1e-12
                assert c.kinematics.x >= p.kinematics.x


# collisions

def test_collision_examples():
    assert detect_collisions(world_of(car(0, 0, 100.0), car(1, 0, 104.0)), CFG) == [(0, 1)]
    assert detect_collisions(world_of(car(0, 0, 100.0), car(1, 1, 104.0)), CFG) == []
    assert detect_collisions(world_of(car(0, 0, 100.0), car(1, 0, 105.01)), CFG) == []


def test_junction_window_shares_collision_domain():
    assert detect_collisions(world_of(car(0, 0, 195.0), car(1, 2, 197.0)), CFG) == [(0, 1)]
    assert detect_collisions(world_of(car(0, 0, 150.0), car(1, 2, 152.0)), CFG) == []
    assert detect_collisions(world_of(car(0, 1, 195.0), car(1, 2, 197.0)), CFG) == []


def test_collisions_match_oracle():
    rng = np.random.default_rng(11)
    for _ in range(300):
        w = random_world(rng, spread=rng.choice([60.0, 400.0]))
        assert detect_collisions(w, CFG) == oracle_collisions(w)


# neighbours

def _ids(world):
    return {v.id: v for v in world.vehicles}


def test_two_ramp_merge_scene():
    A, B, C, D, E, F = range(6)
    world = world_of(car(A, 2, 150.0), car(B, 2, 180.0), car(C, 0, 230.0), car(D, 1, 240.0),
                     car(E, 0, 160.0), car(F, 0, 120.0))
    assert (front_vehicle(world, B, CFG), opposite_vehicle(world, B, CFG)) == (C, E)
    assert (front_vehicle(world, A, CFG), opposite_vehicle(world, A, CFG)) == (B, E)
    for vid in (C, D):
        assert (front_vehicle(world, vid, CFG), opposite_vehicle(world, vid, CFG)) == (None, None)


def test_staggered_merge_scene():
    A, B, C, E = 0, 1, 2, 3
    world = world_of(car(A, 2, 140.0), car(B, 2, 180.0), car(C, 0, 230.0), car(E, 0, 175.0))
    assert front_vehicle(world, E, CFG) == C
    assert opposite_vehicle(world, E, CFG) == B


def test_neighbor_examples():
    world = world_of(car(0, 0, 300.0))
    assert front_vehicle(world, 0, CFG) is None
    # ego on the highway 40 m before the junction; ramp candidates at 30 m and 60 m
    world = world_of(car(0, 0, 160.0), car(1, 2, 170.0), car(2, 2, 140.0))
    assert opposite_vehicle(world, 0, CFG) == 1
    world = world_of(car(0, 1, 190.0), car(1, 2, 185.0))
    assert opposite_vehicle(world, 0, CFG) is None
    with pytest.raises(ContractError):
        front_vehicle(world_of(car(0, 0, 10.0, status=Status.PENDING)), 0, CFG)


def test_neighbors_match_oracle():
    rng = np.random.default_rng(12)
    for _ in range(300):
        w = random_world(rng)
        assert sim.neighbor_table(w, CFG) == oracle_neighbors(w)


# observation

def _history_for(world, w=9):
    h = sim.HistoryBuffer(len(world.vehicles), w)
    h.push(world)
    return h


def test_observation_dimension_and_padding():
    world = world_of(car(0, 1, 300.0))
    s = sim.observe(world, 0, _history_for(world), CFG)
    vec = s.as_vector()
    assert vec.shape == (84,) == (info_dim(9),)
    np.testing.assert_array_equal(vec[:4], [300.0, sim.LANE_Y[1], 10.0, 0.0])
    np.testing.assert_array_equal(vec[4:], np.zeros(80))


def test_history_of_recent_departure():
    cfg = ScenarioConfig(n_agents=2)
    # vehicle 1 stays pending for seven pushes, then departs behind vehicle 0
    world = world_of(car(0, 0, 40.0, v=8.0), car(1, 0, 0.0, v=8.0, status=Status.PENDING, depart=0.7))
    hist = sim.HistoryBuffer(2, 9)
    hist.push(world)
    for _ in range(7):
        world, _ = sim.step(world, {i: 0.0 for i in world.active_ids}, cfg)
        hist.push(world)
    assert world.vehicles[1].status is Status.ACTIVE and world.step == 7
    # vehicle 1 departed at step 7; after two more steps its history holds three real rows
    for _ in range(2):
        world, _ = sim.step(world, {i: 0.0 for i in world.active_ids}, cfg)
        hist.push(world)
    rows = hist.window(1)
    assert np.all(rows[:7] == 0.0) and np.all(rows[7:, 0] >= 0.0) and np.all(rows[7:, 2] == 8.0)
    # vehicle 0 sees no one ahead; vehicle 1 sees vehicle 0's history as its front block
    s = sim.observe(world, 1, hist, cfg)
    np.testing.assert_array_equal(s.front_hist, hist.window(0))


def test_stale_history_is_rejected():
    world = world_of(car(0, 0, 10.0))
    hist = _history_for(world)
    new, _ = sim.step(world, {0: 0.0}, CFG)
    with pytest.raises(ContractError):
        sim.observe(new, 0, hist, CFG)


# IDM

def test_idm_examples():
    p = IDMParams()
    acc, emergency = idm_accel(KinematicState(0.0, 0.0, 0.0), None, p, v0=12.0)
    assert acc == p.a_max and not emergency
    acc, _ = idm_accel(KinematicState(0.0, 0.0, 12.0), None, p, v0=12.0)
    assert acc == 0.0
    ego, lead = KinematicState(100.0, 0.0, 10.0), KinematicState(125.0, 0.0, 10.0)
    acc, _ = idm_accel(ego, lead, p, v0=12.0, leader_length=5.0)
    s_star = 2.0 + 10.0 * 1.5
    expected = 2.0 * (1.0 - (10.0 / 12.0) ** 4 - (s_star / 20.0) ** 2)
    assert acc == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(-0.4095, abs=1e-4)


def test_idm_emergency_on_overlap():
    acc, emergency = idm_accel(KinematicState(100.0, 0.0, 10.0), KinematicState(103.0, 0.0, 5.0))
    assert acc == -6.0 and emergency
