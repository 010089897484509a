import numpy as np
import pytest

from paqmix.reward import (
    TERMS,
    FuelModel,
    RewardCoeffs,
    StepMetrics,
    r_collision,
    r_comfort_i,
    r_efficiency_i,
    r_flow,
    r_goal,
    r_velocity_i,
    r_waiting,
    reward_terms,
    step_metrics,
    total_reward,
)
from paqmix.sim import ScenarioConfig, step

from helpers import car, world_of

C = RewardCoeffs()


def test_coefficients():
    assert (C.c1, C.c2, C.c3, C.c4, C.c5, C.c6, C.c7, C.c8) == (40, 0.5, 0.9, 1, 1, 3, 1e-5, 0.01)
    with pytest.raises(ValueError):
        RewardCoeffs(c3=-0.1)


def test_global_terms():
    assert r_collision(StepMetrics(n_collisions=1), C) == -40
    assert r_collision(StepMetrics(), C) == 0
    assert r_collision(StepMetrics(n_collisions=2), C) == -80
    assert r_flow(StepMetrics(v_highway=10, v_merging=5), C) == 9.5
    assert r_flow(StepMetrics(v_highway=10), C) == 5.0
    assert r_flow(StepMetrics(), C) == 0
    assert r_waiting(StepMetrics(), C) == 0
    assert r_goal(StepMetrics(n_goal=0), C) == 0
    assert r_goal(StepMetrics(n_goal=1), C) == 1.0
    assert r_goal(StepMetrics(n_goal=4), C) == 4.0


def test_waiting_from_simulator_step():
    cfg = ScenarioConfig(n_agents=4)
    world = world_of(car(0, 1, 10, v=0.0), car(1, 1, 30, v=0.05), car(2, 1, 50, v=0.0),
                     car(3, 1, 70, v=0.1))
    after, events = step(world, {i: 0.0 for i in range(4)}, cfg)
    m = step_metrics(after, events, cfg.dt)
    assert sorted(events.waiting) == [0, 1, 2]  # v = 0.1 exactly is not waiting
    assert r_waiting(m, C) == pytest.approx(-0.3, abs=1e-15)


def test_individual_terms():
    assert r_velocity_i(12.0, 12.0, C) == 0
    assert r_velocity_i(6.0, 12.0, C) == -1.5
    assert r_velocity_i(0.0, 12.0, C) == -3.0
    for bad in (0.0, -1.0):
        with pytest.raises(ValueError):
            r_velocity_i(5.0, bad, C)
    assert r_efficiency_i(0.0, C) == 0
    assert r_efficiency_i(1000.0, C) == pytest.approx(-0.01, abs=1e-18)
    fm = FuelModel()
    assert r_efficiency_i(fm(0.0, 0.0, 0.1), C) == pytest.approx(-C.c7 * 0.1 * fm.b0, abs=1e-18)
    assert r_comfort_i(0.0, C) == 0
    assert r_comfort_i(-6.0, C) == -0.06
    assert r_comfort_i(3.0, C) == -0.03


def test_composite_examples():
    assert total_reward(StepMetrics(), C) == 0
    assert total_reward(StepMetrics(n_collisions=1, v_highway=10, v_merging=5), C) == -30.5


def _random_metrics(rng):
    n = int(rng.integers(0, 17))
    return StepMetrics(
        n_collisions=int(rng.integers(0, 3)), v_highway=rng.uniform(0, 15),
        v_merging=rng.uniform(0, 15), waiting_time=0.1 * int(rng.integers(0, 17)),
        n_goal=int(rng.integers(0, 5)), velocity=rng.uniform(0, 15, n),
        desired=rng.choice([10.0, 12.0], n), fuel=rng.uniform(0, 1000, n), accel=rng.uniform(-6, 6, n))


def test_total_is_term_sum_and_signs():
    rng = np.random.default_rng(0)
    for _ in range(300):
        m = _random_metrics(rng)
        by_hand = (r_collision(m, C) + r_flow(m, C) + r_waiting(m, C) + r_goal(m, C)
                   + np.sum(r_velocity_i(m.velocity, m.desired, C))
                   + np.sum(r_efficiency_i(m.fuel, C)) + np.sum(r_comfort_i(m.accel, C)))
        assert abs(total_reward(m, C) - by_hand) < 1e-12
        t = reward_terms(m, C)
        assert tuple(t) == TERMS
        assert t["collision"] <= 0 and t["waiting"] <= 0 and t["velocity"] <= 0
        assert t["efficiency"] <= 0 and t["comfort"] <= 0
        assert t["flow"] >= 0 and t["goal"] >= 0
        assert (t["collision"] < 0) == (m.n_collisions > 0)


def test_empty_class_average_is_zero():
    cfg = ScenarioConfig(n_agents=2)
    world = world_of(car(0, 1, 10, v=8.0), car(1, 0, 60, v=4.0))
    after, events = step(world, {0: 0.0, 1: 0.0}, cfg)
    m = step_metrics(after, events, cfg.dt)
    assert m.v_merging == 0.0 and m.v_highway == 6.0
    assert r_flow(m, C) == 3.0
