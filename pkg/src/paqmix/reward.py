"""Composite team reward: four global terms plus three per-agent terms summed over agents."""
from dataclasses import dataclass, field

import numpy as np

from .sim import HIGHWAY_LANES, RAMP_LANE, Status


@dataclass(frozen=True)
class RewardCoeffs:
    c1: float = 40.0
    c2: float = 0.5
    c3: float = 0.9
    c4: float = 1.0
    c5: float = 1.0
    c6: float = 3.0
    c7: float = 0.00001
    c8: float = 0.01

    def __post_init__(self):
        for name, value in vars(self).items():
            if value < 0:
                raise ValueError(f"reward coefficient {name} must be non-negative")


@dataclass(frozen=True)
class FuelModel:
    """Per-step fuel in mg: ``dt * (b0 + b1 v + b2 v^2 + b3 v max(a, 0))``."""

    b0: float = 200.0
    b1: float = 20.0
    b2: float = 1.5
    b3: float = 80.0

    def __call__(self, v, a, dt):
        v = np.asarray(v, dtype=np.float64)
        a = np.asarray(a, dtype=np.float64)
        return dt * (self.b0 + self.b1 * v + self.b2 * v * v + self.b3 * v * np.maximum(a, 0.0))


@dataclass(frozen=True)
class StepMetrics:
    n_collisions: int = 0
    v_highway: float = 0.0
    v_merging: float = 0.0
    waiting_time: float = 0.0
    n_goal: int = 0
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(0))
    desired: np.ndarray = field(default_factory=lambda: np.zeros(0))
    fuel: np.ndarray = field(default_factory=lambda: np.zeros(0))
    accel: np.ndarray = field(default_factory=lambda: np.zeros(0))


def step_metrics(world, events, dt, fuel_model=FuelModel()):
    """Reward inputs after a step. Averages and individual terms cover active vehicles only."""
    active = [v for v in world.vehicles if v.status is Status.ACTIVE]
    hw = [v.kinematics.v for v in active if v.lane in HIGHWAY_LANES]
    ramp = [v.kinematics.v for v in active if v.lane == RAMP_LANE]
    vel = np.array([v.kinematics.v for v in active])
    acc = np.array([v.kinematics.a for v in active])
    return StepMetrics(
        n_collisions=len(events.collisions),
        v_highway=float(np.mean(hw)) if hw else 0.0,
        v_merging=float(np.mean(ramp)) if ramp else 0.0,
        waiting_time=float(sum(events.waiting.values())),
        n_goal=len(events.arrivals),
        velocity=vel,
        desired=np.array([v.desired_velocity for v in active]),
        fuel=fuel_model(vel, acc, dt),
        accel=acc,
    )


def r_collision(m, c):
    return -c.c1 * m.n_collisions


def r_flow(m, c):
    return c.c2 * m.v_highway + c.c3 * m.v_merging


def r_waiting(m, c):
    return -c.c4 * m.waiting_time


def r_goal(m, c):
    return c.c5 * m.n_goal


def r_velocity_i(v, v_desired, c):
    v_desired = np.asarray(v_desired, dtype=np.float64)
    if np.any(v_desired <= 0):
        raise ValueError("desired velocity must be positive")
    return -c.c6 * np.abs(np.asarray(v) - v_desired) / v_desired


def r_efficiency_i(fuel, c):
    return -c.c7 * np.asarray(fuel, dtype=np.float64)


def r_comfort_i(a, c):
    return -c.c8 * np.abs(np.asarray(a, dtype=np.float64))


TERMS = ("collision", "flow", "waiting", "goal", "velocity", "efficiency", "comfort")


def reward_terms(m, c=RewardCoeffs()):
    """Each term's contribution, individual terms already summed over agents."""
    return {
        "collision": r_collision(m, c),
        "flow": r_flow(m, c),
        "waiting": r_waiting(m, c),
        "goal": r_goal(m, c),
        "velocity": float(np.sum(r_velocity_i(m.velocity, m.desired, c))) if m.velocity.size else 0.0,
        "efficiency": float(np.sum(r_efficiency_i(m.fuel, c))),
        "comfort": float(np.sum(r_comfort_i(m.accel, c))),
    }


def total_reward(m, c=RewardCoeffs()):
    return float(sum(reward_terms(m, c).values()))
