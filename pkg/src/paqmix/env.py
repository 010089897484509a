"""Stateful episode wrapper around the pure simulator functions."""
import numpy as np

from . import sim
from .idm import IDMParams, idm_joint_action
from .infostate import info_dim
from .qmix import global_state
from .reward import FuelModel, RewardCoeffs, reward_terms, step_metrics
from .sim import Status


class HighwayEnv:
    """Owns the current world, the history buffers and the reward coefficients.

    One caller at a time; independent episodes need independent instances.
    """

    def __init__(self, config=sim.ScenarioConfig(), coeffs=RewardCoeffs(), fuel_model=FuelModel()):
        self.config = config
        self.coeffs = coeffs
        self.fuel_model = fuel_model
        self.world = None
        self.histories = None
        self.last_events = None
        self.last_terms = None

    @property
    def n_agents(self):
        return self.config.n_agents

    @property
    def obs_dim(self):
        return info_dim(self.config.w)

    def reset(self, seed=None, vehicles=None):
        if vehicles is None:
            vehicles = sim.generate_scenario(self.config, seed)
        if len(vehicles) != self.config.n_agents:
            raise sim.ScenarioError(f"scenario has {len(vehicles)} vehicles, config expects {self.config.n_agents}")
        self.world = sim.initial_world(vehicles)
        self.histories = sim.HistoryBuffer(len(vehicles), self.config.w)
        self.histories.push(self.world)
        self.last_events = None
        self.last_terms = None
        return self.world

    def step(self, joint_action, emergency_brakes=()):
        """Apply accelerations; returns ``(world, events, reward)``."""
        self.world, events = sim.step(self.world, joint_action, self.config, emergency_brakes)
        self.histories.push(self.world)
        metrics = step_metrics(self.world, events, self.config.dt, self.fuel_model)
        self.last_events = events
        self.last_terms = reward_terms(metrics, self.coeffs)
        self.last_metrics = metrics
        return self.world, events, float(sum(self.last_terms.values()))

    def observe(self, i):
        return sim.observe(self.world, i, self.histories, self.config)

    def observations(self):
        """``(N, obs_dim)`` observation matrix (zero rows for inactive agents) and the active mask."""
        n = self.config.n_agents
        obs = np.zeros((n, self.obs_dim))
        mask = np.zeros(n, dtype=bool)
        table = sim.neighbor_table(self.world, self.config)
        for v in self.world.vehicles:
            if v.status is Status.ACTIVE:
                obs[v.id] = sim.observe(self.world, v.id, self.histories, self.config, table).as_vector()
                mask[v.id] = True
        return obs, mask

    def kinematics(self):
        return np.array([v.kinematics.as_array() for v in self.world.vehicles])

    def global_state(self):
        mask = np.array([v.status is Status.ACTIVE for v in self.world.vehicles])
        return global_state(self.kinematics(), mask)

    def idm_action(self, params=IDMParams()):
        return idm_joint_action(self.world, self.config, params)
