"""Intelligent Driver Model baseline controller (car-following only, no merge logic)."""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .sim import MAX_ACCEL, Status, neighbor_table


@dataclass(frozen=True)
class IDMParams:
    a_max: float = 2.0
    b: float = 3.0
    delta: float = 4.0
    s0: float = 2.0
    headway: float = 1.5


def idm_accel(ego, leader, params=IDMParams(), v0=12.0, leader_length=5.0):
    """Scalar IDM acceleration for ``ego`` following ``leader`` (either may be a KinematicState).

    Returns ``(acceleration, emergency)``; ``emergency`` is set when the bumper gap is
    non-positive and the command is clipped to full braking.
    """
    if ego.v < 0:
        raise ValueError("ego speed must be non-negative")
    acc = params.a_max * (1.0 - (ego.v / v0) ** params.delta)
    if leader is not None:
        gap = leader.x - leader_length - ego.x
        if gap <= 0.0:
            return -MAX_ACCEL, True
        dv = ego.v - leader.v
        s_star = params.s0 + ego.v * params.headway + ego.v * dv / (2.0 * np.sqrt(params.a_max * params.b))
        acc -= params.a_max * (s_star / gap) ** 2
    return float(np.clip(acc, -MAX_ACCEL, MAX_ACCEL)), False


def idm_joint_action(world, config, params=IDMParams()):
    """IDM command for every active vehicle, following its front vehicle.

    Returns ``(actions, emergency_ids)``.
    """
    table = neighbor_table(world, config)
    index = {v.id: v for v in world.vehicles}
    ids = [v.id for v in world.vehicles if v.status is Status.ACTIVE]
    if not ids:
        return {}, ()
    n = len(ids)
    v = np.empty(n)
    v0 = np.empty(n)
    gap = np.zeros(n)
    dv = np.zeros(n)
    has = np.zeros(n, dtype=np.bool_)
    for k, vid in enumerate(ids):
        ego = index[vid]
        v[k] = ego.kinematics.v
        v0[k] = ego.desired_velocity
        lead_id = table[vid][0]
        if lead_id is not None:
            lead = index[lead_id]
            has[k] = True
            gap[k] = lead.kinematics.x - lead.length - ego.kinematics.x
            dv[k] = ego.kinematics.v - lead.kinematics.v
    acc = kernels.idm(v, v0, gap, dv, has, params.a_max, params.b, float(params.delta),
                      params.s0, params.headway, MAX_ACCEL)
    emergency = tuple(vid for k, vid in enumerate(ids) if has[k] and gap[k] <= 0.0)
    return {vid: float(acc[k]) for k, vid in enumerate(ids)}, emergency
