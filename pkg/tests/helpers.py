"""Shared builders and brute-force oracles for the test suite."""
import numpy as np

from paqmix.sim import LANE_Y, KinematicState, Route, Status, VehicleRecord, WorldState


def car(vid, lane, x, v=10.0, status=Status.ACTIVE, length=5.0, depart=0.0):
    route = Route.M if lane == 2 else Route.HW
    return VehicleRecord(id=vid, route=route, lane=lane, depart_time=depart,
                         desired_velocity=10.0 if route is Route.M else 12.0,
                         kinematics=KinematicState(float(x), LANE_Y[lane], float(v), 0.0),
                         status=status, length=length)


def world_of(*vehicles, step=0, dt=0.1):
    return WorldState(step=step, time=step * dt, vehicles=tuple(vehicles))


def random_world(rng, n=None, spread=400.0):
    n = int(rng.integers(1, 14)) if n is None else n
    vehicles = []
    for i in range(n):
        lane = int(rng.integers(0, 3))
        x = rng.uniform(0, spread) if lane != 2 else rng.uniform(100, 200)
        # occasional positions on exact 5 m boundaries probe touching bumpers
        if rng.random() < 0.2:
            x = float(np.round(x / 5.0) * 5.0)
        status = Status.ACTIVE if rng.random() < 0.85 else Status.PENDING
        vehicles.append(car(i, lane, x, rng.uniform(0, 15), status))
    return world_of(*vehicles)


def oracle_collisions(world, junction=200.0, half=10.0):
    out = []
    vs = world.vehicles
    for a in range(len(vs)):
        for b in range(a + 1, len(vs)):
            p, q = vs[a], vs[b]
            if p.status is not Status.ACTIVE or q.status is not Status.ACTIVE:
                continue
            p_lo, p_hi = p.kinematics.x - p.length, p.kinematics.x
            q_lo, q_hi = q.kinematics.x - q.length, q.kinematics.x
            if not (p_lo < q_hi and q_lo < p_hi):
                continue
            in_window = [v.lane in (0, 2) and v.kinematics.x >= junction - half
                         and v.kinematics.x - v.length <= junction + half for v in (p, q)]
            if p.lane == q.lane or all(in_window):
                out.append(tuple(sorted((p.id, q.id))))
    return sorted(out)


def oracle_neighbors(world, junction=200.0):
    active = [v for v in world.vehicles if v.status is Status.ACTIVE]
    table = {}
    for ego in active:
        ex = ego.kinematics.x
        ahead = [v for v in active if v.id != ego.id and v.lane == ego.lane and v.kinematics.x > ex]
        if not ahead and ego.lane == 2:
            ahead = [v for v in active if v.lane == 0 and v.kinematics.x > junction]
        front = min(ahead, key=lambda v: (v.kinematics.x, v.id)).id if ahead else None
        opp = None
        d_ego = junction - ex
        if ego.lane != 1 and d_ego >= 0:
            other = 2 if ego.lane == 0 else 0
            cands = [v for v in active if v.lane == other and junction - v.kinematics.x >= 0]
            if cands:
                opp = min(cands, key=lambda v: (abs((junction - v.kinematics.x) - d_ego), v.id)).id
        table[ego.id] = (front, opp)
    return table


def igm_instance(rng, n_agents, actions):
    """Random small agent net and mixer; returns (per-agent argmax, exhaustive joint argmax)."""
    import itertools

    from paqmix.gradcheck import random_observations
    from paqmix.qmix import AgentQNet, MixingNetwork, preference_order

    net = AgentQNet(w=2, d_model=4, n_heads=1, ffn_hidden=4, head_hidden=8, actions=actions, rng=rng)
    mixer = MixingNetwork(n_agents, hidden=6, rng=rng)
    obs = random_observations(rng, (n_agents,), 2)
    gs = rng.normal(size=5 * n_agents)
    q = net(obs).data
    local = net.greedy(q)
    rank = np.empty(len(actions), dtype=int)
    rank[preference_order(actions)] = np.arange(len(actions))
    joints = np.array(list(itertools.product(range(len(actions)), repeat=n_agents)))
    chosen = q[np.arange(n_agents), joints]
    q_tot = mixer(chosen, np.tile(gs, (len(joints), 1))).data
    # same tie rule on the joint side: highest value, then most preferred actions agent by agent
    best = min(range(len(joints)), key=lambda k: (-q_tot[k], tuple(rank[joints[k]])))
    return local, joints[best]


def overfit_one_batch(steps=500, seed=0):
    """Fit a frozen synthetic batch against fixed targets; returns the loss trace."""
    from paqmix.config import TrainConfig
    from paqmix.gradcheck import random_observations
    from paqmix.training import Batch, Learner, fit_batch

    rng = np.random.default_rng(seed)
    cfg = TrainConfig(d_model=16, n_heads=2, ffn_hidden=32, head_hidden=32, mixer_hidden=16,
                      lr=1e-3, weight_decay=0.0, batch_size=16)
    B, n = cfg.batch_size, 3
    learner = Learner(cfg, n, rng)
    batch = Batch(obs=random_observations(rng, (B, n), cfg.w), actions=rng.integers(0, 9, (B, n)),
                  mask=np.ones((B, n)), gs=rng.normal(size=(B, 5 * n)), reward=np.zeros(B),
                  next_obs=np.zeros((B, n, 84)), next_mask=np.zeros((B, n)),
                  next_gs=np.zeros((B, 5 * n)), terminal=np.ones(B))
    y = rng.normal(size=B) * 2.0
    return [fit_batch(batch, y, learner) for _ in range(steps)]
