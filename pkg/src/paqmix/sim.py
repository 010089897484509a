"""Deterministic highway-merging microsimulator.

Geometry: a two-lane highway (lanes 0 and 1) on ``x in [0, highway_length]``
and a single-lane ramp (lane 2) running parallel to it on
``[junction_x - ramp_length, junction_x]``. A ramp vehicle whose front reaches
the junction continues on lane 0 at the same ``x``. Within
``junction_x +/- conflict_half_width`` ramp and lane-0 vehicles share one
collision domain. ``x`` is the front bumper; a vehicle occupies
``[x - length, x]``.
"""
import csv
import enum
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .infostate import InformationState


class ScenarioError(RuntimeError):
    pass


class ContractError(RuntimeError):
    pass


class ConfigError(ValueError):
    pass


HIGHWAY_LANES = (0, 1)
RAMP_LANE = 2
LANE_Y = {0: 1.75, 1: 5.25, 2: -1.75}
MAX_ACCEL = 6.0


class Route(str, enum.Enum):
    HW = "HW"
    M = "M"


class Status(str, enum.Enum):
    PENDING = "pending"
    ACTIVE = "active"
    ARRIVED = "arrived"
    CRASHED = "crashed"


@dataclass(frozen=True)
class KinematicState:
    x: float
    y: float
    v: float
    a: float = 0.0

    def as_array(self):
        return np.array([self.x, self.y, self.v, self.a])


@dataclass(frozen=True)
class VehicleRecord:
    id: int
    route: Route
    lane: int
    depart_time: float
    desired_velocity: float
    kinematics: KinematicState
    status: Status = Status.PENDING
    length: float = 5.0


@dataclass(frozen=True)
class ScenarioConfig:
    n_agents: int = 16
    hw_speed_range: tuple = (7.0, 10.0)
    merge_speed_range: tuple = (4.0, 8.0)
    depart_range: tuple = (0.0, 100.0)
    highway_length: float = 400.0
    ramp_length: float = 100.0
    dt: float = 0.1
    max_steps: int = 1000
    seed: int = 0
    vehicle_length: float = 5.0
    junction_x: float = 200.0
    conflict_half_width: float = 10.0
    v_max: float = 15.0
    hw_desired_velocity: float = 12.0
    merge_desired_velocity: float = 10.0
    waiting_speed: float = 0.1
    w: int = 9
    gap_attempts: int = 100

    def __post_init__(self):
        for name in ("hw_speed_range", "merge_speed_range", "depart_range"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ConfigError(f"{name} is empty: {lo} > {hi}")
            object.__setattr__(self, name, (float(lo), float(hi)))
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.max_steps <= 0:
            raise ConfigError("max_steps must be positive")
        if self.n_agents <= 0:
            raise ConfigError("n_agents must be positive")
        if self.ramp_length > self.junction_x or self.junction_x > self.highway_length:
            raise ConfigError("junction must sit between ramp start and highway exit")
        if self.w < 0:
            raise ConfigError("history window must be non-negative")

    @property
    def ramp_start(self):
        return self.junction_x - self.ramp_length

    @property
    def window(self):
        return (self.junction_x - self.conflict_half_width, self.junction_x + self.conflict_half_width)

    def spawn_x(self, lane):
        return self.ramp_start if lane == RAMP_LANE else 0.0


@dataclass(frozen=True)
class StepEvents:
    time: float
    collisions: tuple = ()
    arrivals: tuple = ()
    departures: tuple = ()
    waiting: dict = field(default_factory=dict)
    emergency_brakes: tuple = ()

    def log_lines(self):
        lines = []
        for kind, ids in (("depart", self.departures), ("arrival", self.arrivals)):
            if ids:
                lines.append(f"t={self.time:.1f} event={kind} ids={','.join(str(i) for i in ids)}")
        for a, b in self.collisions:
            lines.append(f"t={self.time:.1f} event=collision ids={a},{b}")
        return lines


@dataclass(frozen=True)
class WorldState:
    step: int
    time: float
    vehicles: tuple
    collision_count_step: int = 0
    arrivals_step: int = 0
    waiting_time_step: float = 0.0
    done: bool = False

    def by_status(self, status):
        return [v for v in self.vehicles if v.status is status]

    @property
    def active_ids(self):
        return [v.id for v in self.vehicles if v.status is Status.ACTIVE]


def _lane_arrays(world):
    veh = world.vehicles
    x = np.array([v.kinematics.x for v in veh], dtype=np.float64)
    lane = np.array([v.lane for v in veh], dtype=np.int64)
    length = np.array([v.length for v in veh], dtype=np.float64)
    active = np.array([v.status is Status.ACTIVE for v in veh], dtype=np.bool_)
    return x, lane, length, active


# ---------------------------------------------------------------------------
# scenario generation
# ---------------------------------------------------------------------------


def _spacing_violations(times, speeds, length):
    """Indices of vehicles departing too soon after their same-lane predecessor."""
    order = np.argsort(times, kind="stable")
    t, v = times[order], speeds[order]
    # leader keeps its initial speed until the follower departs
    bad = v[:-1] * np.diff(t) - length < 2.0 * length
    return order[1:][bad]


def generate_scenario(config, seed=None):
    """Sample ``n_agents`` vehicles.

    Departures that follow a same-lane predecessor too closely are redrawn, up to
    ``gap_attempts`` rounds.
    """
    seed = config.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    n = config.n_agents
    routes = rng.integers(0, 2, size=n)
    hw_lane = rng.integers(0, 2, size=n)
    u = rng.random(n)
    speeds = np.empty(n)
    lanes = np.empty(n, dtype=np.int64)
    for i in range(n):
        lo, hi = config.hw_speed_range if routes[i] == 0 else config.merge_speed_range
        speeds[i] = lo + (hi - lo) * u[i]
        lanes[i] = hw_lane[i] if routes[i] == 0 else RAMP_LANE
    d_lo, d_hi = config.depart_range
    departs = np.empty(n)
    for lane in (0, 1, RAMP_LANE):
        members = np.nonzero(lanes == lane)[0]
        if members.size == 0:
            continue
        times = rng.uniform(d_lo, d_hi, size=members.size)
        for _ in range(config.gap_attempts):
            bad = _spacing_violations(times, speeds[members], config.vehicle_length)
            if bad.size == 0:
                break
            times[bad] = rng.uniform(d_lo, d_hi, size=bad.size)
        else:
            raise ScenarioError(
                f"could not space {members.size} departures on lane {lane} "
                f"within {config.gap_attempts} attempts")
        departs[members] = times
    vehicles = []
    for i in range(n):
        route = Route.HW if routes[i] == 0 else Route.M
        lane = int(lanes[i])
        vehicles.append(VehicleRecord(
            id=i,
            route=route,
            lane=lane,
            depart_time=float(departs[i]),
            desired_velocity=config.hw_desired_velocity if route is Route.HW else config.merge_desired_velocity,
            kinematics=KinematicState(config.spawn_x(lane), LANE_Y[lane], float(speeds[i]), 0.0),
            length=config.vehicle_length,
        ))
    return vehicles


def make_vehicle(config, vid, route, depart_time, speed, lane=None):
    route = Route(route)
    if lane is None:
        lane = 0 if route is Route.HW else RAMP_LANE
    return VehicleRecord(
        id=vid, route=route, lane=lane, depart_time=float(depart_time),
        desired_velocity=config.hw_desired_velocity if route is Route.HW else config.merge_desired_velocity,
        kinematics=KinematicState(config.spawn_x(lane), LANE_Y[lane], float(speed), 0.0),
        length=config.vehicle_length,
    )


def save_scenario(path, vehicles):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["route", "lane", "depart_time", "speed"])
        for v in vehicles:
            writer.writerow([v.route.value, v.lane, repr(v.depart_time), repr(v.kinematics.v)])


def load_scenario(path, config):
    """Read a scenario file: CSV with columns route, lane, depart_time, speed."""
    vehicles = []
    with open(path, newline="") as fh:
        for vid, row in enumerate(csv.DictReader(fh)):
            try:
                lane = int(row["lane"]) if row.get("lane") not in (None, "") else None
                vehicles.append(make_vehicle(config, vid, row["route"].strip(),
                                             float(row["depart_time"]), float(row["speed"]), lane))
            except (KeyError, ValueError) as exc:
                raise ScenarioError(f"{path}: bad row {vid + 1}: {exc}") from None
    return vehicles


def initial_world(vehicles):
    return WorldState(step=0, time=0.0, vehicles=tuple(sorted(vehicles, key=lambda v: v.id)))


# ---------------------------------------------------------------------------
# dynamics
# ---------------------------------------------------------------------------


def insertion_gap(config, speed):
    """Clear distance required ahead of a departing vehicle (stopping distance at full braking)."""
    return 2.0 * config.vehicle_length + speed * speed / (2.0 * MAX_ACCEL)


def step(world, joint_action, config, emergency_brakes=()):
    """Advance one ``dt``. ``joint_action`` maps every active vehicle id to an acceleration."""
    if world.done:
        raise ContractError("step called on a finished episode")
    active_ids = set(world.active_ids)
    given = set(joint_action)
    if given - active_ids:
        raise ContractError(f"actions given for non-active vehicles {sorted(given - active_ids)}")
    if active_ids - given:
        raise ContractError(f"missing actions for active vehicles {sorted(active_ids - given)}")

    veh = list(world.vehicles)
    n = len(veh)
    x = np.array([v.kinematics.x for v in veh])
    vel = np.array([v.kinematics.v for v in veh])
    acc = np.zeros(n)
    active = np.array([v.status is Status.ACTIVE for v in veh], dtype=np.bool_)
    for k, v in enumerate(veh):
        if active[k]:
            a = float(joint_action[v.id])
            if not -MAX_ACCEL - 1e-12 <= a <= MAX_ACCEL + 1e-12:
                raise ContractError(f"acceleration {a} for vehicle {v.id} outside [-6, 6]")
            acc[k] = a
    x_new, v_new = kernels.integrate(x, vel, acc, active, config.dt, config.v_max)

    new_step = world.step + 1
    time = new_step * config.dt
    arrivals = []
    for k, v in enumerate(veh):
        if not active[k]:
            continue
        lane = v.lane
        if lane == RAMP_LANE and x_new[k] >= config.junction_x:
            lane = 0
        status = Status.ACTIVE
        if x_new[k] >= config.highway_length:
            status = Status.ARRIVED
            arrivals.append(v.id)
        veh[k] = replace(v, lane=lane, status=status,
                         kinematics=KinematicState(float(x_new[k]), LANE_Y[lane], float(v_new[k]), float(acc[k])))

    departures = []
    pending = sorted((k for k, v in enumerate(veh) if v.status is Status.PENDING),
                     key=lambda k: (veh[k].depart_time, veh[k].id))
    for k in pending:
        v = veh[k]
        if v.depart_time > time + 1e-9:
            continue
        spawn = config.spawn_x(v.lane)
        need = insertion_gap(config, v.kinematics.v)
        blocked = any(
            o.status is Status.ACTIVE and o.lane == v.lane
            and o.kinematics.x - o.length - spawn < need
            for o in veh)
        if blocked:
            continue
        veh[k] = replace(v, status=Status.ACTIVE)
        departures.append(v.id)

    snapshot = WorldState(new_step, time, tuple(veh))
    collisions = detect_collisions(snapshot, config)
    crashed = {i for pair in collisions for i in pair}
    if crashed:
        veh = [replace(v, status=Status.CRASHED) if v.id in crashed else v for v in veh]
    waiting = {v.id: config.dt for v in veh
               if v.status is Status.ACTIVE and v.kinematics.v < config.waiting_speed}
    all_done = all(v.status in (Status.ARRIVED, Status.CRASHED) for v in veh)
    done = bool(collisions) or new_step >= config.max_steps or all_done
    new_world = WorldState(
        step=new_step,
        time=time,
        vehicles=tuple(veh),
        collision_count_step=len(collisions),
        arrivals_step=len(arrivals),
        waiting_time_step=float(sum(waiting.values())),
        done=done,
    )
    events = StepEvents(time, tuple(collisions), tuple(arrivals), tuple(departures), waiting,
                        tuple(emergency_brakes))
    return new_world, events


def detect_collisions(world, config):
    """Overlapping active pairs sharing a lane or the junction conflict window, sorted by id."""
    x, lane, length, active = _lane_arrays(world)
    lo, hi = config.window
    pairs = kernels.collision_pairs(x, length, lane, active, lo, hi)
    ids = [v.id for v in world.vehicles]
    out = sorted(tuple(sorted((ids[i], ids[j]))) for i, j in pairs)
    return out


def neighbor_table(world, config):
    """(front, opposite) vehicle id per vehicle id; ``None`` when absent."""
    x, lane, _, active = _lane_arrays(world)
    front, opp = kernels.neighbors(x, lane, active, config.junction_x)
    ids = [v.id for v in world.vehicles]
    table = {}
    for k, vid in enumerate(ids):
        if active[k]:
            table[vid] = (ids[front[k]] if front[k] >= 0 else None,
                          ids[opp[k]] if opp[k] >= 0 else None)
    return table


def _vehicle(world, vid):
    for v in world.vehicles:
        if v.id == vid:
            return v
    raise KeyError(vid)


def front_vehicle(world, i, config):
    if _vehicle(world, i).status is not Status.ACTIVE:
        raise ContractError(f"vehicle {i} is not active")
    return neighbor_table(world, config)[i][0]


def opposite_vehicle(world, i, config):
    if _vehicle(world, i).status is not Status.ACTIVE:
        raise ContractError(f"vehicle {i} is not active")
    return neighbor_table(world, config)[i][1]


# ---------------------------------------------------------------------------
# histories and observations
# ---------------------------------------------------------------------------


class HistoryBuffer:
    """Last ``w + 1`` kinematic states of every vehicle, oldest row first.

    Pending vehicles record zero rows; arrived and crashed vehicles stop updating.
    """

    def __init__(self, n_vehicles, w):
        self.w = w
        self.data = np.zeros((n_vehicles, w + 1, 4))
        self.step = -1

    def push(self, world):
        for k, v in enumerate(world.vehicles):
            if v.status is Status.ACTIVE:
                row = v.kinematics.as_array()
            elif v.status is Status.PENDING:
                row = np.zeros(4)
            else:
                continue
            self.data[k, :-1] = self.data[k, 1:]
            self.data[k, -1] = row
        self.step = world.step

    def window(self, k):
        return self.data[k].copy()


def observe(world, i, histories, config, table=None):
    """Information state ``[own; front history; opposite history]`` of vehicle ``i``."""
    if histories.step != world.step:
        raise ContractError(f"history buffer is at step {histories.step}, world at {world.step}")
    ego = _vehicle(world, i)
    if ego.status is not Status.ACTIVE:
        raise ContractError(f"vehicle {i} is not active")
    table = neighbor_table(world, config) if table is None else table
    front, opp = table[i]
    index = {v.id: k for k, v in enumerate(world.vehicles)}
    zeros = np.zeros((histories.w + 1, 4))
    return InformationState(
        ego.kinematics.as_array(),
        histories.window(index[front]) if front is not None else zeros,
        histories.window(index[opp]) if opp is not None else zeros,
    )
