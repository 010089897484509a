"""Replay, exploration schedule, episode loop, learner and evaluation."""
import csv
import os
from dataclasses import dataclass, field

import numpy as np

from .autograd import AdamW, Tape
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .env import HighwayEnv
from .qmix import (
    AgentQNet,
    MixingNetwork,
    discounted_return,
    epsilon_greedy,
    noop_index,
    qmix_loss,
    td_target,
)
from .sim import Status

METRIC_COLUMNS = ("episode", "steps", "return", "total_reward", "mean_velocity", "collisions",
                  "fuel_total", "arrivals", "epsilon", "mean_loss")
EVAL_SEED_OFFSET = 1_000_000


# ---------------------------------------------------------------------------
# replay
# ---------------------------------------------------------------------------


@dataclass
class Batch:
    obs: np.ndarray
    actions: np.ndarray
    mask: np.ndarray
    gs: np.ndarray
    reward: np.ndarray
    next_obs: np.ndarray
    next_mask: np.ndarray
    next_gs: np.ndarray
    terminal: np.ndarray

    def __len__(self):
        return self.reward.shape[0]


class ReplayBuffer:
    """FIFO ring of joint transitions with uniform sampling.

    Storage grows geometrically up to ``capacity``; observations are stored as
    float32 to halve memory and widened back to float64 on sampling.
    """

    _FIELDS = {
        "obs": np.float32, "actions": np.int64, "mask": np.bool_, "gs": np.float64,
        "reward": np.float64, "next_obs": np.float32, "next_mask": np.bool_,
        "next_gs": np.float64, "terminal": np.bool_,
    }

    def __init__(self, capacity):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.size = 0
        self.inserted = 0
        self._next = 0
        self._store = None

    def __len__(self):
        return self.size

    def _allocate(self, sample, rows):
        store = {}
        for name, dtype in self._FIELDS.items():
            shape = np.shape(sample[name])
            store[name] = np.zeros((rows,) + shape, dtype=dtype)
            if self._store is not None:
                store[name][: self.size] = self._store[name][: self.size]
        self._store = store

    def add(self, obs, actions, mask, gs, reward, next_obs, next_mask, next_gs, terminal):
        row = dict(obs=obs, actions=actions, mask=mask, gs=gs, reward=reward, next_obs=next_obs,
                   next_mask=next_mask, next_gs=next_gs, terminal=terminal)
        if self._store is None:
            self._allocate(row, min(self.capacity, 1024))
        rows = self._store["reward"].shape[0]
        if self._next >= rows and rows < self.capacity:
            self._allocate(row, min(self.capacity, 2 * rows))
        for name, value in row.items():
            self._store[name][self._next] = value
        self._next = (self._next + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        self.inserted += 1

    def _ordered_index(self, k):
        """Physical slot of the k-th oldest stored transition."""
        start = 0 if self.inserted <= self.capacity else self._next
        return (start + k) % self.capacity

    def transition(self, k):
        if not 0 <= k < self.size:
            raise IndexError(k)
        i = self._ordered_index(k)
        return {name: arr[i] for name, arr in self._store.items()}

    def sample_indices(self, batch_size, rng):
        return rng.integers(0, self.size, size=batch_size)

    def sample(self, batch_size, rng):
        if self.size < batch_size:
            raise ValueError(f"buffer holds {self.size} < {batch_size} transitions")
        idx = self.sample_indices(batch_size, rng)
        s = self._store
        return Batch(
            obs=s["obs"][idx].astype(np.float64),
            actions=s["actions"][idx],
            mask=s["mask"][idx].astype(np.float64),
            gs=s["gs"][idx],
            reward=s["reward"][idx],
            next_obs=s["next_obs"][idx].astype(np.float64),
            next_mask=s["next_mask"][idx].astype(np.float64),
            next_gs=s["next_gs"][idx],
            terminal=s["terminal"][idx].astype(np.float64),
        )


# ---------------------------------------------------------------------------
# schedule and learner
# ---------------------------------------------------------------------------


def epsilon_at(k, cfg):
    """Exploration rate for episode ``k`` (0-based), decayed once per episode."""
    if k < 0:
        raise ValueError("episode index must be non-negative")
    return max(cfg.eps_min, cfg.eps_start * cfg.eps_decay ** k)


def build_networks(cfg, n_agents, rng):
    q_net = AgentQNet(cfg.w, cfg.d_model, cfg.n_heads, cfg.ffn_hidden, cfg.head_hidden,
                      cfg.actions, cfg.ablate_attention, rng)
    mixer = MixingNetwork(n_agents, hidden=cfg.mixer_hidden, rng=rng)
    return q_net, mixer


class Learner:
    """Online nets, frozen target copies and the optimiser."""

    def __init__(self, cfg, n_agents, rng, q_net=None, mixer=None):
        self.cfg = cfg
        if q_net is None:
            q_net, mixer = build_networks(cfg, n_agents, rng)
        self.q_net = q_net
        self.mixer = mixer
        self.target_q = q_net.clone()
        self.target_mixer = mixer.clone()
        self.optimizer = AdamW(q_net.parameters() + mixer.parameters(), lr=cfg.lr,
                               weight_decay=cfg.weight_decay)
        self.updates = 0

    def parameters(self):
        return self.optimizer.params


def train_step(buffer, learner, rng):
    """One gradient update on a sampled mini-batch; ``None`` while the buffer is too small."""
    cfg = learner.cfg
    if len(buffer) < cfg.batch_size:
        return None
    batch = buffer.sample(cfg.batch_size, rng)
    batch.reward = batch.reward * cfg.reward_scale
    y = td_target(batch, learner.target_q, learner.target_mixer, cfg.gamma)
    return fit_batch(batch, y, learner)


def fit_batch(batch, y, learner):
    cfg = learner.cfg
    learner.optimizer.zero_grad()
    with Tape() as tape:
        loss = qmix_loss(batch, learner.q_net, learner.mixer, y)
    tape.backward(loss)
    if cfg.grad_clip > 0:
        norm = np.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in learner.parameters()))
        if norm > cfg.grad_clip:
            for p in learner.parameters():
                p.grad *= cfg.grad_clip / norm
    learner.optimizer.step()
    learner.updates += 1
    return loss.item()


def sync_targets(learner, k, cfg):
    """Hard-copy online weights into the targets when ``k`` is a multiple of the interval."""
    if k % cfg.target_update_interval:
        return False
    learner.target_q.copy_from(learner.q_net)
    learner.target_mixer.copy_from(learner.mixer)
    return True


# ---------------------------------------------------------------------------
# policies
# ---------------------------------------------------------------------------


class QPolicy:
    """Decentralised execution: each active agent acts on its own observation."""

    def __init__(self, q_net):
        self.q_net = q_net
        self.actions = np.array(q_net.actions)
        self.noop = noop_index(q_net.actions)

    def act(self, env, obs, mask, epsilon, rng):
        idx = np.full(mask.shape[0], self.noop, dtype=np.int64)
        active = np.nonzero(mask)[0]
        if active.size:
            idx[active] = epsilon_greedy(obs[active], self.q_net, epsilon, rng)
        return {int(i): float(self.actions[idx[i]]) for i in active}, idx, ()


class RandomPolicy:
    def __init__(self, actions):
        self.actions = np.array(actions, dtype=np.float64)
        self.noop = noop_index(actions)

    def act(self, env, obs, mask, epsilon, rng):
        idx = np.full(mask.shape[0], self.noop, dtype=np.int64)
        active = np.nonzero(mask)[0]
        idx[active] = rng.integers(0, len(self.actions), size=active.size)
        return {int(i): float(self.actions[idx[i]]) for i in active}, idx, ()


class IDMPolicy:
    def act(self, env, obs, mask, epsilon, rng):
        joint, emergency = env.idm_action()
        return joint, None, emergency


# ---------------------------------------------------------------------------
# episodes
# ---------------------------------------------------------------------------


@dataclass
class EpisodeStats:
    steps: int
    return_: float
    total_reward: float
    mean_velocity: float
    collisions: int
    fuel_total: float
    arrivals: int
    rewards: list = field(default_factory=list)
    losses: list = field(default_factory=list)

    @property
    def mean_loss(self):
        return float(np.mean(self.losses)) if self.losses else float("nan")


def run_episode(env, policy, epsilon, rng, seed=None, gamma=0.99, buffer=None, learner=None,
                vehicles=None, on_step=None):
    """Play one episode to termination, optionally storing transitions and training."""
    env.reset(seed, vehicles)
    obs, mask = env.observations()
    gs = env.global_state()
    rewards, losses, speeds = [], [], []
    fuel = 0.0
    collisions = arrivals = 0
    cfg = learner.cfg if learner is not None else None
    while not env.world.done:
        joint, idx, emergency = policy.act(env, obs, mask, epsilon, rng)
        world, events, r = env.step(joint, emergency)
        next_obs, next_mask = env.observations()
        next_gs = env.global_state()
        finished = all(v.status in (Status.ARRIVED, Status.CRASHED) for v in world.vehicles)
        terminal = bool(events.collisions) or finished
        if buffer is not None and idx is not None:
            buffer.add(obs, idx, mask, gs, r, next_obs, next_mask, next_gs, terminal)
        if learner is not None and world.step % cfg.update_every == 0:
            for _ in range(cfg.updates_per_step):
                loss = train_step(buffer, learner, rng)
                if loss is not None:
                    losses.append(loss)
        rewards.append(r)
        collisions += len(events.collisions)
        arrivals += len(events.arrivals)
        metrics = env.last_metrics
        fuel += float(metrics.fuel.sum())
        if metrics.velocity.size:
            speeds.append(float(metrics.velocity.mean()))
        if on_step is not None:
            on_step(env, events, r)
        obs, mask, gs = next_obs, next_mask, next_gs
    return EpisodeStats(
        steps=env.world.step,
        return_=discounted_return(rewards, gamma),
        total_reward=float(np.sum(rewards)),
        mean_velocity=float(np.mean(speeds)) if speeds else 0.0,
        collisions=collisions,
        fuel_total=fuel,
        arrivals=arrivals,
        rewards=rewards,
        losses=losses,
    )


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def model_meta(cfg, n_agents):
    return {
        "w": cfg.w, "d_model": cfg.d_model, "n_heads": cfg.n_heads, "n_actions": len(cfg.actions),
        "actions": list(cfg.actions), "ffn_hidden": cfg.ffn_hidden, "head_hidden": cfg.head_hidden,
        "mixer_hidden": cfg.mixer_hidden, "n_agents": n_agents,
        "ablate_attention": bool(cfg.ablate_attention),
    }


def model_arrays(q_net, mixer):
    arrays = {}
    for name, p in q_net.named_parameters():
        arrays[name if name.startswith("enc.") else f"qnet.{name}"] = p.data
    arrays["enc.alpha"] = q_net.enc.alpha
    for name, p in mixer.named_parameters():
        arrays[f"mixer.{name}"] = p.data
    return arrays


def save_model(path, q_net, mixer, cfg):
    save_checkpoint(path, model_arrays(q_net, mixer), model_meta(cfg, mixer.n_agents))


def load_model(path):
    """Rebuild networks from a checkpoint, validating every stored shape."""
    meta, arrays = load_checkpoint(path)
    try:
        q_net = AgentQNet(meta["w"], meta["d_model"], meta["n_heads"], meta["ffn_hidden"],
                          meta["head_hidden"], tuple(meta["actions"]), meta["ablate_attention"])
        mixer = MixingNetwork(meta["n_agents"], hidden=meta["mixer_hidden"])
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"bad checkpoint header: {exc}") from None
    expected = model_arrays(q_net, mixer)
    if set(expected) != set(arrays):
        raise CheckpointError(f"parameter names differ: {sorted(set(expected) ^ set(arrays))}")
    for name, value in expected.items():
        if arrays[name].shape != value.shape:
            raise CheckpointError(f"{name}: expected shape {value.shape}, found {arrays[name].shape}")
    for name, p in q_net.named_parameters():
        p.data[...] = arrays[name if name.startswith("enc.") else f"qnet.{name}"]
    for name, p in mixer.named_parameters():
        p.data[...] = arrays[f"mixer.{name}"]
    return q_net, mixer, meta


# ---------------------------------------------------------------------------
# training and evaluation drivers
# ---------------------------------------------------------------------------


def _fmt(x):
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def train(run_cfg, out_dir=None, log=None, episodes=None):
    """Full training loop. Writes ``metrics.csv`` and checkpoints when ``out_dir`` is given.

    Returns ``(learner, rows)`` where rows are the metric dicts per episode.
    """
    cfg = run_cfg.train
    episodes = cfg.episodes if episodes is None else episodes
    env = HighwayEnv(run_cfg.scenario, run_cfg.reward)
    init_seq, act_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    learner = Learner(cfg, run_cfg.scenario.n_agents, np.random.default_rng(init_seq))
    rng = np.random.default_rng(act_seq)
    buffer = ReplayBuffer(cfg.buffer_capacity)
    policy = QPolicy(learner.q_net)
    rows = []
    writer = fh = None
    best = -np.inf
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        fh = open(os.path.join(out_dir, "metrics.csv"), "w", newline="")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRIC_COLUMNS)
    try:
        for k in range(episodes):
            eps = epsilon_at(k, cfg)
            stats = run_episode(env, policy, eps, rng, seed=cfg.seed + k, gamma=cfg.gamma,
                                buffer=buffer, learner=learner)
            sync_targets(learner, k + 1, cfg)
            row = {
                "episode": k + 1, "steps": stats.steps, "return": stats.return_,
                "total_reward": stats.total_reward, "mean_velocity": stats.mean_velocity,
                "collisions": stats.collisions, "fuel_total": stats.fuel_total,
                "arrivals": stats.arrivals, "epsilon": eps, "mean_loss": stats.mean_loss,
            }
            rows.append(row)
            if writer is not None:
                writer.writerow([_fmt(row[c]) for c in METRIC_COLUMNS])
                fh.flush()
                if (k + 1) % cfg.checkpoint_interval == 0:
                    save_model(os.path.join(out_dir, f"ckpt_ep{k + 1:04d}.bin"),
                               learner.q_net, learner.mixer, cfg)
                recent = float(np.mean([r["total_reward"] for r in rows[-10:]]))
                if recent > best:
                    best = recent
                    save_model(os.path.join(out_dir, "best.bin"), learner.q_net, learner.mixer, cfg)
            if log is not None:
                log(row)
        if out_dir is not None:
            save_model(os.path.join(out_dir, "final.bin"), learner.q_net, learner.mixer, cfg)
    finally:
        if fh is not None:
            fh.close()
    return learner, rows


def eval_seeds(n, start=EVAL_SEED_OFFSET):
    return list(range(start, start + n))


@dataclass
class EvalReport:
    policy: str
    episodes: list

    def _column(self, key):
        return np.array([getattr(e, key) for e in self.episodes], dtype=np.float64)

    def summary(self):
        out = {"policy": self.policy, "episodes": len(self.episodes)}
        for key, label in (("total_reward", "reward"), ("return_", "return"),
                           ("mean_velocity", "velocity"), ("collisions", "collisions"),
                           ("fuel_total", "fuel")):
            col = self._column(key)
            out[f"{label}_mean"] = float(col.mean())
            out[f"{label}_std"] = float(col.std())
        return out

    @property
    def mean_reward(self):
        return float(self._column("total_reward").mean())


def evaluate(policy, run_cfg, seeds, name="policy"):
    """Greedy (epsilon = 0) episodes over the given scenario seeds."""
    env = HighwayEnv(run_cfg.scenario, run_cfg.reward)
    episodes = []
    for s in seeds:
        rng = np.random.default_rng(s)
        episodes.append(run_episode(env, policy, 0.0, rng, seed=s, gamma=run_cfg.train.gamma))
    return EvalReport(name, episodes)
