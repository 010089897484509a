"""Agent utility network, monotonic mixer, targets and loss."""
import numpy as np

from .autograd import (
    Tensor,
    ShapeError,
    absolute,
    add,
    elu,
    gather_last,
    matmul,
    mean_all,
    mul,
    relu,
    reshape,
    square,
    sub,
)
from .encoder import EncoderParams, encode
from .infostate import KINEMATIC_SCALE, InformationState, info_dim
from .nn import Affine, Module

ACTIONS = (-6.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 6.0)


def preference_order(actions):
    """Action indices sorted by tie-break priority: smaller |a| first, then negative."""
    return np.array(sorted(range(len(actions)), key=lambda k: (abs(actions[k]), actions[k] > 0)))


def noop_index(actions):
    return int(preference_order(actions)[0])


class AgentQNet(Module):
    """Shared per-agent utility: encoder followed by a two-layer head."""

    def __init__(self, w=9, d_model=32, n_heads=4, ffn_hidden=64, head_hidden=64,
                 actions=ACTIONS, ablate_attention=False, rng=None):
        rng = np.random.default_rng(0) if rng is None else rng
        self.enc = EncoderParams(w, d_model, n_heads, ffn_hidden, rng)
        self.fc1 = Affine(self.enc.out_dim, head_hidden, rng)
        self.fc2 = Affine(head_hidden, len(actions), rng)
        self.actions = tuple(float(a) for a in actions)
        self.ablate_attention = ablate_attention
        self._order = preference_order(self.actions)

    @property
    def n_actions(self):
        return len(self.actions)

    def __call__(self, obs):
        """Action values for raw observation vectors of shape (..., 4 + 8(w+1))."""
        obs = np.asarray(obs, dtype=np.float64)
        if obs.shape[-1] != info_dim(self.enc.w):
            raise ShapeError(f"observation width {obs.shape[-1]} != {info_dim(self.enc.w)}")
        s = InformationState.from_vector(obs, self.enc.w).scaled()
        h = relu(self.fc1(encode(s, self.enc, self.ablate_attention)))
        return self.fc2(h)

    def greedy(self, q):
        """Tie-aware argmax over the last axis of a Q array."""
        return greedy_from_values(q, self._order)


def agent_q(obs, net):
    if isinstance(obs, InformationState):
        obs = obs.as_vector()
    return net(obs)


def greedy_from_values(q, order):
    q = np.asarray(q)
    # np.argmax keeps the first maximum, so permuting by priority resolves ties
    return order[np.argmax(q[..., order], axis=-1)]


def greedy_joint_action(obs, net):
    """Per-agent argmax of each agent's own utilities; ``obs`` is (N, obs_dim)."""
    return net.greedy(agent_q(obs, net).data)


def epsilon_greedy(obs, net, epsilon, rng):
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    greedy = greedy_joint_action(obs, net)
    explore = rng.random(greedy.shape) < epsilon
    random_actions = rng.integers(0, net.n_actions, size=greedy.shape)
    return np.where(explore, random_actions, greedy)


def global_state(kinematics, active):
    """Fixed-length mixer conditioning: 4N scaled kinematics (zeros when inactive) then N flags."""
    kinematics = np.asarray(kinematics, dtype=np.float64)
    active = np.asarray(active, dtype=bool)
    scaled = kinematics / KINEMATIC_SCALE * active[..., None]
    lead = scaled.shape[:-2]
    return np.concatenate([scaled.reshape(lead + (-1,)), active.astype(np.float64)], axis=-1)


class MixingNetwork(Module):
    """Hypernetwork mixer whose agent-facing weights pass through ``abs``."""

    def __init__(self, n_agents, state_dim=None, hidden=32, rng=None):
        rng = np.random.default_rng(0) if rng is None else rng
        state_dim = 5 * n_agents if state_dim is None else state_dim
        self.n_agents = n_agents
        self.hidden = hidden
        self.hyper_w1 = Affine(state_dim, n_agents * hidden, rng)
        self.hyper_b1 = Affine(state_dim, hidden, rng)
        self.hyper_w2 = Affine(state_dim, hidden, rng)
        self.hyper_b2_hidden = Affine(state_dim, hidden, rng)
        self.hyper_b2_out = Affine(hidden, 1, rng)

    def __call__(self, q, gs):
        """``q``: (B, N) chosen-action values; ``gs``: (B, state_dim). Returns (B,)."""
        q = q if isinstance(q, Tensor) else Tensor(q)
        gs = Tensor(gs)
        B, n, h = q.shape[0], self.n_agents, self.hidden
        if q.shape != (B, n):
            raise ShapeError(f"mixer expects q of shape (B, {n}), got {q.shape}")
        w1 = absolute(reshape(self.hyper_w1(gs), (B, n, h)))
        b1 = reshape(self.hyper_b1(gs), (B, 1, h))
        hidden = elu(add(matmul(reshape(q, (B, 1, n)), w1), b1))
        w2 = absolute(reshape(self.hyper_w2(gs), (B, h, 1)))
        b2 = self.hyper_b2_out(relu(self.hyper_b2_hidden(gs)))
        return reshape(add(reshape(matmul(hidden, w2), (B, 1)), b2), (B,))


def mix(q_values, gs, mnet):
    return mnet(q_values, gs)


def chosen_values(q_net, obs, actions, mask):
    """Masked Q-values of the taken actions, shape (B, N)."""
    q = q_net(obs)
    picked = gather_last(q, actions)
    return mul(picked, Tensor(np.asarray(mask, dtype=np.float64)))


def td_target(batch, target_q, target_mixer, gamma):
    """One-step target with the greedy next joint action under the target nets."""
    q_next = target_q(batch.next_obs).data
    a_next = target_q.greedy(q_next)
    picked = np.take_along_axis(q_next, a_next[..., None], axis=-1)[..., 0] * batch.next_mask
    q_tot = target_mixer(picked, batch.next_gs).data
    return batch.reward + gamma * (1.0 - batch.terminal) * q_tot


def qmix_loss(batch, q_net, mixer, y):
    """Mean squared TD error over the batch."""
    q_tot = mixer(chosen_values(q_net, batch.obs, batch.actions, batch.mask), batch.gs)
    return mean_all(square(sub(Tensor(np.asarray(y, dtype=np.float64)), q_tot)))


def discounted_return(rewards, gamma):
    """``G_0 = sum_k gamma^k r(k+1)``, accumulated backwards from ``G_T = 0``."""
    g = 0.0
    for r in reversed(list(rewards)):
        g = r + gamma * g
    return g


def discounted_return_direct(rewards, gamma):
    return float(sum(gamma ** k * r for k, r in enumerate(rewards)))
