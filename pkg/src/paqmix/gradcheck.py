"""Central finite-difference verification of every differentiable building block.

Each suite draws random shapes and weights, reduces the block's output to a
scalar with a fixed random readout, and compares the tape gradient of every
leaf against ``(f(p + h) - f(p - h)) / 2h``. Configurations whose relu/abs
inputs come within ``KINK_MARGIN`` of zero are redrawn so the comparison never
straddles a kink.
"""
from dataclasses import dataclass

import numpy as np

from .autograd import Parameter, Tape, Tensor, layer_norm, mul, sum_all
from .encoder import EncoderParams, encode
from .infostate import KINEMATIC_SCALE, InformationState, info_dim
from .nn import FFN, attention_head, ffn_residual, multi_head_attention, uniform_init
from .qmix import AgentQNet, MixingNetwork, global_state, qmix_loss

H = 1e-5
TOLERANCE = 1e-6
KINK_MARGIN = 1e-3
MAX_ENTRIES = 24


@dataclass
class CheckResult:
    suite: str
    config: int
    max_rel_error: float
    n_entries: int

    @property
    def passed(self):
        return self.max_rel_error < TOLERANCE


def relative_error(analytic, numeric):
    """Max-norm relative error between two gradient vectors."""
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)))
    if scale < 1e-10:
        return 0.0
    return float(np.max(np.abs(analytic - numeric)) / scale)


def check_gradients(leaves, loss_fn, rng, h=H, max_entries=MAX_ENTRIES):
    """Return ``(max relative error, entries checked, kink margin)`` for ``loss_fn``."""
    for p in leaves:
        p.grad = np.zeros_like(p.data)
    with Tape() as tape:
        loss = loss_fn()
    tape.backward(loss)
    analytic_all, numeric_all = [], []
    for p in leaves:
        flat = p.data.reshape(-1)
        n = flat.size
        picks = np.arange(n) if n <= max_entries else rng.choice(n, size=max_entries, replace=False)
        analytic = p.grad.reshape(-1)[picks]
        numeric = np.empty(picks.size)
        for j, k in enumerate(picks):
            old = flat[k]
            flat[k] = old + h
            up = loss_fn().item()
            flat[k] = old - h
            down = loss_fn().item()
            flat[k] = old
            numeric[j] = (up - down) / (2.0 * h)
        analytic_all.append(analytic)
        numeric_all.append(numeric)
    # normalised by the whole gradient: a leaf whose gradient is ~1e-6 would
    # otherwise be judged on finite-difference rounding noise alone
    a, n = np.concatenate(analytic_all), np.concatenate(numeric_all)
    return relative_error(a, n), a.size, tape.kink_margin


def _leaf(rng, shape, lo=-1.0, hi=1.0):
    return Tensor(rng.uniform(lo, hi, size=shape), requires_grad=True)


def _readout(out, rng):
    return Tensor(rng.normal(size=out.shape))


def _scalar(fn, readout):
    def loss():
        out = fn()
        if readout[0] is None:
            readout[0] = _readout(out, readout[1])
        return sum_all(mul(out, readout[0]))
    return loss


def _case_layer_norm(rng):
    rows, d = rng.integers(1, 5), rng.integers(2, 9)
    x = _leaf(rng, (rows, d), -2, 2)
    gain = Parameter(rng.uniform(0.5, 1.5, d))
    bias = Parameter(rng.normal(size=d))
    return [x, gain, bias], lambda: layer_norm(x, gain, bias)


def _case_attention_head(rng):
    t1, n, dj = rng.integers(1, 7), rng.integers(2, 7), rng.integers(1, 5)
    S = _leaf(rng, (t1, n))
    ws = [Parameter(uniform_init(rng, (n, dj), n) * 2) for _ in range(3)]
    return [S] + ws, lambda: attention_head(S, *ws)


def _case_mha(rng):
    t1, n, heads, dj, d_out = (rng.integers(1, 6), rng.integers(2, 6), rng.integers(1, 4),
                               rng.integers(1, 4), rng.integers(1, 6))
    S = _leaf(rng, (2, t1, n))
    triples = [tuple(Parameter(uniform_init(rng, (n, dj), n) * 2) for _ in range(3)) for _ in range(heads)]
    w_out = Parameter(uniform_init(rng, (heads * dj, d_out), heads * dj))
    leaves = [S, w_out] + [p for t in triples for p in t]
    return leaves, lambda: multi_head_attention(S, triples, w_out)


def _case_ffn_residual(rng):
    d, hidden = rng.integers(2, 8), rng.integers(2, 10)
    x = _leaf(rng, (d,), -2, 2)
    ffn = FFN(d, hidden, rng)
    gain = Parameter(rng.uniform(0.5, 1.5, d))
    bias = Parameter(rng.normal(size=d))
    return [x, gain, bias] + ffn.parameters(), lambda: ffn_residual(x, ffn, gain, bias)


def _small_net_dims(rng):
    # a layer norm over two entries is a near-step function; width >= 4 keeps
    # its curvature within reach of fixed-step central differences
    heads = int(rng.integers(1, 3))
    d_model = heads * int(rng.integers(4 // heads, 5))
    return int(rng.integers(0, 4)), d_model, heads, int(rng.integers(2, 7))


def random_observations(rng, shape, w):
    """Raw observation vectors with kinematic magnitudes in their physical ranges."""
    rows = rng.uniform(-1, 1, size=shape + (1 + 2 * (w + 1), 4)) * KINEMATIC_SCALE
    return rows.reshape(shape + (info_dim(w),))


def _case_encoder(rng):
    w, d_model, heads, hidden = _small_net_dims(rng)
    p = EncoderParams(w, d_model, heads, hidden, rng)
    s = InformationState.from_vector(random_observations(rng, (2,), w), w).scaled()
    return p.parameters(), lambda: encode(s, p)


def _case_agent_q(rng):
    w, d_model, heads, hidden = _small_net_dims(rng)
    net = AgentQNet(w, d_model, heads, hidden, int(rng.integers(2, 7)), rng=rng)
    obs = random_observations(rng, (int(rng.integers(1, 4)),), w)
    return net.parameters(), lambda: net(obs)


def _case_mix(rng):
    n, batch = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    mixer = MixingNetwork(n, hidden=int(rng.integers(2, 6)), rng=rng)
    q = _leaf(rng, (batch, n), -3, 3)
    kin = rng.uniform(-1, 1, size=(batch, n, 4)) * KINEMATIC_SCALE
    gs = global_state(kin, rng.random((batch, n)) < 0.7)
    return [q] + mixer.parameters(), lambda: mixer(q, gs)


class _Batch:
    pass


def _case_qmix_loss(rng):
    n, batch = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    w, d_model, heads, hidden = _small_net_dims(rng)
    net = AgentQNet(w, d_model, heads, hidden, 4, actions=(-1.0, 0.0, 1.0, 2.0), rng=rng)
    mixer = MixingNetwork(n, hidden=3, rng=rng)
    b = _Batch()
    b.obs = random_observations(rng, (batch, n), w)
    b.actions = rng.integers(0, 4, size=(batch, n))
    b.mask = (rng.random((batch, n)) < 0.8).astype(np.float64)
    b.gs = global_state(rng.uniform(-1, 1, (batch, n, 4)) * KINEMATIC_SCALE, b.mask > 0)
    y = rng.normal(size=batch)
    return net.parameters() + mixer.parameters(), lambda: qmix_loss(b, net, mixer, y)


SUITES = {
    "layer_norm": _case_layer_norm,
    "attention_head": _case_attention_head,
    "multi_head_attention": _case_mha,
    "ffn_residual": _case_ffn_residual,
    "encoder": _case_encoder,
    "agent_q": _case_agent_q,
    "mix": _case_mix,
    "qmix_loss": _case_qmix_loss,
}


def run_suite(name, n_configs=20, seed=0, max_redraws=200):
    """Check ``n_configs`` random configurations of one suite."""
    rng = np.random.default_rng([seed, sorted(SUITES).index(name)])
    results = []
    redraws = 0
    while len(results) < n_configs:
        leaves, fn = SUITES[name](rng)
        readout = [None, rng]
        loss = _scalar(fn, readout)
        err, count, margin = check_gradients(leaves, loss, rng)
        if margin < KINK_MARGIN:
            redraws += 1
            if redraws > max_redraws:
                raise RuntimeError(f"{name}: could not draw kink-free configurations")
            continue
        results.append(CheckResult(name, len(results), err, count))
    return results


def run_all(n_configs=20, seed=0, suites=None):
    out = {}
    for name in suites or SUITES:
        out[name] = run_suite(name, n_configs, seed)
    return out
