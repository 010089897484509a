"""Layers used by the encoder, the agent head and the mixer.

Parameter containers are plain :class:`Module` objects; their attributes are
walked in definition order to produce stable dotted parameter names, which the
checkpoint format relies on.
"""
import copy

import numpy as np

from .autograd import (
    Parameter,
    ShapeError,
    add,
    affine,
    concat,
    layer_norm,
    matmul,
    relu,
    scale,
    softmax,
    transpose,
)


def uniform_init(rng, shape, fan_in):
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Module:
    def named_parameters(self, prefix=""):
        for key, val in vars(self).items():
            name = f"{prefix}.{key}" if prefix else key
            if isinstance(val, Parameter):
                yield name, val
            elif isinstance(val, Module):
                yield from val.named_parameters(name)
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def state_dict(self, prefix=""):
        return {name: p.data.copy() for name, p in self.named_parameters(prefix)}

    def load_state_dict(self, state, prefix=""):
        for name, p in self.named_parameters(prefix):
            if name not in state:
                raise KeyError(f"missing parameter {name!r}")
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.shape:
                raise ShapeError(f"{name}: expected {p.shape}, got {value.shape}")
            p.data[...] = value

    def copy_from(self, other):
        for (_, dst), (_, src) in zip(self.named_parameters(), other.named_parameters()):
            dst.data[...] = src.data

    def clone(self):
        return copy.deepcopy(self)

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()


class Affine(Module):
    def __init__(self, n_in, n_out, rng):
        self.weight = Parameter(uniform_init(rng, (n_out, n_in), n_in))
        self.bias = Parameter(uniform_init(rng, (n_out,), n_in))

    def __call__(self, x):
        return affine(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, width, rho=1e-5):
        self.gain = Parameter(np.ones(width))
        self.bias = Parameter(np.zeros(width))
        self.rho = rho

    def __call__(self, x):
        return layer_norm(x, self.gain, self.bias, self.rho)


class AttentionHead(Module):
    def __init__(self, n_in, d_head, rng):
        self.wq = Parameter(uniform_init(rng, (n_in, d_head), n_in))
        self.wk = Parameter(uniform_init(rng, (n_in, d_head), n_in))
        self.wv = Parameter(uniform_init(rng, (n_in, d_head), n_in))

    def __call__(self, S):
        return attention_head(S, self.wq, self.wk, self.wv)


class MultiHeadAttention(Module):
    def __init__(self, n_in, n_heads, d_head, d_out, rng):
        self.heads = [AttentionHead(n_in, d_head, rng) for _ in range(n_heads)]
        self.out = Parameter(uniform_init(rng, (n_heads * d_head, d_out), n_heads * d_head))

    def __call__(self, S):
        return multi_head_attention(S, [(h.wq, h.wk, h.wv) for h in self.heads], self.out)


class FFN(Module):
    def __init__(self, width, hidden, rng):
        self.fc1 = Affine(width, hidden, rng)
        self.fc2 = Affine(hidden, width, rng)

    def __call__(self, x):
        return self.fc2(relu(self.fc1(x)))


def attention_head(S, wq, wk, wv, return_weights=False):
    """Scaled dot-product self-attention of one head over the rows of ``S``.

    ``S`` has shape (..., T+1, n); the projections are (n, d_j).
    """
    if not (wq.shape == wk.shape == wv.shape) or S.shape[-1] != wq.shape[0]:
        raise ShapeError(f"attention_head: input {S.shape} vs projections {wq.shape}")
    q = matmul(S, wq)
    k = matmul(S, wk)
    v = matmul(S, wv)
    weights = softmax(scale(matmul(q, transpose(k)), 1.0 / np.sqrt(wq.shape[1])))
    z = matmul(weights, v)
    return (z, weights) if return_weights else z


def multi_head_attention(S, heads, w_out):
    """Concatenate per-head outputs and project with ``w_out`` (sum d_j, d_o)."""
    total = sum(h[0].shape[1] for h in heads)
    if w_out.shape[0] != total:
        raise ShapeError(f"output projection expects {w_out.shape[0]} columns, heads give {total}")
    zs = [attention_head(S, *h) for h in heads]
    cat = zs[0] if len(zs) == 1 else concat(zs, axis=-1)
    return matmul(cat, w_out)


def ffn_residual(x, ffn, gain, bias, rho=1e-5):
    """``LN(x + FFN(x))``."""
    if ffn.fc1.weight.shape[1] != x.shape[-1] or ffn.fc2.weight.shape[0] != x.shape[-1]:
        raise ShapeError(f"ffn_residual: FFN width does not match input {x.shape}")
    return layer_norm(add(x, ffn(x)), gain, bias, rho)
