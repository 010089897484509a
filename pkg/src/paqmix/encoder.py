"""Partial-attention encoder.

Each neighbour history (front and opposite streams, separate weights) goes
through: per-row layer norm -> token projection -> multi-head self-attention
-> fixed temporal pooling -> residual FFN with layer norm. The two pooled
embeddings are appended to the agent's own kinematics.
"""
import numpy as np

from . import kernels
from .autograd import ShapeError, Tensor, concat, matmul, reshape, transpose
from .infostate import InformationState
from .nn import FFN, Affine, LayerNorm, Module, MultiHeadAttention, ffn_residual


def temporal_weights(w):
    """Softmax of the evenly spaced ramp 0.5 .. 1.0 over ``w + 1`` points."""
    if w < 0:
        raise ValueError("window must be non-negative")
    grid = np.linspace(0.5, 1.0, w + 1)
    return kernels.softmax_forward_np(grid[None, :])[0]


def pooled_embedding(Z, alpha):
    """Contract the time axis: ``Z^T alpha`` for ``Z`` of shape (..., w+1, d)."""
    alpha = np.asarray(alpha, dtype=np.float64)
    if Z.shape[-2] != alpha.shape[0]:
        raise ShapeError(f"pooling weights of length {alpha.shape[0]} for {Z.shape[-2]} rows")
    pooled = matmul(transpose(Z), Tensor(alpha[:, None]))
    return reshape(pooled, Z.shape[:-2] + (Z.shape[-1],))


class StreamEncoder(Module):
    def __init__(self, d_model, n_heads, ffn_hidden, rng):
        if d_model % n_heads:
            raise ValueError(f"d_model={d_model} is not divisible by {n_heads} heads")
        self.ln_in = LayerNorm(4)
        self.proj = Affine(4, d_model, rng)
        self.mha = MultiHeadAttention(d_model, n_heads, d_model // n_heads, d_model, rng)
        self.ffn = FFN(d_model, ffn_hidden, rng)
        self.ln_out = LayerNorm(d_model)

    def __call__(self, hist, alpha, ablate_attention=False):
        x = self.proj(self.ln_in(hist))
        z = x if ablate_attention else self.mha(x)
        pooled = pooled_embedding(z, alpha)
        return ffn_residual(pooled, self.ffn, self.ln_out.gain, self.ln_out.bias, self.ln_out.rho)


class EncoderParams(Module):
    """All encoder weights. ``alpha`` is a fixed constant, stored but never trained."""

    def __init__(self, w=9, d_model=32, n_heads=4, ffn_hidden=64, rng=None):
        rng = np.random.default_rng(0) if rng is None else rng
        self.w = w
        self.d_model = d_model
        self.n_heads = n_heads
        self.ffn_hidden = ffn_hidden
        self.front = StreamEncoder(d_model, n_heads, ffn_hidden, rng)
        self.opp = StreamEncoder(d_model, n_heads, ffn_hidden, rng)
        self.alpha = temporal_weights(w)

    @property
    def out_dim(self):
        return 4 + 2 * self.d_model


def encode(s, p, ablate_attention=False):
    """Enriched state ``[own; E'_front; E'_opp]`` of width ``4 + 2 d_model``.

    ``s`` is an :class:`InformationState` (already input-scaled), possibly batched.
    """
    if not isinstance(s, InformationState):
        raise TypeError("encode expects an InformationState")
    if s.window != p.w:
        raise ShapeError(f"history window {s.window} does not match encoder window {p.w}")
    own = Tensor(s.own)
    e_front = p.front(Tensor(s.front_hist), p.alpha, ablate_attention)
    e_opp = p.opp(Tensor(s.opp_hist), p.alpha, ablate_attention)
    return concat([own, e_front, e_opp], axis=-1)
