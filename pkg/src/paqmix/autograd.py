"""Tape-based reverse-mode differentiation over float64 numpy arrays.

Operations record themselves on the active :class:`Tape` only when one is
open and at least one input requires gradients, so inference passes (acting,
target networks) pay no bookkeeping cost::

    with Tape() as tape:
        loss = mean(square(affine(x, W, b)))
    tape.backward(loss)
"""
from contextvars import ContextVar

import numpy as np

from . import kernels


class ShapeError(ValueError):
    pass


class TapeError(RuntimeError):
    pass


_active_tape = ContextVar("paqmix_tape", default=None)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        return float(self.data.reshape(-1)[0])

    def numpy(self):
        return self.data

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"

    def _accumulate(self, g):
        self.grad = g if self.grad is None else self.grad + g


class Parameter(Tensor):
    """Trainable leaf. Carries its gradient and the two optimizer moments."""

    __slots__ = ("name", "m", "v")

    def __init__(self, data, name=""):
        super().__init__(np.array(data, dtype=np.float64), requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.data)
        self.m = np.zeros_like(self.data)
        self.v = np.zeros_like(self.data)

    def zero_grad(self):
        self.grad.fill(0.0)

    def _accumulate(self, g):
        self.grad += g

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.data.shape})"


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Ordered record of executed operations; backward replays it in reverse."""

    def __init__(self):
        self._ops = []
        self._outputs = set()
        self._token = None
        # smallest |input| seen by a non-smooth op (relu/abs); gradcheck uses it
        self.kink_margin = np.inf

    def __enter__(self):
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, *exc):
        _active_tape.reset(self._token)
        self._token = None
        return False

    def __len__(self):
        return len(self._ops)

    def record(self, out, parents, backward):
        self._ops.append((out, parents, backward))
        self._outputs.add(id(out))

    def note_kink(self, x):
        if x.size:
            self.kink_margin = min(self.kink_margin, float(np.min(np.abs(x))))

    def backward(self, loss):
        if not self._ops:
            raise TapeError("backward called before any operation was recorded")
        if id(loss) not in self._outputs:
            raise TapeError("loss was not produced on this tape")
        if loss.data.size != 1:
            raise TapeError(f"loss must be a scalar, got shape {loss.data.shape}")
        for out, _, _ in self._ops:
            out.grad = None
        loss.grad = np.ones_like(loss.data)
        for out, parents, fn in reversed(self._ops):
            if out.grad is None:
                continue
            for p, g in zip(parents, fn(out.grad)):
                if g is not None and p.requires_grad:
                    p._accumulate(g)


def _make(data, parents, backward):
    out = Tensor(data)
    tape = _active_tape.get()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        tape.record(out, parents, backward)
    return out


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def scale(a, c):
    return _make(a.data * c, (a,), lambda g: (g * c,))


def square(a):
    return _make(a.data * a.data, (a,), lambda g: (2.0 * a.data * g,))


def relu(a):
    tape = _active_tape.get()
    if tape is not None and a.requires_grad:
        tape.note_kink(a.data)
    mask = a.data > 0.0
    return _make(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def elu(a):
    neg = a.data < 0.0
    expx = np.exp(np.minimum(a.data, 0.0))
    out = np.where(neg, expx - 1.0, a.data)
    return _make(out, (a,), lambda g: (g * np.where(neg, expx, 1.0),))


def absolute(a):
    tape = _active_tape.get()
    if tape is not None and a.requires_grad:
        tape.note_kink(a.data)
    sign = np.sign(a.data)
    return _make(np.abs(a.data), (a,), lambda g: (g * sign,))


# ---------------------------------------------------------------------------
# reductions and reshaping
# ---------------------------------------------------------------------------


def sum_all(a):
    return _make(np.array(a.data.sum()), (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),))


def mean_all(a):
    n = a.data.size
    return _make(np.array(a.data.mean()), (a,), lambda g: (np.full(a.shape, float(g) / n),))


def reshape(a, shape):
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(str(exc)) from None
    return _make(data, tuple(tensors), lambda g: tuple(np.split(g, splits, axis=axis)))


def gather_last(a, index):
    """Pick ``a[..., index[...]]`` along the last axis."""
    index = np.asarray(index, dtype=np.int64)
    if index.shape != a.shape[:-1]:
        raise ShapeError(f"index shape {index.shape} does not match {a.shape[:-1]}")
    picked = np.take_along_axis(a.data, index[..., None], axis=-1)[..., 0]

    def backward(g):
        out = np.zeros(a.shape)
        np.put_along_axis(out, index[..., None], g[..., None], axis=-1)
        return (out,)

    return _make(picked, (a,), backward)


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------


def matmul(a, b):
    """Batched ``a @ b`` with numpy broadcasting over leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError("matmul operands must be at least 2-D")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"inner dimensions differ: {a.shape} @ {b.shape}")

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(a.data @ b.data, (a, b), backward)


def transpose(a):
    """Swap the last two axes."""
    return _make(np.swapaxes(a.data, -1, -2), (a,), lambda g: (np.swapaxes(g, -1, -2),))


def affine(x, W, b):
    """``x @ W.T + b`` for ``x`` of shape (..., n), ``W`` (d, n), ``b`` (d,)."""
    x = as_tensor(x)
    if W.data.ndim != 2 or x.shape[-1] != W.shape[1]:
        raise ShapeError(f"affine: input {x.shape} incompatible with weight {W.shape}")
    if b is not None and b.shape != (W.shape[0],):
        raise ShapeError(f"affine: bias {b.shape} does not match weight {W.shape}")
    out = x.data @ W.data.T
    if b is not None:
        out = out + b.data

    def backward(g):
        g2 = g.reshape(-1, g.shape[-1])
        x2 = x.data.reshape(-1, x.shape[-1])
        gx = g @ W.data
        gW = g2.T @ x2
        if b is None:
            return gx, gW
        return gx, gW, g2.sum(axis=0)

    parents = (x, W) if b is None else (x, W, b)
    return _make(out, parents, backward)


# ---------------------------------------------------------------------------
# fused normalisation kernels
# ---------------------------------------------------------------------------


def layer_norm(x, gain, bias, rho=1e-5):
    """Normalise over the last axis with population variance, then scale and shift."""
    x = as_tensor(x)
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layer_norm affine shapes {gain.shape}/{bias.shape} for width {d}")
    x2 = np.ascontiguousarray(x.data.reshape(-1, d))
    y, xhat, inv_std = kernels.layer_norm_forward(x2, gain.data, bias.data, rho)

    def backward(g):
        dx, dgain, dbias = kernels.layer_norm_backward(
            np.ascontiguousarray(g.reshape(-1, d)), xhat, inv_std, gain.data)
        return dx.reshape(x.shape), dgain, dbias

    return _make(y.reshape(x.shape), (x, gain, bias), backward)


def softmax(x):
    """Softmax over the last axis."""
    x = as_tensor(x)
    d = x.shape[-1]
    y = kernels.softmax_forward(np.ascontiguousarray(x.data.reshape(-1, d)))

    def backward(g):
        dx = kernels.softmax_backward(np.ascontiguousarray(g.reshape(-1, d)), y)
        return (dx.reshape(x.shape),)

    return _make(y.reshape(x.shape), (x,), backward)


# ---------------------------------------------------------------------------
# optimiser
# ---------------------------------------------------------------------------


class AdamW:
    """Adam with decoupled weight decay and bias-corrected moments."""

    def __init__(self, params, lr=1e-4, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p in self.params:
            if self.weight_decay:
                p.data *= 1.0 - self.lr * self.weight_decay
            p.m *= self.beta1
            p.m += (1.0 - self.beta1) * p.grad
            p.v *= self.beta2
            p.v += (1.0 - self.beta2) * p.grad * p.grad
            p.data -= self.lr * (p.m / c1) / (np.sqrt(p.v / c2) + self.eps)
