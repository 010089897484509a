"""Hot numeric kernels.

Every kernel exists twice: a vectorised numpy version (``*_np``) and an
explicit-loop version compiled with numba (``*_nb``). The public names bind
to the numba variant unless ``PAQMIX_DISABLE_NUMBA=1`` is set. Both variants
are imported by the benchmark and cross-checked by the test-suite.

All arrays are float64 / int64. Row-wise kernels operate on 2-D arrays; callers
reshape batched tensors to ``(rows, features)`` before calling.
"""
import numpy as np

from ._accel import NUMBA_ENABLED, njit

# ---------------------------------------------------------------------------
# layer normalisation over the last axis
# ---------------------------------------------------------------------------


def layer_norm_forward_np(x, gain, bias, rho):
    mean = x.mean(axis=1, keepdims=True)
    centered = x - mean
    var = np.mean(centered * centered, axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + rho)
    xhat = centered * inv_std
    return xhat * gain + bias, xhat, inv_std[:, 0]


def layer_norm_backward_np(g, xhat, inv_std, gain):
    dxhat = g * gain
    d = xhat.shape[1]
    dx = inv_std[:, None] / d * (
        d * dxhat
        - dxhat.sum(axis=1, keepdims=True)
        - xhat * np.sum(dxhat * xhat, axis=1, keepdims=True)
    )
    return dx, np.sum(g * xhat, axis=0), g.sum(axis=0)


@njit
def layer_norm_forward_nb(x, gain, bias, rho):
    rows, d = x.shape
    y = np.empty_like(x)
    xhat = np.empty_like(x)
    inv_std = np.empty(rows)
    for r in range(rows):
        mean = 0.0
        for k in range(d):
            mean += x[r, k]
        mean /= d
        var = 0.0
        for k in range(d):
            c = x[r, k] - mean
            var += c * c
        var /= d
        s = 1.0 / np.sqrt(var + rho)
        inv_std[r] = s
        for k in range(d):
            h = (x[r, k] - mean) * s
            xhat[r, k] = h
            y[r, k] = h * gain[k] + bias[k]
    return y, xhat, inv_std


@njit
def layer_norm_backward_nb(g, xhat, inv_std, gain):
    rows, d = g.shape
    dx = np.empty_like(g)
    dgain = np.zeros(d)
    dbias = np.zeros(d)
    for r in range(rows):
        s1 = 0.0
        s2 = 0.0
        for k in range(d):
            dh = g[r, k] * gain[k]
            s1 += dh
            s2 += dh * xhat[r, k]
            dgain[k] += g[r, k] * xhat[r, k]
            dbias[k] += g[r, k]
        scale = inv_std[r] / d
        for k in range(d):
            dh = g[r, k] * gain[k]
            dx[r, k] = scale * (d * dh - s1 - xhat[r, k] * s2)
    return dx, dgain, dbias


# ---------------------------------------------------------------------------
# softmax over the last axis
# ---------------------------------------------------------------------------


def softmax_forward_np(x):
    e = np.exp(x - x.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def softmax_backward_np(g, y):
    return y * (g - np.sum(g * y, axis=1, keepdims=True))


@njit
def softmax_forward_nb(x):
    rows, d = x.shape
    y = np.empty_like(x)
    for r in range(rows):
        m = x[r, 0]
        for k in range(1, d):
            if x[r, k] > m:
                m = x[r, k]
        total = 0.0
        for k in range(d):
            e = np.exp(x[r, k] - m)
            y[r, k] = e
            total += e
        for k in range(d):
            y[r, k] /= total
    return y


@njit
def softmax_backward_nb(g, y):
    rows, d = g.shape
    dx = np.empty_like(g)
    for r in range(rows):
        dot = 0.0
        for k in range(d):
            dot += g[r, k] * y[r, k]
        for k in range(d):
            dx[r, k] = y[r, k] * (g[r, k] - dot)
    return dx


# ---------------------------------------------------------------------------
# simulator kernels
# ---------------------------------------------------------------------------
# lane codes: 0, 1 highway; 2 ramp


def integrate_np(x, v, a, active, dt, v_max):
    v_new = np.where(active, np.clip(v + a * dt, 0.0, v_max), v)
    x_new = np.where(active, x + v_new * dt, x)
    return x_new, v_new


@njit
def integrate_nb(x, v, a, active, dt, v_max):
    n = x.shape[0]
    x_new = x.copy()
    v_new = v.copy()
    for i in range(n):
        if active[i]:
            nv = v[i] + a[i] * dt
            if nv < 0.0:
                nv = 0.0
            elif nv > v_max:
                nv = v_max
            v_new[i] = nv
            x_new[i] = x[i] + nv * dt
    return x_new, v_new


def _in_window(x, length, lo, hi):
    return (x >= lo) & (x - length <= hi)


def collision_pairs_np(x, length, lane, active, lo, hi):
    n = x.shape[0]
    if n < 2:
        return np.zeros((0, 2), dtype=np.int64)
    rear = x - length
    overlap = (rear[:, None] < x[None, :]) & (rear[None, :] < x[:, None])
    both = active[:, None] & active[None, :]
    same_lane = lane[:, None] == lane[None, :]
    merge_class = (lane == 0) | (lane == 2)
    win = _in_window(x, length, lo, hi) & merge_class
    shared = same_lane | (win[:, None] & win[None, :])
    hit = np.triu(overlap & both & shared, k=1)
    i, j = np.nonzero(hit)
    return np.stack([i, j], axis=1).astype(np.int64)


@njit
def collision_pairs_nb(x, length, lane, active, lo, hi):
    n = x.shape[0]
    out = np.empty((n * (n - 1) // 2, 2), dtype=np.int64)
    k = 0
    for i in range(n):
        if not active[i]:
            continue
        for j in range(i + 1, n):
            if not active[j]:
                continue
            if not (x[i] - length[i] < x[j] and x[j] - length[j] < x[i]):
                continue
            shared = lane[i] == lane[j]
            if not shared:
                wi = (lane[i] == 0 or lane[i] == 2) and x[i] >= lo and x[i] - length[i] <= hi
                wj = (lane[j] == 0 or lane[j] == 2) and x[j] >= lo and x[j] - length[j] <= hi
                shared = wi and wj
            if shared:
                out[k, 0] = i
                out[k, 1] = j
                k += 1
    return out[:k]


def neighbors_np(x, lane, active, junction_x):
    """Front and opposite vehicle index per vehicle (-1 when absent)."""
    n = x.shape[0]
    front = np.full(n, -1, dtype=np.int64)
    opp = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return front, opp
    idx = np.arange(n)
    dist = junction_x - x
    for i in range(n):
        if not active[i]:
            continue
        ahead = active & (idx != i) & (lane == lane[i]) & (x > x[i])
        if not ahead.any() and lane[i] == 2:
            ahead = active & (lane == 0) & (x > junction_x)
        if ahead.any():
            cand = np.nonzero(ahead)[0]
            front[i] = cand[np.argmin(x[cand])]
        if lane[i] == 1 or dist[i] < 0:
            continue
        other = 2 if lane[i] == 0 else 0
        cand = np.nonzero(active & (lane == other) & (dist >= 0))[0]
        if cand.size:
            opp[i] = cand[np.argmin(np.abs(dist[cand] - dist[i]))]
    return front, opp


@njit
def neighbors_nb(x, lane, active, junction_x):
    n = x.shape[0]
    front = np.full(n, -1, dtype=np.int64)
    opp = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        if not active[i]:
            continue
        best = -1
        for j in range(n):
            if j != i and active[j] and lane[j] == lane[i] and x[j] > x[i]:
                if best < 0 or x[j] < x[best]:
                    best = j
        if best < 0 and lane[i] == 2:
            for j in range(n):
                if active[j] and lane[j] == 0 and x[j] > junction_x:
                    if best < 0 or x[j] < x[best]:
                        best = j
        front[i] = best
        di = junction_x - x[i]
        if lane[i] == 1 or di < 0:
            continue
        other = 2 if lane[i] == 0 else 0
        best = -1
        best_d = 0.0
        for j in range(n):
            if active[j] and lane[j] == other:
                dj = junction_x - x[j]
                if dj < 0:
                    continue
                gap = abs(dj - di)
                if best < 0 or gap < best_d:
                    best = j
                    best_d = gap
        opp[i] = best
    return front, opp


def idm_np(v, v0, gap, dv, has_leader, a_max, b, delta, s0, headway, clip):
    free = 1.0 - (v / v0) ** delta
    s_star = s0 + v * headway + v * dv / (2.0 * np.sqrt(a_max * b))
    safe_gap = np.where(gap > 0.0, gap, 1.0)
    inter = np.where(has_leader, (s_star / safe_gap) ** 2, 0.0)
    acc = np.clip(a_max * (free - inter), -clip, clip)
    return np.where(has_leader & (gap <= 0.0), -clip, acc)


@njit
def idm_nb(v, v0, gap, dv, has_leader, a_max, b, delta, s0, headway, clip):
    n = v.shape[0]
    out = np.empty(n)
    root = 2.0 * np.sqrt(a_max * b)
    for i in range(n):
        acc = a_max * (1.0 - (v[i] / v0[i]) ** delta)
        if has_leader[i]:
            if gap[i] <= 0.0:
                out[i] = -clip
                continue
            s_star = s0 + v[i] * headway + v[i] * dv[i] / root
            acc -= a_max * (s_star / gap[i]) ** 2
        if acc > clip:
            acc = clip
        elif acc < -clip:
            acc = -clip
        out[i] = acc
    return out


if NUMBA_ENABLED:
    layer_norm_forward = layer_norm_forward_nb
    layer_norm_backward = layer_norm_backward_nb
    softmax_forward = softmax_forward_nb
    softmax_backward = softmax_backward_nb
    integrate = integrate_nb
    collision_pairs = collision_pairs_nb
    neighbors = neighbors_nb
    idm = idm_nb
else:
    layer_norm_forward = layer_norm_forward_np
    layer_norm_backward = layer_norm_backward_np
    softmax_forward = softmax_forward_np
    softmax_backward = softmax_backward_np
    integrate = integrate_np
    collision_pairs = collision_pairs_np
    neighbors = neighbors_np
    idm = idm_np

BACKEND = "numba" if NUMBA_ENABLED else "numpy"
