"""Per-agent information state: own kinematics plus front/opposite histories."""
from dataclasses import dataclass

import numpy as np

# fixed input scaling for (x, y, v, a) before anything reaches a network
KINEMATIC_SCALE = np.array([400.0, 10.0, 15.0, 6.0])


def info_dim(w):
    return 4 + 8 * (w + 1)


@dataclass(frozen=True)
class InformationState:
    """``own`` is (..., 4); ``front_hist`` and ``opp_hist`` are (..., w+1, 4), oldest row first.

    Leading batch axes are allowed; all three fields must share them.
    """

    own: np.ndarray
    front_hist: np.ndarray
    opp_hist: np.ndarray

    def __post_init__(self):
        own, f, o = (np.asarray(a, dtype=np.float64) for a in (self.own, self.front_hist, self.opp_hist))
        if own.shape[-1] != 4 or f.shape[-1] != 4 or f.shape != o.shape or f.shape[:-2] != own.shape[:-1]:
            raise ValueError(f"inconsistent information-state shapes {own.shape}, {f.shape}, {o.shape}")
        object.__setattr__(self, "own", own)
        object.__setattr__(self, "front_hist", f)
        object.__setattr__(self, "opp_hist", o)

    @property
    def window(self):
        return self.front_hist.shape[-2] - 1

    @property
    def dim(self):
        return info_dim(self.window)

    def as_vector(self):
        lead = self.own.shape[:-1]
        return np.concatenate(
            [self.own, self.front_hist.reshape(lead + (-1,)), self.opp_hist.reshape(lead + (-1,))],
            axis=-1,
        )

    @classmethod
    def from_vector(cls, vec, w):
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape[-1] != info_dim(w):
            raise ValueError(f"expected trailing dimension {info_dim(w)}, got {vec.shape[-1]}")
        lead = vec.shape[:-1]
        block = 4 * (w + 1)
        return cls(
            vec[..., :4],
            vec[..., 4:4 + block].reshape(lead + (w + 1, 4)),
            vec[..., 4 + block:].reshape(lead + (w + 1, 4)),
        )

    def scaled(self):
        return InformationState(
            self.own / KINEMATIC_SCALE,
            self.front_hist / KINEMATIC_SCALE,
            self.opp_hist / KINEMATIC_SCALE,
        )
