"""L2-regularized logistic regression: f(x) = mean_j log(1 + exp(-b_j a_j.x)) + lam * ||x||^2."""
from dataclasses import dataclass

import numpy as np

from byzsim import _kernels
from byzsim.core import as_vector
from byzsim.errors import DimensionError


@dataclass(frozen=True, eq=False)
class LogRegProblem:
    shard: object  # byzsim.data.Dataset
    lam: float

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        object.__setattr__(self, "lam", float(self.lam))

    @classmethod
    def default(cls, shard):
        """The 1/m regularization used for the logistic-regression experiments."""
        return cls(shard, 1.0 / shard.m)

    @property
    def d(self):
        return self.shard.d

    @property
    def m(self):
        return self.shard.m

    def _x(self, x):
        try:
            return np.ascontiguousarray(as_vector(x, self.d))
        except DimensionError:
            raise DimensionError(f"model has dimension {self.d}, got {np.shape(x)}") from None

    def _idx(self, idx):
        idx = np.atleast_1d(np.asarray(idx, dtype=np.intp))
        if np.any(idx < 0) or np.any(idx >= self.m):
            raise IndexError(f"sample index out of range 0..{self.m - 1}")
        return idx


def loss(p, x):
    x = p._x(x)
    offsets = np.array([0, p.m], dtype=np.intp)
    losses, _ = _kernels.K.shard_stats(p.shard.features, p.shard.labels, offsets, x, np.array([p.lam]))
    return float(losses[0])


def full_grad(p, x):
    x = p._x(x)
    offsets = np.array([0, p.m], dtype=np.intp)
    _, grads = _kernels.K.shard_stats(p.shard.features, p.shard.labels, offsets, x, np.array([p.lam]))
    return grads[0]


def stoch_grad(p, x, sample_idx):
    """-b * sigmoid(-b a.x) * a + 2 lam x for one sample."""
    x = p._x(x)
    idx = p._idx(sample_idx)
    if idx.shape[0] != 1:
        raise ValueError("stoch_grad takes a single sample index")
    return _kernels.K.sample_grads(p.shard.features, p.shard.labels, idx, x, np.array([p.lam]))[0]


def batch_grad(p, x, sample_idx):
    """Average of per-sample gradients over ``sample_idx``."""
    x = p._x(x)
    idx = p._idx(sample_idx)
    lam = np.full(idx.shape[0], p.lam)
    return _kernels.K.sample_grads(p.shard.features, p.shard.labels, idx, x, lam).mean(axis=0)


def stoch_grad_pair(p, x_new, x_old, sample_idx):
    """Gradients at two points sharing one sample draw."""
    return stoch_grad(p, x_new, sample_idx), stoch_grad(p, x_old, sample_idx)


def lipschitz_bound(p):
    """Per-sample gradient Lipschitz bound max_j ||a_j||^2 / 4 + 2 lam."""
    sq = (p.shard.features ** 2).sum(axis=1)
    return float(sq.max()) / 4.0 + 2.0 * p.lam
