"""Contractive sparsifiers (Top-k, Rand-k, identity) and their wire messages."""
from dataclasses import dataclass, field

import numpy as np

from byzsim import _kernels
from byzsim.core import as_vector
from byzsim.errors import ConfigError

INDEX_BYTES = 4
VALUE_BYTES = 8

KINDS = ("topk", "randk", "identity")


@dataclass(frozen=True)
class CompressorSpec:
    kind: str
    k: int = 0
    # Rand-k only: multiply kept values by d/k (unbiased convention). Off by default.
    scaled: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown compressor {self.kind!r}")
        if self.kind != "identity" and self.k < 1:
            raise ConfigError(f"{self.kind} needs k >= 1, got {self.k}")

    @classmethod
    def topk(cls, k):
        return cls("topk", int(k))

    @classmethod
    def randk(cls, k, scaled=False):
        return cls("randk", int(k), scaled)

    @classmethod
    def identity(cls):
        return cls("identity")

    def check(self, d):
        if self.kind != "identity" and not 1 <= self.k <= d:
            raise ConfigError(f"k={self.k} outside 1..{d}")

    def kept(self, d):
        return d if self.kind == "identity" else self.k


def alpha_of(spec, d):
    spec.check(d)
    if spec.kind == "identity":
        return 1.0
    return spec.k / d


@dataclass(frozen=True, eq=False)
class SparseMessage:
    indices: np.ndarray
    values: np.ndarray
    d: int
    dense: bool = False
    # When set, values are absolute coordinates of the sender's state rather
    # than increments (used for uncompressed uplinks).
    replace: bool = field(default=False)

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.intp)
        if idx.size and (idx[0] < 0 or idx[-1] >= self.d or np.any(np.diff(idx) <= 0)):
            raise ValueError("indices must be strictly increasing and < d")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))

    @property
    def nnz(self):
        return int(self.indices.shape[0])

    @property
    def byte_cost(self):
        if self.dense:
            return VALUE_BYTES * self.d
        return (INDEX_BYTES + VALUE_BYTES) * self.nnz

    @property
    def entries(self):
        return list(zip(self.indices.tolist(), self.values.tolist()))


def message_bytes(spec, d):
    """Uplink cost of one protocol-following message."""
    if spec.kind == "identity":
        return VALUE_BYTES * d
    return (INDEX_BYTES + VALUE_BYTES) * spec.k


def densify(msg):
    out = np.zeros(msg.d)
    out[msg.indices] = msg.values
    return out


def select_mask(spec, D, streams=None):
    """Kept-coordinate mask for every row of ``D``.

    Top-k keeps the largest magnitudes (lowest index wins ties); Rand-k keeps
    ``k`` coordinates drawn without replacement from ``streams[i]``.
    """
    r, d = D.shape
    spec.check(d)
    if spec.kind == "identity":
        return np.ones((r, d), dtype=bool)
    if spec.kind == "topk":
        return _kernels.K.topk_mask(np.ascontiguousarray(D), spec.k)
    if streams is None or len(streams) != r:
        raise ValueError("rand-k needs one random stream per row")
    mask = np.zeros((r, d), dtype=bool)
    for i, rng in enumerate(streams):
        mask[i, rng.generator.choice(d, spec.k, replace=False)] = True
    return mask


def compress_rows(spec, D, streams=None):
    """Dense compressed rows ``C(D[i])`` and the kept mask."""
    mask = select_mask(spec, D, streams)
    C = np.where(mask, D, 0.0)
    if spec.kind == "randk" and spec.scaled:
        C = C * (D.shape[1] / spec.k)
    return C, mask


def compress(spec, x, rng=None):
    x = as_vector(x)
    C, mask = compress_rows(spec, x[None, :], None if rng is None else [rng])
    idx = np.flatnonzero(mask[0])
    return SparseMessage(idx, C[0, idx], x.shape[0], dense=spec.kind == "identity")
