"""Seeded random streams and small dense-vector helpers.

Every random draw in the simulator comes from a stream identified by its
lineage ``(root_seed, worker_id, round, purpose)``. A stream is a numpy
``Philox`` generator keyed by ``[root_seed, packed_lineage]``; Philox is
counter-based, so a lineage fully determines its output no matter which
other streams were created before it or on which thread.
"""
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from byzsim import _kernels
from byzsim.errors import DimensionError

MASK64 = (1 << 64) - 1
WORKER_BITS = 24
ROUND_BITS = 32
TAG_BITS = 8


class Purpose(IntEnum):
    SAMPLE = 1
    INIT = 2
    COMPRESS = 3
    PARTITION = 4
    SYNTH = 5
    XHAT = 6


def pack_lineage(worker_id, round, purpose):
    worker_id, round, purpose = int(worker_id), int(round), int(purpose)
    if not 0 <= worker_id < (1 << WORKER_BITS):
        raise ValueError(f"worker_id {worker_id} out of range")
    if not 0 <= round < (1 << ROUND_BITS):
        raise ValueError(f"round {round} out of range")
    if not 0 <= purpose < (1 << TAG_BITS):
        raise ValueError(f"purpose tag {purpose} out of range")
    return (worker_id << (ROUND_BITS + TAG_BITS)) | (round << TAG_BITS) | purpose


@dataclass(frozen=True)
class Lineage:
    root_seed: int
    worker_id: int
    round: int
    purpose: Purpose


class RngStream:
    """Single-owner random stream for one lineage."""

    def __init__(self, lineage):
        self.lineage = lineage
        # explicit uint64: a list of large Python ints would round-trip through float64
        key = np.array(
            [lineage.root_seed & MASK64, pack_lineage(lineage.worker_id, lineage.round, lineage.purpose)],
            dtype=np.uint64,
        )
        self.bit_generator = np.random.Philox(key=key)
        self.generator = np.random.Generator(self.bit_generator)

    def raw(self, count=None):
        """Next raw 64-bit outputs of the underlying Philox counter."""
        return self.bit_generator.random_raw(count)

    def index(self, m):
        """Uniform index in ``[0, m)`` from one raw draw (multiply-high mapping)."""
        return (int(self.raw()) * int(m)) >> 64

    def __repr__(self):
        return f"RngStream({self.lineage})"


def derive_stream(root_seed, worker_id, round, purpose):
    return RngStream(Lineage(int(root_seed), int(worker_id), int(round), Purpose(purpose)))


def scale_to_range(raw, m):
    """Vectorized ``floor(raw * m / 2**64)`` for uint64 ``raw`` and ``m < 2**32``."""
    raw = np.asarray(raw, dtype=np.uint64)
    m = np.asarray(m, dtype=np.uint64)
    if np.any(m >= np.uint64(1 << 32)):
        raise ValueError("range too large for 32x64 multiply-high")
    hi = raw >> np.uint64(32)
    lo = raw & np.uint64(0xFFFFFFFF)
    return ((hi * m + ((lo * m) >> np.uint64(32))) >> np.uint64(32)).astype(np.intp)


def first_indices(root_seed, worker_ids, round, purpose, sizes):
    """``derive_stream(seed, w, round, purpose).index(sizes[w])`` for many workers at once."""
    lineages = np.array([pack_lineage(w, round, purpose) for w in worker_ids], dtype=np.uint64)
    raw = _kernels.K.philox_first(int(root_seed) & MASK64, lineages)
    return scale_to_range(raw, sizes)


# dense vector helpers ------------------------------------------------------

def as_vector(values, d=None):
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionError(f"expected a 1-D vector, got shape {v.shape}")
    if d is not None and v.shape[0] != d:
        raise DimensionError(f"expected length {d}, got {v.shape[0]}")
    return v


def _pair(a, b):
    a = as_vector(a)
    b = as_vector(b)
    if a.shape != b.shape:
        raise DimensionError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    return a, b


def add(a, b):
    a, b = _pair(a, b)
    return a + b


def sub(a, b):
    a, b = _pair(a, b)
    return a - b


def scale(a, s):
    return float(s) * as_vector(a)


def dot(a, b):
    a, b = _pair(a, b)
    return float(np.dot(a, b))


def norm2(a):
    a = as_vector(a)
    return float(np.dot(a, a))
