"""Robust aggregation rules and nearest-neighbor mixing.

All rules take an ``(n, d)`` array (or a list of ``n`` vectors) and return
a length-``d`` vector; :func:`nnm` returns ``n`` mixed vectors.
"""
from dataclasses import dataclass

import numpy as np

from byzsim import _kernels
from byzsim.errors import ConfigError, DimensionError

BASES = ("mean", "cm", "cwtm", "rfa")


@dataclass(frozen=True)
class AggregatorSpec:
    base: str
    nnm: bool = False
    byz: int = 0  # assumed Byzantine bound B, used by NNM and as the CWTM default trim
    trim: int | None = None
    rfa_steps: int = 8
    rfa_smoothing: float = 1e-6

    def __post_init__(self):
        if self.base not in BASES:
            raise ConfigError(f"unknown aggregator {self.base!r}")
        if self.byz < 0:
            raise ConfigError("Byzantine bound must be >= 0")
        if self.rfa_steps < 1:
            raise ConfigError("rfa_steps must be >= 1")
        if not self.rfa_smoothing > 0:
            raise ConfigError("rfa_smoothing must be > 0")

    @property
    def cwtm_trim(self):
        return self.byz if self.trim is None else self.trim

    def check(self, n):
        if self.nnm and not 2 * self.byz < n:
            raise ConfigError(f"NNM needs B < n/2 (B={self.byz}, n={n})")
        if self.base == "cwtm" and not 2 * self.cwtm_trim < n:
            raise ConfigError(f"CWTM needs 2B < n (B={self.cwtm_trim}, n={n})")

    def label(self):
        name = self.base.upper()
        return f"{name}+NNM" if self.nnm else name


def _stack(vectors):
    X = np.ascontiguousarray(np.asarray(vectors, dtype=np.float64))
    if X.ndim != 2:
        raise DimensionError(f"expected n vectors of equal length, got shape {X.shape}")
    if X.shape[0] == 0:
        raise ValueError("cannot aggregate an empty set of vectors")
    return X


def mean(vectors):
    return _stack(vectors).mean(axis=0)


def coordinate_median(vectors):
    return _kernels.K.coord_median(_stack(vectors))


def cwtm(vectors, B):
    X = _stack(vectors)
    if B < 0 or not 2 * B < X.shape[0]:
        raise ConfigError(f"CWTM needs 0 <= 2B < n (B={B}, n={X.shape[0]})")
    return _kernels.K.cwtm(X, int(B))


def rfa(vectors, steps=8, smoothing=1e-6):
    """Smoothed Weiszfeld iterations for the geometric median, started at the mean."""
    if steps < 1 or not smoothing > 0:
        raise ConfigError("rfa needs steps >= 1 and smoothing > 0")
    return _kernels.K.weiszfeld(_stack(vectors), int(steps), float(smoothing))


def nnm(vectors, B):
    """Replace each input by the mean of its ``n - B`` nearest inputs (itself included)."""
    X = _stack(vectors)
    if B < 0 or not 2 * B < X.shape[0]:
        raise ConfigError(f"NNM needs 0 <= B < n/2 (B={B}, n={X.shape[0]})")
    return _kernels.K.nnm(X, int(B))


def aggregate(spec, vectors):
    X = _stack(vectors)
    spec.check(X.shape[0])
    if spec.nnm:
        X = nnm(X, spec.byz)
    if spec.base == "mean":
        return mean(X)
    if spec.base == "cm":
        return coordinate_median(X)
    if spec.base == "cwtm":
        return cwtm(X, spec.cwtm_trim)
    return rfa(X, spec.rfa_steps, spec.rfa_smoothing)


def kappa_hat(output, vectors, subset):
    """Empirical robustness ratio ||F - mean_S||^2 / ((1/|S|) sum_S ||g_i - mean_S||^2).

    Returns ``nan`` when the subset has zero spread.
    """
    S = _stack(vectors)[np.asarray(subset, dtype=np.intp)]
    centre = S.mean(axis=0)
    spread = ((S - centre) ** 2).sum() / S.shape[0]
    dev = float(((np.asarray(output) - centre) ** 2).sum())
    if spread == 0:
        return float("nan")
    return dev / float(spread)
