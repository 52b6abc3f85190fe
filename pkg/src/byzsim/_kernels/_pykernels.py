"""Numpy implementations of the hot kernels.

Semantics here are the reference; ``_ckernels.pyx`` must agree with these
up to floating-point summation order (selection results are identical).
"""
import numpy as np
from scipy.special import expit

NAME = "python"


def philox_first(seed, lineages):
    """First raw 64-bit output of ``Philox(key=[seed, lineage])`` per lineage."""
    out = np.empty(len(lineages), dtype=np.uint64)
    key = np.array([int(seed) & 0xFFFFFFFFFFFFFFFF, 0], dtype=np.uint64)
    for i, lineage in enumerate(lineages):
        key[1] = lineage
        out[i] = np.random.Philox(key=key).random_raw()
    return out


def sample_grads(A, b, rows, x, lam):
    a = A[rows]
    bb = b[rows]
    z = (a * x).sum(axis=1)
    coef = -bb * expit(-bb * z)
    return coef[:, None] * a + (2.0 * lam)[:, None] * x


def shard_stats(A, b, offsets, x, lam):
    """Per-shard mean loss and full gradient for shards ``A[offsets[s]:offsets[s+1]]``."""
    z = (A * x).sum(axis=1)
    t = -b * z
    starts = offsets[:-1]
    sizes = np.diff(offsets).astype(np.float64)
    losses = np.add.reduceat(np.logaddexp(0.0, t), starts) / sizes
    coef = -b * expit(t)
    grads = np.add.reduceat(coef[:, None] * A, starts, axis=0) / sizes[:, None]
    losses = losses + lam * np.dot(x, x)
    grads = grads + (2.0 * lam)[:, None] * x
    return losses, grads


def topk_mask(D, k):
    """Boolean mask of the k largest-magnitude entries per row; ties go to the lower index."""
    r, d = D.shape
    order = np.argsort(-np.abs(D), axis=1, kind="stable")[:, :k]
    mask = np.zeros((r, d), dtype=bool)
    np.put_along_axis(mask, order, True, axis=1)
    return mask


def coord_median(X):
    return np.median(X, axis=0)


def cwtm(X, B):
    n = X.shape[0]
    S = np.sort(X, axis=0)
    acc = S[B].copy()
    for r in range(B + 1, n - B):
        acc += S[r]
    return acc / (n - 2 * B)


def nnm(X, B):
    n = X.shape[0]
    G = n - B
    diff = X[:, None, :] - X[None, :, :]
    dist = (diff * diff).sum(axis=2)
    order = np.argsort(dist, axis=1, kind="stable")
    acc = X[order[:, 0]].copy()
    for j in range(1, G):
        acc += X[order[:, j]]
    return acc / G


def weiszfeld(X, steps, nu):
    z = X.mean(axis=0)
    for _ in range(steps):
        dist = np.sqrt(((X - z) ** 2).sum(axis=1))
        w = 1.0 / np.maximum(nu, dist)
        z = (w[:, None] * X).sum(axis=0) / w.sum()
    return z
