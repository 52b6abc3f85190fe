"""Datasets: LIBSVM parsing, synthetic logistic-regression data, worker partitions."""
import gzip
import io
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from byzsim.errors import ConfigError, IndexRangeError, ParseError


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        X = np.ascontiguousarray(self.features, dtype=np.float64)
        y = np.ascontiguousarray(self.labels, dtype=np.float64)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise ValueError(f"features {X.shape} and labels {y.shape} disagree")
        if X.shape[0] < 1:
            raise ValueError("a dataset needs at least one sample")
        if not np.all(np.abs(y) == 1.0):
            raise ValueError("labels must be -1 or +1")
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    @property
    def m(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]

    def __len__(self):
        return self.m

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.intp)
        return Dataset(self.features[idx], self.labels[idx])

    def same_as(self, other):
        return (
            self.features.shape == other.features.shape
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
        )


def concat(datasets):
    return Dataset(
        np.concatenate([ds.features for ds in datasets]),
        np.concatenate([ds.labels for ds in datasets]),
    )


# LIBSVM ---------------------------------------------------------------------

_LABELS = {1.0: 1.0, -1.0: -1.0, 0.0: -1.0}


def parse_libsvm(text, d):
    """Parse LIBSVM text into a dense dataset with ``d`` features.

    ``text`` may be ``str`` or ``bytes``. Indices are 1-based; absent
    features are zero. Labels ``0/1`` are remapped to ``-1/+1``.
    """
    if isinstance(text, (bytes, bytearray)):
        text = text.decode("utf-8")
    rows, labels = [], []
    for lineno, line in enumerate(io.StringIO(text), start=1):
        tokens = line.split()
        if not tokens:
            continue
        try:
            label = float(tokens[0])
        except ValueError:
            raise ParseError(f"bad label {tokens[0]!r}", lineno) from None
        if label not in _LABELS:
            raise ParseError(f"label {tokens[0]!r} is not binary", lineno)
        row = np.zeros(d)
        for tok in tokens[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise ParseError(f"expected idx:val, got {tok!r}", lineno)
            try:
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise ParseError(f"bad feature {tok!r}", lineno) from None
            if idx < 1 or idx > d:
                raise IndexRangeError(f"feature index {idx} outside 1..{d}", lineno)
            row[idx - 1] = val
        rows.append(row)
        labels.append(_LABELS[label])
    if not rows:
        raise ParseError("no samples found")
    return Dataset(np.vstack(rows), np.array(labels))


def load_libsvm(path, d, compressed=None):
    """Read a LIBSVM file; gzip is used when ``compressed`` is true or the name ends in ``.gz``."""
    path = Path(path)
    if compressed is None:
        compressed = path.suffix == ".gz"
    opener = gzip.open if compressed else open
    with opener(path, "rb") as fh:
        return parse_libsvm(fh.read(), d)


def dump_libsvm(ds):
    lines = []
    for row, label in zip(ds.features, ds.labels):
        parts = ["+1" if label > 0 else "-1"]
        parts += [f"{j + 1}:{float(row[j])!r}" for j in np.flatnonzero(row)]
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


# partitions -----------------------------------------------------------------

class PartitionScheme(Enum):
    IID_UNIFORM = "iid"
    LABEL_SORTED = "label_sorted"


def partition(data, n, scheme, rng=None):
    """Split ``data`` into ``n`` contiguous near-equal shards.

    IID shuffles with ``rng`` first; LABEL_SORTED stable-sorts by label
    (``-1`` first) so most shards see a single class.
    """
    n = int(n)
    if n < 1 or data.m < n:
        raise ConfigError(f"cannot split {data.m} samples across {n} workers")
    scheme = PartitionScheme(scheme)
    if scheme is PartitionScheme.IID_UNIFORM:
        if rng is None:
            raise ConfigError("iid partition needs a random stream")
        order = rng.generator.permutation(data.m)
    else:
        order = np.argsort(data.labels, kind="stable")
    return [data.subset(chunk) for chunk in np.array_split(order, n)]


def synth_logreg(m, d, separation, rng):
    """Gaussian features, labels ``sign(a . w* + noise)`` with noise std ``0.5 / separation``."""
    if m < 1 or d < 1 or separation < 0:
        raise ConfigError("synth_logreg needs m >= 1, d >= 1, separation >= 0")
    gen = rng.generator
    w = gen.standard_normal(d)
    w /= np.linalg.norm(w)
    A = gen.standard_normal((m, d))
    noise = gen.standard_normal(m)
    score = (A * w).sum(axis=1)
    if np.isfinite(separation):
        score = score + noise * (0.5 / separation) if separation > 0 else noise
    y = np.where(score >= 0, 1.0, -1.0)
    return Dataset(A, y)
