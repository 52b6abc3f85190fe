"""Per-round diagnostics and CSV output."""
import csv
import io
import math
from dataclasses import dataclass, field, fields

import numpy as np

COLUMNS = ("t", "loss", "grad_norm_sq", "msg_variance", "momentum_dev", "het_hat", "bytes_up", "kappa_hat")
# written only when the wire-message variance is requested
WIRE_COLUMN = "msg_variance_c"


@dataclass(frozen=True)
class RoundRecord:
    t: int
    loss: float
    grad_norm_sq: float
    msg_variance: float
    momentum_dev: float
    het_hat: float
    bytes_up: int
    kappa_hat: float = float("nan")
    msg_variance_c: float | None = None


@dataclass
class MetricsSeries:
    records: list = field(default_factory=list)
    config_echo: dict = field(default_factory=dict)
    xhat_t: int | None = None
    xhat_grad_norm_sq: float | None = None

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records], dtype=np.float64)

    def at(self, t):
        for r in self.records:
            if r.t == t:
                return r
        raise KeyError(t)

    @property
    def final(self):
        return self.records[-1]


def honest_variance(messages):
    """(1/G) * sum_i ||m_i - mean||^2."""
    M = np.asarray(messages, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] == 0:
        raise ValueError("honest_variance needs a non-empty (G, d) array")
    centred = M - M.mean(axis=0)
    return float((centred * centred).sum() / M.shape[0])


def _fmt(value):
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return f"{value:.17g}"


def _columns(series):
    with_wire = any(r.msg_variance_c is not None for r in series.records)
    return COLUMNS + ((WIRE_COLUMN,) if with_wire else ())


def emit_csv(series, sink):
    """Write the series to a text or binary stream."""
    cols = _columns(series)
    lines = [",".join(cols)]
    for r in series.records:
        lines.append(",".join(_fmt(getattr(r, c)) for c in cols))
    text = "\n".join(lines) + "\n"
    if isinstance(sink, io.TextIOBase):
        sink.write(text)
    else:
        sink.write(text.encode("ascii"))


def read_csv(source):
    """Parse :func:`emit_csv` output back into a :class:`MetricsSeries`."""
    if isinstance(source, (bytes, bytearray)):
        source = source.decode("ascii")
    if isinstance(source, str):
        source = io.StringIO(source)
    reader = csv.DictReader(source)
    names = {f.name for f in fields(RoundRecord)}
    records = []
    for row in reader:
        kw = {}
        for key, value in row.items():
            if key not in names:
                continue
            kw[key] = int(value) if key in ("t", "bytes_up") else float(value)
        records.append(RoundRecord(**kw))
    return MetricsSeries(records)


def summarize(series_list):
    """Per-round mean and standard error across seeds.

    Returns ``(t, {column: (mean, stderr)})``; stderr is the sample standard
    deviation over seeds divided by sqrt(#seeds).
    """
    ts = [tuple(r.t for r in s.records) for s in series_list]
    if not ts or any(t != ts[0] for t in ts):
        raise ValueError("seed runs must share the same round grid")
    k = len(series_list)
    out = {}
    cols = [c for c in _columns(series_list[0]) if c != "t"]
    for c in cols:
        M = np.vstack([s.column(c) for s in series_list])
        mu = M.mean(axis=0)
        se = M.std(axis=0, ddof=1) / math.sqrt(k) if k > 1 else np.zeros_like(mu)
        out[c] = (mu, se)
    return np.array(ts[0]), out


def emit_summary_csv(series_list, sink):
    t, stats = summarize(series_list)
    cols = list(stats)
    header = ["t"] + [f"{c}_{s}" for c in cols for s in ("mean", "stderr")]
    lines = [",".join(header)]
    for i, ti in enumerate(t):
        row = [str(int(ti))]
        for c in cols:
            mu, se = stats[c]
            row += [_fmt(mu[i]), _fmt(se[i])]
        lines.append(",".join(row))
    sink.write("\n".join(lines) + "\n")
