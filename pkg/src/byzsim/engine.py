"""The round loop: double-momentum workers with error feedback, and a robust-aggregating server.

Worker state lives in ``(n, d)`` arrays so that one round is a handful of
batched kernel calls. Slots ``0..G-1`` are honest and ``G..n-1`` Byzantine.
Byzantine slots still run the protocol on their own shard (poisoned for
label flipping); that reference pipeline supplies the messages that the
attack transforms.
"""
import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from byzsim import _kernels
from byzsim.aggregate import AggregatorSpec, aggregate, kappa_hat
from byzsim.attack import AttackContext, AttackSpec, byz_messages, poison_labels
from byzsim.compress import CompressorSpec, compress_rows, message_bytes, VALUE_BYTES, SparseMessage
from byzsim.core import MASK64, Purpose, derive_stream, pack_lineage, scale_to_range
from byzsim.data import Dataset, PartitionScheme, partition
from byzsim.errors import ConfigError, DimensionError
from byzsim.metrics import MetricsSeries, RoundRecord, honest_variance
from byzsim.model import LogRegProblem, stoch_grad_pair


class Variant(Enum):
    DM21 = "dm21"
    VRDM21 = "vrdm21"
    EF21SGDM = "ef21sgdm"


@dataclass(frozen=True)
class RunConfig:
    variant: Variant = Variant.DM21
    gamma: float = 0.05
    eta: float = 0.1
    T: int = 1000
    n: int = 20
    B: int = 8
    compressor: CompressorSpec | None = None  # None: Top-k with k = ceil(0.1 d)
    aggregator: AggregatorSpec = AggregatorSpec("cm", nnm=True, byz=8)
    attack: AttackSpec = AttackSpec()
    seed: int = 0
    init_batch: int = 1
    lam: float | None = None  # None: 1 / (local shard size) per worker
    partition: PartitionScheme = PartitionScheme.LABEL_SORTED
    log_every: int = 1
    wire_variance: bool = False

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "partition", PartitionScheme(self.partition))

    def validate(self):
        if not 0 < self.eta <= 1:
            raise ConfigError(f"eta must lie in (0, 1], got {self.eta}")
        if not self.gamma >= 0 or not math.isfinite(self.gamma):
            raise ConfigError(f"gamma must be finite and >= 0, got {self.gamma}")
        if self.T < 1:
            raise ConfigError(f"T must be >= 1, got {self.T}")
        if self.n < 1 or self.B < 0 or not 2 * self.B < self.n:
            raise ConfigError(f"need 0 <= B < n/2, got n={self.n}, B={self.B}")
        if self.init_batch < 1:
            raise ConfigError("init_batch must be >= 1")
        if self.lam is not None and not self.lam >= 0:
            raise ConfigError("lam must be >= 0")
        if self.log_every < 1:
            raise ConfigError("log_every must be >= 1")
        self.aggregator.check(self.n)
        return self

    @property
    def G(self):
        return self.n - self.B

    def compressor_for(self, d):
        spec = self.compressor or CompressorSpec.topk(math.ceil(0.1 * d))
        spec.check(d)
        return spec


@dataclass
class WorkerState:
    v: np.ndarray
    u: np.ndarray
    g_local: np.ndarray
    problem: LogRegProblem


@dataclass
class ServerState:
    x: np.ndarray
    g_global: np.ndarray
    g_table: np.ndarray
    round: int = 0


def _advance(V, U, GL, grad_new, grad_old, variant, eta, compressor, streams=None):
    """Both momentum updates plus the compressed error-feedback step, for a batch of worker rows.

    Returns new ``(V, U, GL)``, the dense compressed differences ``C`` and
    the kept mask. With an identity compressor the state is set to ``U``
    directly (the uplink carries the full vector), which is the same update
    without the round-off of ``GL + (U - GL)``.
    """
    if variant is Variant.VRDM21:
        V = grad_new + (1.0 - eta) * (V - grad_old)
    else:
        V = (1.0 - eta) * V + eta * grad_new
    if variant is Variant.EF21SGDM:
        U = V
    else:
        U = (1.0 - eta) * U + eta * V
    C, mask = compress_rows(compressor, U - GL, streams)
    if compressor.kind == "identity":
        GL = U.copy()
    else:
        GL = GL + C
    return V, U, GL, C, mask


def honest_step(w, x_new, x_old, config, rng, compress_rng=None):
    """One worker update; ``rng`` supplies the sample index.

    Returns the new :class:`WorkerState` and the uplink message.
    """
    p = w.problem
    d = p.d
    if np.shape(x_new) != (d,) or np.shape(x_old) != (d,):
        raise DimensionError("model vectors must match the problem dimension")
    idx = rng.index(p.m)
    g_new, g_old = stoch_grad_pair(p, x_new, x_old, idx)
    comp = config.compressor_for(d)
    V, U, GL, C, mask = _advance(
        w.v[None, :], w.u[None, :], w.g_local[None, :], g_new[None, :], g_old[None, :],
        config.variant, config.eta, comp, None if compress_rng is None else [compress_rng],
    )
    new = WorkerState(V[0], U[0], GL[0], p)
    if comp.kind == "identity":
        msg = SparseMessage(np.arange(d), U[0], d, dense=True, replace=True)
    else:
        idx_kept = np.flatnonzero(mask[0])
        msg = SparseMessage(idx_kept, C[0, idx_kept], d)
    return new, msg


class Simulation:
    """Server plus ``n`` worker slots for one seeded run."""

    def __init__(self, config, shards):
        config.validate()
        if len(shards) != config.n:
            raise ConfigError(f"expected {config.n} shards, got {len(shards)}")
        d = shards[0].d
        if any(s.d != d for s in shards):
            raise DimensionError("all shards must share the feature dimension")
        self.config = config
        self.d = d
        self.G = config.G
        self.B = config.B
        self.compressor = config.compressor_for(d)
        self.aggregator = config.aggregator
        self.attack = config.attack

        if config.attack.kind == "lf":
            shards = list(shards[: self.G]) + [poison_labels(s) for s in shards[self.G:]]
        self.shards = list(shards)
        self.sizes = np.array([s.m for s in shards], dtype=np.intp)
        self.offsets = np.concatenate([[0], np.cumsum(self.sizes)]).astype(np.intp)
        self.A = np.ascontiguousarray(np.concatenate([s.features for s in shards]))
        self.b = np.ascontiguousarray(np.concatenate([s.labels for s in shards]))
        if config.lam is None:
            self.lam = 1.0 / self.sizes.astype(np.float64)
        else:
            self.lam = np.full(config.n, float(config.lam))
        self._workers = np.arange(config.n)
        self._lineage_base = np.array(
            [pack_lineage(w, 0, Purpose.SAMPLE) for w in range(config.n)], dtype=np.uint64
        )
        self._seed = int(config.seed) & MASK64
        self._hon_end = int(self.offsets[self.G])
        self._msg_bytes = message_bytes(self.compressor, d)
        self.xhat_t = derive_stream(config.seed, 0, 0, Purpose.XHAT).index(config.T)
        self.xhat_grad_norm_sq = None
        self.records = []
        self._init_state()

    # -- helpers -----------------------------------------------------------

    def problem(self, i):
        return LogRegProblem(self.shards[i], float(self.lam[i]))

    def _sample_rows(self, rnd):
        lineages = self._lineage_base | np.uint64(rnd << 8)
        raw = _kernels.K.philox_first(self._seed, lineages)
        return self.offsets[:-1] + scale_to_range(raw, self.sizes)

    def _compress_streams(self, rnd):
        if self.compressor.kind != "randk":
            return None
        return [derive_stream(self.config.seed, w, rnd, Purpose.COMPRESS) for w in range(self.config.n)]

    def _grads(self, rows, x):
        return _kernels.K.sample_grads(self.A, self.b, rows, x, self.lam)

    def _init_grads(self):
        cfg = self.config
        x = self.x
        if cfg.init_batch == 1:
            return self._grads(self._sample_rows(0), x)
        out = np.empty((cfg.n, self.d))
        for w in range(cfg.n):
            rng = derive_stream(cfg.seed, w, 0, Purpose.INIT)
            b = min(cfg.init_batch, int(self.sizes[w]))
            local = np.sort(rng.generator.choice(int(self.sizes[w]), b, replace=False))
            rows = self.offsets[w] + local
            out[w] = _kernels.K.sample_grads(self.A, self.b, rows, x, np.full(b, self.lam[w])).mean(axis=0)
        return out

    def _init_state(self):
        G, d = self.G, self.d
        self.t = 0
        self.x = np.zeros(d)
        g0 = self._init_grads()
        self.V = g0.copy()
        self.U = g0.copy()
        self.GL = g0.copy()
        self.C = g0.copy()  # round-0 uplink is g_i^(0) itself
        self.g_table = np.zeros((self.config.n, d))
        self.g_table[:G] = g0[:G]
        if self.B:
            ctx = AttackContext(g0[:G], g0[G:])
            self.g_table[G:] += byz_messages(self.attack, ctx, self.B)
        self.g = aggregate(self.aggregator, self.g_table)
        self.bytes_up = G * VALUE_BYTES * d
        self._record()

    # -- round ---------------------------------------------------------------

    def step(self):
        cfg = self.config
        G = self.G
        rnd = self.t + 1
        x_old = self.x
        x_new = x_old - cfg.gamma * self.g
        rows = self._sample_rows(rnd)
        grad_new = self._grads(rows, x_new)
        grad_old = self._grads(rows, x_old) if cfg.variant is Variant.VRDM21 else None
        self.V, self.U, self.GL, C, _ = _advance(
            self.V, self.U, self.GL, grad_new, grad_old,
            cfg.variant, cfg.eta, self.compressor, self._compress_streams(rnd),
        )
        self.C = C
        # server side: apply every uplink to its mirror of g_i
        if self.compressor.kind == "identity":
            self.g_table[:G] = self.U[:G]
        else:
            self.g_table[:G] = self.g_table[:G] + C[:G]
        if self.B:
            ctx = AttackContext(C[:G], C[G:])
            self.g_table[G:] = self.g_table[G:] + byz_messages(self.attack, ctx, self.B)
        self.g = aggregate(self.aggregator, self.g_table)
        self.x = x_new
        self.t = rnd
        self.bytes_up += G * self._msg_bytes
        if rnd % cfg.log_every == 0 or rnd == cfg.T or rnd == self.xhat_t:
            self._record()

    def _honest_stats(self):
        G = self.G
        losses, grads = _kernels.K.shard_stats(
            self.A[: self._hon_end], self.b[: self._hon_end], self.offsets[: G + 1], self.x, self.lam[:G]
        )
        return losses, grads

    def _record(self):
        G = self.G
        losses, grads = self._honest_stats()
        full = grads.mean(axis=0)
        gn = float(np.dot(full, full))
        if self.t == self.xhat_t:
            self.xhat_grad_norm_sq = gn
        cfg = self.config
        if not (self.t % cfg.log_every == 0 or self.t == cfg.T):
            return
        dev = self.V[:G] - grads
        het = grads - full
        rec = RoundRecord(
            t=self.t,
            loss=float(losses.mean()),
            grad_norm_sq=gn,
            msg_variance=honest_variance(self.V[:G]),
            momentum_dev=float((dev * dev).sum() / G),
            het_hat=float((het * het).sum() / G),
            bytes_up=int(self.bytes_up),
            kappa_hat=kappa_hat(self.g, self.g_table, np.arange(G)),
            msg_variance_c=honest_variance(self.C[:G]) if cfg.wire_variance else None,
        )
        self.records.append(rec)

    # -- views -----------------------------------------------------------------

    def worker(self, i):
        return WorkerState(self.V[i].copy(), self.U[i].copy(), self.GL[i].copy(), self.problem(i))

    @property
    def server(self):
        return ServerState(self.x.copy(), self.g.copy(), self.g_table.copy(), self.t)

    def run(self):
        while self.t < self.config.T:
            self.step()
        return self.series()

    def series(self):
        return MetricsSeries(
            records=list(self.records),
            config_echo=config_to_dict(self.config),
            xhat_t=self.xhat_t,
            xhat_grad_norm_sq=self.xhat_grad_norm_sq,
        )


def init(config, shards):
    """Build the initial server and worker states (``x = 0``, ``v = u = g_i = grad at x``)."""
    return Simulation(config, shards)


def make_shards(config, data):
    rng = derive_stream(config.seed, 0, 0, Purpose.PARTITION)
    return partition(data, config.n, config.partition, rng)


def run(config, data):
    """Partition ``data``, initialize, and execute ``config.T`` rounds."""
    config.validate()
    if isinstance(data, Dataset):
        shards = make_shards(config, data)
    else:
        shards = list(data)
    return Simulation(config, shards).run()


def config_to_dict(config):
    comp = config.compressor
    agg = config.aggregator
    out = {
        "variant": config.variant.value,
        "gamma": repr(float(config.gamma)),
        "eta": repr(float(config.eta)),
        "T": str(config.T),
        "n": str(config.n),
        "B": str(config.B),
        "compressor": comp.kind if comp else "topk",
        "k": str(comp.k) if comp and comp.kind != "identity" else "auto",
        "randk_scaled": str(bool(comp and comp.scaled)).lower(),
        "aggregator": agg.base,
        "nnm": str(agg.nnm).lower(),
        "agg_byz": str(agg.byz),
        "cwtm_trim": str(agg.cwtm_trim),
        "rfa_steps": str(agg.rfa_steps),
        "rfa_smoothing": repr(float(agg.rfa_smoothing)),
        "attack": config.attack.kind,
        "attack_z": "auto" if config.attack.z is None else repr(float(config.attack.z)),
        "seed": str(config.seed),
        "init_batch": str(config.init_batch),
        "lam": "auto" if config.lam is None else repr(float(config.lam)),
        "partition": config.partition.value,
        "log_every": str(config.log_every),
        "wire_variance": str(config.wire_variance).lower(),
    }
    return out


def with_seed(config, seed):
    return replace(config, seed=int(seed))
