"""Closed forms and brute-force oracles used to check the simulator.

Nothing here calls the compiled kernels: the oracles are plain Python or
plain numpy so that they stay independent of the code paths they check.
"""
import time
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from byzsim.core import Purpose, derive_stream


# momentum variance ------------------------------------------------------------

def single_momentum_var_theory(eta):
    """Steady-state noise variance of v <- (1-eta) v + eta g, in units of sigma^2."""
    if not 0 < eta <= 1:
        raise ValueError(f"eta must lie in (0, 1], got {eta}")
    return eta / (2.0 - eta)


def double_momentum_var_theory(eta):
    if not 0 < eta <= 1:
        raise ValueError(f"eta must lie in (0, 1], got {eta}")
    return eta * (2.0 - 2.0 * eta + eta * eta) / (2.0 - eta) ** 3


def variance_ratio_theory(eta):
    """Var(u_inf) / Var(v_inf) = (2 - 2 eta + eta^2) / (2 - eta)^2."""
    if not 0 < eta < 1:
        raise ValueError(f"eta must lie in (0, 1), got {eta}")
    return (2.0 - 2.0 * eta + eta * eta) / (2.0 - eta) ** 2


@dataclass(frozen=True)
class MomentumChainStats:
    var_v: float
    var_u: float
    eta: float
    sigma: float
    horizon: int
    seed: int

    @property
    def ratio(self):
        return self.var_u / self.var_v if self.var_v > 0 else float("nan")


def mc_momentum_chains(eta, sigma, horizon, seed, mu=1.0):
    """Simulate the scalar single/double momentum chains driven by g_t = mu + N(0, sigma^2).

    Both chains start at ``mu`` (the stationary mean) and the first half of
    the horizon is discarded. The chains are linear, so the constant part is
    added back after filtering the noise alone; this keeps the noiseless
    case exactly constant.
    """
    if horizon < 10 / eta:
        raise ValueError(f"horizon {horizon} too short for eta={eta}")
    rng = derive_stream(seed, 0, 0, Purpose.SAMPLE).generator
    xi = sigma * rng.standard_normal(int(horizon))
    a = [1.0, -(1.0 - eta)]
    v = lfilter([eta], a, xi)
    u = lfilter([eta], a, v)
    v, u = mu + v, mu + u
    half = int(horizon) // 2
    return MomentumChainStats(
        var_v=float(np.var(v[half:])),
        var_u=float(np.var(u[half:])),
        eta=eta,
        sigma=sigma,
        horizon=int(horizon),
        seed=seed,
    )


# geometric median ---------------------------------------------------------------

def geomedian_objective(points, z):
    P = np.asarray(points, dtype=np.float64)
    return float(np.sqrt(((P - z) ** 2).sum(axis=1)).sum())


def geomedian_oracle(points, iters=10_000, smoothing=1e-12, rtol=1e-12):
    """Long-run smoothed Weiszfeld from the coordinate-wise mean.

    Raises ``ArithmeticError`` if the objective ever rises by more than
    ``rtol`` (relative), i.e. beyond floating-point noise.
    """
    P = np.asarray(points, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] == 0:
        raise ValueError("need a non-empty (n, d) array of points")
    z = P.mean(axis=0)
    obj = geomedian_objective(P, z)
    for k in range(iters):
        dist = np.sqrt(((P - z) ** 2).sum(axis=1))
        w = 1.0 / np.maximum(smoothing, dist)
        z_new = (w[:, None] * P).sum(axis=0) / w.sum()
        new = geomedian_objective(P, z_new)
        if new > obj * (1.0 + rtol):
            raise ArithmeticError(f"objective increased at iteration {k}: {obj!r} -> {new!r}")
        if np.array_equal(z_new, z):
            break
        z, obj = z_new, new
    return z


# brute-force aggregator oracles ----------------------------------------------------

def _seq_sum(values):
    acc = values[0]
    for v in values[1:]:
        acc = acc + v
    return acc


def cwtm_oracle(vectors, B):
    rows = [[float(v) for v in row] for row in vectors]
    n, d = len(rows), len(rows[0])
    out = []
    for j in range(d):
        col = sorted(row[j] for row in rows)
        out.append(_seq_sum(col[B:n - B]) / (n - 2 * B))
    return out


def nnm_oracle(vectors, B):
    rows = [[float(v) for v in row] for row in vectors]
    n, d = len(rows), len(rows[0])
    G = n - B
    out = []
    for i in range(n):
        dists = []
        for j in range(n):
            s = 0.0
            for p in range(d):
                diff = rows[i][p] - rows[j][p]
                s = s + diff * diff
            dists.append((s, j))
        chosen = [j for _, j in sorted(dists)[:G]]
        out.append([_seq_sum([rows[j][p] for j in chosen]) / G for p in range(d)])
    return out


def median_oracle(vectors):
    rows = [[float(v) for v in row] for row in vectors]
    n = len(rows)
    out = []
    for j in range(len(rows[0])):
        col = sorted(row[j] for row in rows)
        out.append(col[n // 2] if n % 2 else (col[n // 2 - 1] + col[n // 2]) / 2.0)
    return out


# gradients -------------------------------------------------------------------------

def naive_loss(A, b, x, lam):
    z = np.asarray(A) @ np.asarray(x)
    return float(np.mean(np.log(1.0 + np.exp(-np.asarray(b) * z))) + lam * np.dot(x, x))


def finite_difference_grad(f, x, h=1e-6):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    for j in range(x.shape[0]):
        e = np.zeros_like(x)
        e[j] = h
        out[j] = (f(x + e) - f(x - e)) / (2 * h)
    return out


def reference_sgd(problems, seed, gamma, T):
    """Textbook parallel SGD: x <- x - gamma * mean_i grad f_i(x, xi_i), one sample per worker.

    Sample indices come from the same stream lineages the simulator uses and
    the per-sample gradient is :func:`byzsim.model.stoch_grad`; everything
    else (momentum, compression, aggregation) is absent. Returns the iterates
    ``x^(1) .. x^(T)``.
    """
    from byzsim.model import stoch_grad

    n = len(problems)

    def avg_grad(x, rnd):
        acc = None
        for i, p in enumerate(problems):
            idx = derive_stream(seed, i, rnd, Purpose.SAMPLE).index(p.m)
            gi = stoch_grad(p, x, idx)
            acc = gi if acc is None else acc + gi
        return acc / n

    x = np.zeros(problems[0].d)
    g = avg_grad(x, 0)
    out = []
    for t in range(T):
        x = x - gamma * g
        out.append(x)
        g = avg_grad(x, t + 1)
    return out


# self-check suite for ``byzsim verify`` ----------------------------------------------

@dataclass
class Check:
    name: str
    passed: bool
    detail: str
    seconds: float


def _timed(name, fn):
    t0 = time.perf_counter()
    try:
        passed, detail = fn()
    except Exception as exc:  # report, don't crash the suite
        passed, detail = False, f"{type(exc).__name__}: {exc}"
    return Check(name, passed, detail, time.perf_counter() - t0)


def check_momentum_variance(etas=(0.1, 0.3, 0.5), horizon=10**6, seed=0):
    parts, ok = [], True
    for eta in etas:
        st = mc_momentum_chains(eta, 1.0, horizon, seed)
        r_err = abs(st.ratio / variance_ratio_theory(eta) - 1)
        v_err = abs(st.var_v / single_momentum_var_theory(eta) - 1)
        ok &= r_err < 0.05 and v_err < 0.05
        parts.append(f"eta={eta}: ratio {st.ratio:.4f} (err {r_err:.2%}), var_v err {v_err:.2%}")
    return ok, "; ".join(parts)


def check_contraction(d=123, k=12, n_topk=1000, n_randk=10_000, seed=0):
    from byzsim.compress import CompressorSpec, compress, densify

    rng = np.random.default_rng(seed)
    top = CompressorSpec.topk(k)
    bound = 1 - k / d
    ok_top = True
    for _ in range(n_topk):
        x = rng.standard_normal(d)
        r = densify(compress(top, x)) - x
        ok_top &= bool(np.dot(r, r) <= bound * np.dot(x, x))
    rk = CompressorSpec.randk(k)
    x = rng.standard_normal(d)
    ratios = np.empty(n_randk)
    for j in range(n_randk):
        stream = derive_stream(seed, 0, j, Purpose.COMPRESS)
        r = densify(compress(rk, x, stream)) - x
        ratios[j] = np.dot(r, r) / np.dot(x, x)
    rel = abs(ratios.mean() / bound - 1)
    return bool(ok_top and rel < 0.02), f"top-k bound held on all {n_topk}; rand-k mean ratio {ratios.mean():.4f} vs {bound:.4f} ({rel:.2%})"


def check_aggregators(n_exact=1000, n_rfa=100, seed=1):
    from byzsim import aggregate as agg

    rng = np.random.default_rng(seed)
    for _ in range(n_exact):
        n = int(rng.integers(3, 10))
        d = int(rng.integers(1, 6))
        B = int(rng.integers(0, (n - 1) // 2 + 1))
        X = rng.standard_normal((n, d))
        if not np.array_equal(agg.cwtm(X, B), np.array(cwtm_oracle(X, B))):
            return False, f"cwtm mismatch on n={n}, d={d}, B={B}"
        if not np.array_equal(agg.nnm(X, B), np.array(nnm_oracle(X, B))):
            return False, f"nnm mismatch on n={n}, d={d}, B={B}"
    worst = 0.0
    for _ in range(n_rfa):
        P = rng.standard_normal((10, 2))
        ref = geomedian_objective(P, geomedian_oracle(P))
        got = geomedian_objective(P, agg.rfa(P, 8, 1e-6))
        worst = max(worst, got / ref - 1)
    return worst < 1e-3, f"cwtm/nnm exact on {n_exact}; worst 8-step RFA objective gap {worst:.2e}"


def check_gradients(probes=100, seed=2):
    from byzsim.data import synth_logreg
    from byzsim.model import LogRegProblem, full_grad, stoch_grad

    rng = np.random.default_rng(seed)
    data = synth_logreg(200, 10, 1.0, derive_stream(seed, 0, 0, Purpose.SYNTH))
    p = LogRegProblem.default(data)
    worst = 0.0
    for _ in range(probes):
        x = rng.standard_normal(10)
        j = int(rng.integers(data.m))
        fd = finite_difference_grad(lambda y: naive_loss(data.features[j:j + 1], data.labels[j:j + 1], y, p.lam), x)
        g = stoch_grad(p, x, j)
        worst = max(worst, float(np.linalg.norm(g - fd) / np.linalg.norm(fd)))
    x = rng.standard_normal(10)
    mean = np.mean([stoch_grad(p, x, j) for j in range(data.m)], axis=0)
    gap = float(np.max(np.abs(mean - full_grad(p, x))))
    return worst < 1e-5 and gap <= 1e-12, f"worst finite-difference rel err {worst:.2e}; mean-vs-full gap {gap:.1e}"


def check_sgd_collapse(T=100, seed=3):
    from byzsim.aggregate import AggregatorSpec
    from byzsim.compress import CompressorSpec
    from byzsim.data import PartitionScheme, partition, synth_logreg
    from byzsim.engine import RunConfig, Simulation

    data = synth_logreg(400, 8, 1.0, derive_stream(seed, 0, 0, Purpose.SYNTH))
    cfg = RunConfig(
        eta=1.0, gamma=0.05, T=T, n=4, B=0, seed=seed,
        compressor=CompressorSpec.identity(), aggregator=AggregatorSpec("mean"),
    )
    shards = partition(data, cfg.n, PartitionScheme.IID_UNIFORM, derive_stream(seed, 0, 0, Purpose.PARTITION))
    sim = Simulation(cfg, shards)
    ref = reference_sgd([sim.problem(i) for i in range(cfg.n)], seed, cfg.gamma, T)
    for t in range(T):
        sim.step()
        if not np.array_equal(sim.x, ref[t]):
            return False, f"diverged at round {t + 1}"
    return True, f"bit-identical for {T} rounds"


def run_checks():
    """Momentum-variance closed forms plus oracle cross-checks on the live kernels."""
    return [
        _timed("momentum variance ratio", check_momentum_variance),
        _timed("compressor contraction", check_contraction),
        _timed("aggregator oracles", check_aggregators),
        _timed("gradient correctness", check_gradients),
        _timed("sgd collapse", check_sgd_collapse),
    ]
