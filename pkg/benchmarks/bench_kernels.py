"""Compiled kernels vs the numpy fallback, per kernel and for a whole desk-scale run.

    python benchmarks/bench_kernels.py [--rounds 3000] [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from byzsim import _kernels, engine
from byzsim.aggregate import AggregatorSpec
from byzsim.core import Purpose, derive_stream
from byzsim.data import synth_logreg


def kernel_cases(rng):
    n, d, m = 20, 50, 4000
    A = rng.standard_normal((m, d))
    b = np.where(rng.random(m) < 0.5, -1.0, 1.0)
    x = rng.standard_normal(d)
    rows = rng.integers(0, m, n).astype(np.intp)
    lam = np.full(n, 1.0 / 200)
    offsets = np.linspace(0, 2400, 13).astype(np.intp)
    X = rng.standard_normal((n, d))
    lineages = np.array([(w << 40) | (7 << 8) | 1 for w in range(n)], dtype=np.uint64)
    return {
        "philox_first": lambda K: K.philox_first(3, lineages),
        "sample_grads": lambda K: K.sample_grads(A, b, rows, x, lam),
        "shard_stats": lambda K: K.shard_stats(A[:2400], b[:2400], offsets, x, lam[:12]),
        "topk_mask": lambda K: K.topk_mask(X, 5),
        "coord_median": lambda K: K.coord_median(X),
        "cwtm": lambda K: K.cwtm(X, 8),
        "nnm": lambda K: K.nnm(X, 8),
        "weiszfeld": lambda K: K.weiszfeld(X, 8, 1e-6),
    }


def best_of(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--rounds", type=int, default=3000)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)

    backends = _kernels.available_backends()
    names = [k.NAME for k in backends]
    if "compiled" not in names:
        print("compiled extension not built; only the numpy fallback is available")
    previous = _kernels.active()

    cases = kernel_cases(np.random.default_rng(0))
    print(f"{'kernel':<14}" + "".join(f"{n + ' (us)':>16}" for n in names) + f"{'speedup':>10}")
    for label, fn in cases.items():
        t = [best_of(lambda: fn(K), args.repeat, 200) * 1e6 for K in backends]
        speed = f"{t[-1] / t[0]:9.1f}x" if len(t) == 2 else ""
        print(f"{label:<14}" + "".join(f"{v:16.2f}" for v in t) + f" {speed}")

    data = synth_logreg(4000, 50, 1.0, derive_stream(0, 0, 0, Purpose.SYNTH))
    cfg = engine.RunConfig(T=args.rounds, aggregator=AggregatorSpec("cm", nnm=True, byz=8))
    shards = engine.make_shards(cfg, data)
    totals = []
    finals = []
    try:
        for K in backends:
            _kernels.use(K)
            totals.append(best_of(lambda: finals.append(engine.Simulation(cfg, shards).run().final.loss), 1, 1))
    finally:
        _kernels.use(previous)
    print(f"\nfull run, T={args.rounds}, n=20, d=50, CM+NNM")
    for n, t in zip(names, totals):
        print(f"  {n:<10} {t:8.2f} s  ({t / args.rounds * 1e3:.3f} ms/round)")
    if len(totals) == 2:
        print(f"  speedup    {totals[1] / totals[0]:8.1f}x; final losses differ by {abs(finals[0] - finals[-1]):.1e}")


if __name__ == "__main__":
    main()
