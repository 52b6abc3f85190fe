import io
import math
from dataclasses import replace

import numpy as np
import pytest

from byzsim import engine
from byzsim.aggregate import AggregatorSpec
from byzsim.attack import AttackSpec
from byzsim.compress import CompressorSpec
from byzsim.core import Purpose, derive_stream
from byzsim.data import Dataset, PartitionScheme, partition, synth_logreg
from byzsim.engine import RunConfig, Simulation, Variant, WorkerState, honest_step
from byzsim.errors import ConfigError
from byzsim.metrics import emit_csv
from byzsim.model import LogRegProblem, full_grad, loss, stoch_grad
from byzsim.verify import reference_sgd

pytestmark = pytest.mark.usefixtures("backend")


def small_config(**kw):
    base = dict(n=6, B=2, T=30, gamma=0.1, seed=4, aggregator=AggregatorSpec("cm", nnm=True, byz=2))
    base.update(kw)
    return RunConfig(**base)


def shards_for(cfg, data, scheme=PartitionScheme.IID_UNIFORM):
    return partition(data, cfg.n, scheme, derive_stream(cfg.seed, 0, 0, Purpose.PARTITION))


def test_init_state(small_data):
    cfg = small_config()
    sim = Simulation(cfg, shards_for(cfg, small_data))
    for i in range(cfg.n):
        w = sim.worker(i)
        assert np.array_equal(w.v, w.u) and np.array_equal(w.u, w.g_local)
    assert np.array_equal(sim.x, np.zeros(small_data.d))
    assert np.array_equal(sim.g_table[: sim.G], sim.GL[: sim.G])


def test_init_deterministic(small_data):
    cfg = small_config()
    a = Simulation(cfg, shards_for(cfg, small_data))
    b = Simulation(cfg, shards_for(cfg, small_data))
    assert np.array_equal(a.V, b.V) and np.array_equal(a.g, b.g)


def test_full_batch_init_is_full_gradient(small_data):
    cfg = RunConfig(n=4, B=0, seed=1, aggregator=AggregatorSpec("mean"), init_batch=small_data.m, lam=0.01)
    shards = shards_for(cfg, small_data)
    sim = Simulation(cfg, shards)
    want = np.mean([full_grad(LogRegProblem(s, 0.01), np.zeros(small_data.d)) for s in shards], axis=0)
    assert np.allclose(sim.g, want, rtol=0, atol=1e-12)


@pytest.mark.parametrize("variant", list(Variant))
def test_eta_one_step(small_data, rng, variant):
    p = LogRegProblem(small_data, 0.02)
    d = small_data.d
    w = WorkerState(*rng.standard_normal((3, d)), p)
    x_old, x_new = rng.standard_normal((2, d))
    cfg = RunConfig(variant=variant, eta=1.0, compressor=CompressorSpec.topk(2))
    new, msg = honest_step(w, x_new, x_old, cfg, derive_stream(0, 0, 1, Purpose.SAMPLE))
    j = derive_stream(0, 0, 1, Purpose.SAMPLE).index(p.m)
    assert np.allclose(new.v, stoch_grad(p, x_new, j), rtol=0, atol=1e-15)
    assert np.array_equal(new.u, new.v)
    assert msg.nnz == 2


def test_identity_step_syncs_local_state(small_data, rng):
    p = LogRegProblem(small_data, 0.02)
    w = WorkerState(*rng.standard_normal((3, small_data.d)), p)
    x = rng.standard_normal(small_data.d)
    cfg = RunConfig(compressor=CompressorSpec.identity())
    new, msg = honest_step(w, x, x, cfg, derive_stream(0, 0, 1, Purpose.SAMPLE))
    assert np.array_equal(new.g_local, new.u)
    assert msg.byte_cost == 8 * small_data.d


def test_unrolled_momentum(rng):
    # one-sample shard, so the stochastic gradient is the full gradient
    p = LogRegProblem(Dataset(rng.standard_normal((1, 4)), np.array([1.0])), 0.1)
    eta = 0.1
    xs = [rng.standard_normal(4) for _ in range(25)]
    v0 = full_grad(p, xs[0])
    w = WorkerState(v0, v0, v0, p)
    cfg = RunConfig(eta=eta, compressor=CompressorSpec.identity())
    for k in range(1, 25):
        w, _ = honest_step(w, xs[k], xs[k - 1], cfg, derive_stream(0, 0, k, Purpose.SAMPLE))
        want = (1 - eta) ** k * v0
        for j in range(k):
            want = want + eta * (1 - eta) ** j * full_grad(p, xs[k - j])
        assert np.max(np.abs(w.v - want)) <= 1e-12


def test_step_matches_honest_step(small_data):
    cfg = small_config(variant=Variant.VRDM21)
    sim = Simulation(cfg, shards_for(cfg, small_data))
    sim.step()
    before = [sim.worker(i) for i in range(cfg.n)]
    x_old = sim.x.copy()
    sim.step()
    for i in range(cfg.G):
        new, _ = honest_step(before[i], sim.x, x_old, cfg, derive_stream(cfg.seed, i, 2, Purpose.SAMPLE))
        w = sim.worker(i)
        assert np.allclose(w.v, new.v, rtol=0, atol=1e-13)
        assert np.allclose(w.g_local, new.g_local, rtol=0, atol=1e-13)


def test_server_mirror_stays_in_sync(small_data):
    for comp in (CompressorSpec.topk(2), CompressorSpec.randk(3), CompressorSpec.identity()):
        cfg = small_config(compressor=comp, attack=AttackSpec("sf"))
        sim = Simulation(cfg, shards_for(cfg, small_data))
        for _ in range(20):
            sim.step()
            assert np.array_equal(sim.g_table[: sim.G], sim.GL[: sim.G])


def test_sgd_collapse(small_data):
    cfg = RunConfig(
        eta=1.0, gamma=0.1, n=5, B=0, T=100, seed=8,
        compressor=CompressorSpec.identity(), aggregator=AggregatorSpec("mean"),
    )
    sim = Simulation(cfg, shards_for(cfg, small_data))
    ref = reference_sgd([sim.problem(i) for i in range(cfg.n)], cfg.seed, cfg.gamma, cfg.T)
    for t in range(cfg.T):
        sim.step()
        assert np.array_equal(sim.x, ref[t])


def test_variants_coincide_at_eta_one(small_data):
    runs = {}
    for v in Variant:
        cfg = small_config(variant=v, eta=1.0)
        sim = Simulation(cfg, shards_for(cfg, small_data))
        for _ in range(15):
            sim.step()
        runs[v] = sim.x
    assert np.allclose(runs[Variant.DM21], runs[Variant.VRDM21], rtol=0, atol=1e-12)
    assert np.array_equal(runs[Variant.DM21], runs[Variant.EF21SGDM])


def test_mean_no_attack_is_mean_of_table(small_data):
    cfg = small_config(aggregator=AggregatorSpec("mean", byz=2), compressor=CompressorSpec.topk(3))
    sim = Simulation(cfg, shards_for(cfg, small_data))
    for _ in range(5):
        sim.step()
        assert np.array_equal(sim.g, sim.g_table.mean(axis=0))


def test_no_attack_byzantine_slots_are_honest(small_data):
    # with no attack the B extra slots follow the protocol, so a B=2 run equals a B=0 run
    a = small_config(aggregator=AggregatorSpec("mean", byz=2))
    b = replace(a, B=0, aggregator=AggregatorSpec("mean"))
    shards = shards_for(a, small_data)
    sa, sb = Simulation(a, shards), Simulation(b, shards)
    for _ in range(10):
        sa.step()
        sb.step()
    assert np.array_equal(sa.x, sb.x)


def test_zero_step_size_freezes_model(small_data):
    cfg = small_config(gamma=0.0, T=10)
    series = engine.run(cfg, shards_for(cfg, small_data))
    losses = series.column("loss")
    assert np.all(losses == losses[0])


def test_record_grid_and_bytes(small_data):
    cfg = small_config(T=1)
    series = engine.run(cfg, shards_for(cfg, small_data))
    assert [r.t for r in series.records] == [0, 1]
    cfg = small_config(T=12, compressor=CompressorSpec.topk(2))
    series = engine.run(cfg, shards_for(cfg, small_data))
    b = series.column("bytes_up")
    assert np.all(np.diff(b) > 0)
    assert b[0] == cfg.G * 8 * small_data.d
    assert b[-1] == b[0] + 12 * cfg.G * 12 * 2


def test_log_every_keeps_last_round(small_data):
    cfg = small_config(T=25, log_every=10)
    series = engine.run(cfg, shards_for(cfg, small_data))
    assert [r.t for r in series.records] == [0, 10, 20, 25]
    assert series.xhat_grad_norm_sq is not None and 0 <= series.xhat_t <= 25


def test_identical_shards_zero_heterogeneity(small_data):
    part = small_data.subset(np.arange(30))
    cfg = small_config(B=0, aggregator=AggregatorSpec("mean"), T=5)
    series = engine.run(cfg, [part] * cfg.n)
    # zero up to the round-off of averaging identical vectors
    assert np.all(series.column("het_hat") <= 1e-12 * series.column("grad_norm_sq"))


def test_metrics_nonnegative_and_finite(small_data):
    cfg = small_config(attack=AttackSpec("alie"), wire_variance=True)
    series = engine.run(cfg, shards_for(cfg, small_data))
    for col in ("loss", "grad_norm_sq", "msg_variance", "momentum_dev", "het_hat", "msg_variance_c"):
        c = series.column(col)
        assert np.all(np.isfinite(c)) and np.all(c >= 0)


def test_label_flip_poisons_byzantine_shards(small_data):
    cfg = small_config(attack=AttackSpec("lf"))
    shards = shards_for(cfg, small_data)
    sim = Simulation(cfg, shards)
    for i in range(cfg.n):
        sign = -1.0 if i >= cfg.G else 1.0
        assert np.array_equal(sim.shards[i].labels, sign * shards[i].labels)


def test_runs_repeat_exactly(small_data):
    cfg = small_config(compressor=CompressorSpec.randk(2), attack=AttackSpec("ipm"))
    a, b = io.BytesIO(), io.BytesIO()
    emit_csv(engine.run(cfg, small_data), a)
    emit_csv(engine.run(cfg, small_data), b)
    assert a.getvalue() == b.getvalue()


def test_invalid_configs(small_data):
    shards = shards_for(small_config(), small_data)
    for bad in (dict(eta=0.0), dict(eta=1.5), dict(B=3), dict(T=0), dict(gamma=-1.0), dict(gamma=math.inf)):
        with pytest.raises(ConfigError):
            Simulation(small_config(**bad), shards)
    with pytest.raises(ConfigError):
        Simulation(small_config(), shards[:-1])


def test_topk_mean_run_approaches_optimum():
    data = synth_logreg(2000, 50, 1.0, derive_stream(0, 0, 0, Purpose.SYNTH))
    cfg = RunConfig(B=0, aggregator=AggregatorSpec("mean"), T=2000, log_every=500)
    series = engine.run(cfg, data)
    probs = [LogRegProblem.default(s) for s in engine.make_shards(cfg, data)]
    x = np.zeros(50)
    for _ in range(3000):
        x -= 1.0 * np.mean([full_grad(p, x) for p in probs], axis=0)
    f_star = np.mean([loss(p, x) for p in probs])
    f0, fT = series.records[0].loss, series.final.loss
    assert (fT - f_star) <= 0.1 * (f0 - f_star)
    assert fT <= 1.05 * f_star
