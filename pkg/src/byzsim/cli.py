"""Command-line runner: flat key=value experiment files, single runs, seed sweeps, self-checks.

Exit codes: 0 success, 1 failed self-check, 2 configuration error, 3 IO error.
"""
import argparse
import math
import os
import shlex
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from byzsim import engine
from byzsim.aggregate import AggregatorSpec
from byzsim.attack import AttackSpec
from byzsim.compress import CompressorSpec
from byzsim.core import Purpose, derive_stream
from byzsim.data import load_libsvm, synth_logreg
from byzsim.errors import ConfigError, ParseError
from byzsim.metrics import emit_csv, emit_summary_csv

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3
GAMMA_GRID = (0.5, 0.05, 0.005)


def _int(v):
    return int(v)


def _float(v):
    out = float(v)
    if not math.isfinite(out):
        raise ValueError("not finite")
    return out


def _bool(v):
    low = v.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _opt(conv):
    return lambda v: None if v.lower() == "auto" else conv(v)


def _seeds(v):
    out = [int(s) for s in v.split(",") if s.strip()]
    if not out:
        raise ValueError("empty seed list")
    return out


def _gamma(v):
    return GAMMA_GRID if v.lower() == "grid" else (_float(v),)


KEYS = {
    "variant": str,
    "gamma": _gamma,
    "eta": _float,
    "T": _int,
    "n": _int,
    "B": _int,
    "compressor": str,
    "k": _opt(_int),
    "randk_scaled": _bool,
    "aggregator": str,
    "nnm": _bool,
    "agg_byz": _opt(_int),
    "cwtm_trim": _opt(_int),
    "rfa_steps": _int,
    "rfa_smoothing": _float,
    "attack": str,
    "attack_z": _opt(_float),
    "seed": _int,
    "seeds": _seeds,
    "init_batch": _int,
    "lam": _opt(_float),
    "partition": str,
    "log_every": _int,
    "wire_variance": _bool,
    "data_path": str,
    "data_dim": _int,
    "data_gzip": _opt(_bool),
    "synth_m": _int,
    "synth_d": _int,
    "synth_separation": _float,
    "synth_seed": _int,
    "output_dir": str,
}

DEFAULTS = {
    "variant": "dm21",
    "gamma": (0.05,),
    "eta": 0.1,
    "T": 1000,
    "n": 20,
    "B": 8,
    "compressor": "topk",
    "k": None,
    "randk_scaled": False,
    "aggregator": "cm",
    "nnm": True,
    "agg_byz": None,
    "cwtm_trim": None,
    "rfa_steps": 8,
    "rfa_smoothing": 1e-6,
    "attack": "none",
    "attack_z": None,
    "seed": 0,
    "seeds": None,
    "init_batch": 1,
    "lam": None,
    "partition": "label_sorted",
    "log_every": 1,
    "wire_variance": False,
    "data_path": None,
    "data_dim": None,
    "data_gzip": None,
    "synth_m": 4000,
    "synth_d": 50,
    "synth_separation": 1.0,
    "synth_seed": 0,
    "output_dir": "byzsim_out",
}


@dataclass
class IOSettings:
    output_dir: Path
    seeds: list
    gammas: tuple
    data_path: str | None = None
    data_dim: int | None = None
    data_gzip: bool | None = None
    synth: dict = field(default_factory=dict)

    def load_data(self):
        if self.data_path is not None:
            return load_libsvm(self.data_path, self.data_dim, self.data_gzip)
        s = self.synth
        rng = derive_stream(s["seed"], 0, 0, Purpose.SYNTH)
        return synth_logreg(s["m"], s["d"], s["separation"], rng)


def _pairs(text):
    try:
        lines = text.splitlines()
    except AttributeError:
        raise ConfigError("config must be text") from None
    for lineno, line in enumerate(lines, 1):
        try:
            tokens = shlex.split(line, comments=True)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
        for tok in tokens:
            key, sep, value = tok.partition("=")
            if not sep or not key:
                raise ConfigError(f"line {lineno}: expected key=value, got {tok!r}")
            yield lineno, key.strip(), value.strip()


def parse_config(text):
    """Parse a flat ``key=value`` experiment file into ``(RunConfig, IOSettings)``.

    ``#`` starts a comment; several pairs may share a line; values with
    spaces can be quoted.
    """
    raw = {}
    for lineno, key, value in _pairs(text):
        if key not in KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            raw[key] = KEYS[key](value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {value!r} ({exc})") from None
    opts = {**DEFAULTS, **raw}

    if any(not g > 0 for g in opts["gamma"]):
        raise ConfigError("gamma must be > 0")
    if opts["data_path"] is not None and opts["data_dim"] is None:
        raise ConfigError("data_path needs data_dim")
    if opts["data_path"] is None and (opts["synth_m"] < 1 or opts["synth_d"] < 1):
        raise ConfigError("synth_m and synth_d must be >= 1")
    if opts["synth_separation"] < 0:
        raise ConfigError("synth_separation must be >= 0")

    comp_kind, k = opts["compressor"], opts["k"]
    if comp_kind == "identity":
        comp = CompressorSpec.identity()
    elif comp_kind == "topk":
        comp = None if k is None else CompressorSpec.topk(k)
    elif comp_kind == "randk":
        if k is None:
            d = opts["data_dim"] if opts["data_path"] is not None else opts["synth_d"]
            k = math.ceil(0.1 * d)
        comp = CompressorSpec.randk(k, scaled=opts["randk_scaled"])
    else:
        raise ConfigError(f"unknown compressor {comp_kind!r}")

    try:
        agg = AggregatorSpec(
            opts["aggregator"],
            nnm=opts["nnm"],
            byz=opts["B"] if opts["agg_byz"] is None else opts["agg_byz"],
            trim=opts["cwtm_trim"],
            rfa_steps=opts["rfa_steps"],
            rfa_smoothing=opts["rfa_smoothing"],
        )
        config = engine.RunConfig(
            variant=opts["variant"],
            gamma=opts["gamma"][0],
            eta=opts["eta"],
            T=opts["T"],
            n=opts["n"],
            B=opts["B"],
            compressor=comp,
            aggregator=agg,
            attack=AttackSpec(opts["attack"], opts["attack_z"]),
            seed=opts["seed"],
            init_batch=opts["init_batch"],
            lam=opts["lam"],
            partition=opts["partition"],
            log_every=opts["log_every"],
            wire_variance=opts["wire_variance"],
        ).validate()
    except ConfigError:
        raise
    except ValueError as exc:  # enum lookups
        raise ConfigError(str(exc)) from None
    if opts["data_path"] is None:
        config.compressor_for(opts["synth_d"])
        if opts["synth_m"] < config.n:
            raise ConfigError(f"synth_m={opts['synth_m']} is smaller than n={config.n}")

    io = IOSettings(
        output_dir=Path(opts["output_dir"]),
        seeds=opts["seeds"] or [opts["seed"]],
        gammas=opts["gamma"],
        data_path=opts["data_path"],
        data_dim=opts["data_dim"],
        data_gzip=opts["data_gzip"],
        synth={"m": opts["synth_m"], "d": opts["synth_d"], "separation": opts["synth_separation"], "seed": opts["synth_seed"]},
    )
    return config, io


def thread_cap():
    value = os.environ.get("BYZSIM_THREADS")
    if value is None or value == "":
        return os.cpu_count() or 1
    try:
        cap = int(value)
    except ValueError:
        raise ConfigError(f"BYZSIM_THREADS must be a positive integer, got {value!r}") from None
    if cap < 1:
        raise ConfigError(f"BYZSIM_THREADS must be a positive integer, got {value!r}")
    return cap


def _prefix(io, gamma):
    return f"gamma{gamma!r}_" if len(io.gammas) > 1 else ""


def run_seeds(config, io, data, seeds, summary, out=None):
    """Run every (gamma, seed) pair and write CSVs; returns the written paths."""
    out = out or sys.stdout
    io.output_dir.mkdir(parents=True, exist_ok=True)
    shards = {}
    jobs = []
    for gamma in io.gammas:
        for seed in seeds:
            cfg = replace(config, gamma=gamma, seed=int(seed))
            if seed not in shards:
                shards[seed] = engine.make_shards(cfg, data)
            jobs.append((gamma, seed, cfg))

    def work(job):
        gamma, seed, cfg = job
        return engine.Simulation(cfg, shards[seed]).run()

    workers = min(thread_cap(), len(jobs))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, jobs))
    else:
        results = [work(j) for j in jobs]

    written = []
    for (gamma, seed, _), series in zip(jobs, results):
        path = io.output_dir / f"{_prefix(io, gamma)}seed{seed}.csv"
        with open(path, "wb") as fh:
            emit_csv(series, fh)
        written.append(path)
        fin = series.final
        print(
            f"gamma={gamma!r} seed={seed} t={fin.t} loss={fin.loss:.6g} grad_norm_sq={fin.grad_norm_sq:.6g} "
            f"xhat_t={series.xhat_t} xhat_grad_norm_sq={series.xhat_grad_norm_sq:.6g} -> {path}",
            file=out,
        )
    if summary:
        for gamma in io.gammas:
            group = [s for (g, _, _), s in zip(jobs, results) if g == gamma]
            path = io.output_dir / f"{_prefix(io, gamma)}summary.csv"
            with open(path, "w", encoding="ascii", newline="") as fh:
                emit_summary_csv(group, fh)
            written.append(path)
            print(f"gamma={gamma!r} summary over {len(group)} seeds -> {path}", file=out)
    return written


def run_sweep(config, io, seeds):
    """One CSV per seed plus a mean/stderr companion. Returns an exit status."""
    if not seeds:
        raise ConfigError("a sweep needs at least one seed")
    data = io.load_data()
    run_seeds(config, io, data, seeds, summary=True)
    return EXIT_OK


def _read_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def _cmd_run(args):
    config, io = _read_config(args.config)
    seeds = args.seed or io.seeds
    data = io.load_data()
    run_seeds(config, io, data, seeds, summary=False)
    return EXIT_OK


def _cmd_sweep(args):
    config, io = _read_config(args.config)
    seeds = io.seeds
    if args.seeds is not None:
        try:
            seeds = _seeds(args.seeds)
        except ValueError as exc:
            raise ConfigError(f"bad --seeds: {exc}") from None
    return run_sweep(config, io, seeds)


def _cmd_verify(args):
    from byzsim.verify import run_checks

    ok = True
    for c in run_checks():
        ok &= bool(c.passed)
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name} ({c.seconds:.2f}s): {c.detail}")
    return EXIT_OK if ok else EXIT_CHECK


def build_parser():
    parser = argparse.ArgumentParser(prog="byzsim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run one or more seeds, one CSV each")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, action="append", help="repeatable; overrides the config seeds")
    p.set_defaults(func=_cmd_run)
    p = sub.add_parser("sweep", help="run several seeds and write a mean/stderr summary")
    p.add_argument("--config", required=True)
    p.add_argument("--seeds", help="comma-separated, e.g. 1,2,3")
    p.set_defaults(func=_cmd_sweep)
    p = sub.add_parser("verify", help="run the oracle self-checks")
    p.set_defaults(func=_cmd_verify)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"byzsim: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ParseError) as exc:
        print(f"byzsim: IO error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
