"""Command-line entry point: ``randwave <subcommand> ...``.

Exit codes: 0 ok, 2 configuration error, 3 numerical failure, 4 acceptance failure.
"""
import argparse
import configparser
import hashlib
import json
import math
import os
from pathlib import Path
import sys
import warnings

import numpy as np

from . import __version__, _accel, _parallel
from .errors import ConfigError, RandwaveError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_ACCEPTANCE = 0, 2, 3, 4


# ---------------------------------------------------------------- artifacts

def _default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not serializable: {type(o)}")


def dumps(obj):
    return json.dumps(obj, sort_keys=True, indent=2, default=_default) + "\n"


def provenance(config, seed):
    """(config hash, master seed, code version) block embedded in every artifact."""
    blob = json.dumps(config, sort_keys=True, default=_default).encode()
    return {"config": config, "config_hash": hashlib.sha256(blob).hexdigest(), "seed": int(seed),
            "code_version": __version__}


def _out_path(args, name):
    p = Path(name)
    if not p.is_absolute():
        p = Path(args.out_dir) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _write_text(args, name, text):
    path = _out_path(args, name)
    path.write_text(text)
    return path


def _read_field(path):
    from .grid import read_field
    if not Path(path).is_file():
        raise ConfigError(f"input field {path} does not exist")
    return read_field(path)


def _config_of(args, skip=("func", "out_dir", "threads")):
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


# ---------------------------------------------------------------- subcommands

def cmd_exponents(args):
    from .exponents import derive_exponents, exponents_json
    es = derive_exponents(args.dim, args.p, args.a_fraction)
    data = exponents_json(es)
    if args.csv:
        keys = list(data)
        sys.stdout.write(",".join(keys) + "\n" + ",".join(repr(data[k]) for k in keys) + "\n")
    else:
        sys.stdout.write(dumps(data))
    return EXIT_OK


def _times_arg(text):
    """``a:b:n`` -> n geometric times from a to b."""
    try:
        a, b, n = text.split(":")
        return np.geomspace(float(a), float(b), int(n))
    except ValueError as exc:
        raise ConfigError(f"--times expects start:stop:count, got {text!r}") from exc


def cmd_evolve(args):
    from .grid import Grid, parse_profile, sample_profile, write_field
    from .propagator import dispersive_decay_fit, evolve
    if args.infile:
        f = _read_field(args.infile)
    else:
        kind, params = parse_profile(args.profile)
        f = sample_profile(Grid(args.dim, args.N, args.L), kind, **params)
    prov = provenance(_config_of(args), args.seed)
    if args.decay_r is not None:
        fit = dispersive_decay_fit(f, args.decay_r, _times_arg(args.times))
        _write_text(args, args.csv, fit.csv())
        _write_text(args, args.report, dumps({**fit.summary(), "provenance": prov}))
    if args.out:
        with warnings.catch_warnings(record=True):
            warnings.simplefilter("always")
            g = evolve(f, args.t, args.backend)
        write_field(g, _out_path(args, args.out), {"provenance": prov})
    return EXIT_OK


def cmd_stnorm(args):
    from .spacetime import TimeGrid, spacetime_norm
    f = _read_field(args.infile)
    res = spacetime_norm(f, args.q, args.r, TimeGrid(args.T, args.Tmax, args.M))
    data = res.as_json()
    sys.stdout.write(dumps(data))
    if args.out:
        _write_text(args, args.out, dumps({**data, "provenance": provenance(_config_of(args), args.seed)}))
    return EXIT_OK


def cmd_randomize(args):
    from .grid import write_field
    from .randomizer import Ensemble, build_partition, randomize
    f = _read_field(args.infile)
    seed = args.seed if args.ens_seed is None else args.ens_seed
    g = randomize(f, build_partition(f.grid), Ensemble(args.ensemble, seed), args.trial)
    write_field(g, _out_path(args, args.out), {"provenance": provenance(_config_of(args), seed)})
    return EXIT_OK


def cmd_waveop(args):
    from .waveop import SolverConfig, crossvalidate, picard_solve
    phi = _read_field(args.final_state)
    cfg = SolverConfig(d=phi.grid.d, p=args.p, mu=args.mu, T=args.T, T_max=args.Tmax, M=args.M,
                       max_iter=args.max_iter, delta_fix=args.delta_fix)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        traj, rep = picard_solve(phi, cfg)
        if args.crossval:
            rep.crossval_discrepancy = crossvalidate(traj, cfg)
    data = rep.as_json()
    data["warnings"] = sorted({str(w.message) for w in caught})
    data["provenance"] = provenance(_config_of(args), args.seed)
    _write_text(args, args.report, dumps(data))
    return EXIT_OK if rep.converged else EXIT_NUMERICAL


# ---------------------------------------------------------------- montecarlo

MC_DEFAULTS = {
    "dim": "1", "p": "3", "N": "1024", "L": "40", "profile": "gaussian", "ensemble": "gaussian",
    "normalize": "true", "trials": "", "T_grid": "1,4,16", "eta_grid": "", "M_grid": "", "rho": "3",
    "alphas": "2,4,6", "coefficients": "", "horizon": "1000", "M": "64", "quantiles": "0.5,0.75,0.9,0.95",
}


def read_config(path):
    """Line-based ``key = value`` file; an optional ``[section]`` header is ignored."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    text = path.read_text()
    if not text.lstrip().startswith("["):
        text = "[experiment]\n" + text
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    out = dict(MC_DEFAULTS)
    for section in cp.sections():
        for key, val in cp.items(section):
            if key not in MC_DEFAULTS and key != "seed":
                raise ConfigError(f"{path}: unknown key {key!r}")
            out[key] = val.strip()
    return out


def _floats(text, key):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"config key {key}: expected comma-separated numbers, got {text!r}") from exc


def _num(conf, key, kind=float):
    try:
        return kind(conf[key])
    except ValueError as exc:
        raise ConfigError(f"config key {key}: cannot parse {conf[key]!r}") from exc


def cmd_montecarlo(args):
    from .exponents import derive_exponents
    from .grid import Grid, parse_profile, sample_profile
    from . import montecarlo as mc
    from .randomizer import Ensemble, build_partition

    conf = read_config(args.config) if args.config else dict(MC_DEFAULTS)
    seed = int(conf.get("seed", args.seed))
    ens = Ensemble(conf["ensemble"], seed)
    trials = conf["trials"]
    if args.kind in ("moments", "scalar-tail"):
        c = _floats(conf["coefficients"], "coefficients") or [1.0]
        n = int(trials) if trials else 100_000
        if args.kind == "moments":
            ratios = mc.moment_check(ens, c, _floats(conf["alphas"], "alphas"), n)
            data = {"kind": "moments", "ratios": {repr(k): v for k, v in ratios.items()}}
            csv = "alpha,ratio\n" + "".join(f"{k!r},{v!r}\n" for k, v in ratios.items())
        else:
            eta = _floats(conf["eta_grid"], "eta_grid") or [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0]
            rep = mc.scalar_tail_check(ens, c, eta, n)
            data, csv = rep.to_json(), rep.to_csv()
    else:
        d = _num(conf, "dim", int)
        kind, params = parse_profile(conf["profile"])
        grid = Grid(d, _num(conf, "N", int), _num(conf, "L"))
        f = sample_profile(grid, kind, **params)
        pou = build_partition(grid)
        if args.kind == "linear-tail":
            if conf["normalize"].lower() in ("1", "true", "yes"):
                f = f * (1 / math.sqrt(float(np.sum(np.abs(f.values) ** 2)) * grid.cell))
            rep = mc.linear_tail_experiment(
                f, pou, ens, derive_exponents(d, _num(conf, "p")),
                eta_grid=_floats(conf["eta_grid"], "eta_grid") or None,
                T_grid=_floats(conf["T_grid"], "T_grid"), trials=int(trials) if trials else 500,
                horizon=_num(conf, "horizon"), M=_num(conf, "M", int),
                quantiles=tuple(_floats(conf["quantiles"], "quantiles")))
        else:
            rep = mc.flr_tail_experiment(f, pou, ens, _num(conf, "rho"),
                                         M_grid=_floats(conf["M_grid"], "M_grid") or None,
                                         trials=int(trials) if trials else 1000,
                                         quantiles=tuple(_floats(conf["quantiles"], "quantiles")))
        data, csv = rep.to_json(), rep.to_csv()
    data["provenance"] = provenance({"kind": args.kind, **conf}, seed)
    _write_text(args, args.out, dumps(data))
    if args.csv:
        _write_text(args, args.csv, csv)
    return EXIT_OK


# ---------------------------------------------------------------- reproduce

def cmd_reproduce(args):
    from .acceptance import run_acceptance
    only = [n for item in (args.only or []) for n in item.split(",") if n]

    def log(name, passed, seconds, threads):
        sys.stderr.write(f"  {name:<16} {'PASS' if passed else 'FAIL'}  {seconds:7.1f}s  (threads={threads})\n")

    results = run_acceptance(only or None, seed=args.seed, threads=args.threads, log=log)
    failed = [n for n, r in results.items() if not r["passed"]]
    summary = {"criteria": results, "failed": failed, "passed": not failed,
               "provenance": provenance({"only": only}, args.seed)}
    _write_text(args, args.report, dumps(summary))
    for name, r in results.items():
        sys.stdout.write(f"{'PASS' if r['passed'] else 'FAIL'}  {name}\n")
    if failed:
        sys.stdout.write(f"failed: {', '.join(failed)}\n")
        return EXIT_ACCEPTANCE
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _mu(text):
    try:
        v = int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"mu must be +1 or -1, got {text!r}") from exc
    if v not in (1, -1):
        raise argparse.ArgumentTypeError(f"mu must be +1 or -1, got {text!r}")
    return v


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_CONFIG)


def build_parser():
    ap = _Parser(prog="randwave", description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0, help="master seed for all randomness")
    ap.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker threads")
    ap.add_argument("--out-dir", default=".", help="directory for relative output paths")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("exponents", help="derived exponent set for (d, p)")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--a-fraction", type=float, default=0.5)
    fmt = p.add_mutually_exclusive_group()
    fmt.add_argument("--json", action="store_true", help="JSON output (default)")
    fmt.add_argument("--csv", action="store_true")
    p.set_defaults(func=cmd_exponents)

    p = sub.add_parser("evolve", help="free Schrodinger flow of a profile or snapshot")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--profile", default="gaussian", help="e.g. gaussian:width=1,amplitude=0.5")
    src.add_argument("--in", dest="infile")
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--N", type=int, default=1024)
    p.add_argument("--L", type=float, default=40.0)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--backend", choices=("auto", "periodic", "fresnel"), default="auto")
    p.add_argument("--out", help="field snapshot to write")
    p.add_argument("--decay-r", type=float, help="also fit the L^r decay rate")
    p.add_argument("--times", default="10:1000:16", help="decay-fit times start:stop:count")
    p.add_argument("--csv", default="decay.csv")
    p.add_argument("--report", default="decay.json")
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("stnorm", help="L^q_t L^r_x norm of the free flow on (T, inf)")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--Tmax", type=float, default=1000.0)
    p.add_argument("--M", type=int, default=64)
    p.add_argument("--json", action="store_true", help="JSON on stdout (default)")
    p.add_argument("--out", help="also write the JSON with provenance")
    p.set_defaults(func=cmd_stnorm)

    p = sub.add_parser("randomize", help="physical-space randomization of a snapshot")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--ensemble", choices=("gaussian", "rademacher", "uniform", "ones"), default="gaussian")
    p.add_argument("--seed", dest="ens_seed", type=int, help="ensemble seed (defaults to the master seed)")
    p.add_argument("--trial", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_randomize)

    p = sub.add_parser("waveop", help="Picard solution scattering to a final state")
    p.add_argument("--final-state", required=True)
    p.add_argument("--mu", type=_mu, default=1)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--Tmax", type=float, default=1000.0)
    p.add_argument("--M", type=int, default=64)
    p.add_argument("--max-iter", type=int, default=10)
    p.add_argument("--delta-fix", type=float, default=1e-8)
    p.add_argument("--crossval", action="store_true", help="split-step cross-check near T")
    p.add_argument("--report", default="report.json")
    p.set_defaults(func=cmd_waveop)

    p = sub.add_parser("montecarlo", help="ensemble tail experiments")
    p.add_argument("kind", choices=("linear-tail", "flr-tail", "moments", "scalar-tail"))
    p.add_argument("--config", help="key = value experiment file")
    p.add_argument("--out", default="report.json")
    p.add_argument("--csv", help="CSV surface to write")
    p.set_defaults(func=cmd_montecarlo)

    p = sub.add_parser("reproduce", help="run the acceptance suite")
    p.add_argument("--only", action="append", help="criterion name(s), comma separated; repeatable")
    p.add_argument("--report", default="acceptance.json")
    p.set_defaults(func=cmd_reproduce)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    _parallel.set_threads(args.threads)
    _accel.set_threads(args.threads)
    try:
        return args.func(args)
    except RandwaveError as exc:
        sys.stderr.write(f"randwave: {type(exc).__name__}: {exc}\n")
        return exc.exit_code
    except OSError as exc:
        sys.stderr.write(f"randwave: {exc}\n")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
