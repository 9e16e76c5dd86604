"""Command-line experiment runner.

Every run writes into ``<out>/<UTC timestamp>-<hash>/`` where the hash covers
the resolved configuration, the master seed and the subcommand:

    manifest.json   full config, spec, master seed, tool version, argv
    summary.json    headline numbers of the experiment
    modes.csv       mode_label, lambda, mu, sigma, stationary_variance
    ...             experiment-specific CSVs and path dumps

Exit status: 0 success, 1 invalid configuration, 2 regime violation under
--strict, 3 numerical blow-up.
"""

import argparse
import csv
import datetime
import hashlib
import json
import math
import os
import sys
import warnings

import numpy as np

from . import __version__
from . import rng as _rng
from .config import PRESETS, ConfigError, initial_state, load_config
from .ensemble import BlowUpError
from .ergodics import mixing_test, relaxation_time, stationary_stats, write_ergodics_csv
from .experiments import growth_audit, twin_study
from .girsanov import FORWARD, HeavyTailWarning, direct_estimate, importance_estimate, normalization_check
from .linsim import simulate_path, write_path_csv, write_paths_binary
from .regimes import check_ks, check_ns
from .spectral import build_spectrum, fmt, gaussian_dofs

COMMANDS = ("check-regime", "simulate-linear", "simulate-nonlinear", "girsanov-normalization",
            "girsanov-importance", "twin-path", "ergodics", "growth-audit")


def regime_report(spec, series=True):
    if spec.kind == "KS":
        return check_ks(spec.gamma, spec.theta, spec=spec, series=series)
    return check_ns(spec.alpha, spec.gamma, spec.theta, spec.d, spec=spec, series=series)


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _finite(o):
    # JSON has no inf/nan; write them as strings
    if isinstance(o, float) and not math.isfinite(o):
        return str(o)
    if isinstance(o, dict):
        return {k: _finite(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_finite(v) for v in o]
    return o


def write_json(path, obj):
    obj = json.loads(json.dumps(obj, default=_jsonable))
    with open(path, "w", newline="\n") as fh:
        json.dump(_finite(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])


def write_girsanov_csv(path, ens):
    rows = ((i, float(v), float(np.exp(v)), float(q), int(t))
            for i, (v, q, t) in enumerate(zip(ens.V, ens.Q, ens.truncated)))
    write_rows(path, ["path_id", "V", "density", "Q_T", "truncated_flag"], rows)


def run_directory(out, cfg, seed, command):
    h = hashlib.sha256(f"{cfg.to_json()}|{seed}|{command}".encode()).hexdigest()[:12]
    stamp = datetime.datetime.now(datetime.timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    base = os.path.join(out, f"{stamp}-{h}")
    path, k = base, 1
    while os.path.exists(path):
        path, k = f"{base}-{k}", k + 1
    os.makedirs(path)
    return path


# ---------------------------------------------------------------------------
# subcommands: each returns the summary dict


def cmd_check_regime(cfg, spec, seed, rundir, threads):
    report = regime_report(spec)
    print(report.table())
    write_json(os.path.join(rundir, "regime.json"), report.to_dict())
    return {"regime": report.to_dict()}


def _simulate(cfg, spec, seed, rundir, nonlinear):
    run = cfg["run"]
    x = initial_state(spec, run["x"], seed)
    if isinstance(x, str):
        # per-path invariant draws are an ensemble notion; one path uses one draw
        x = initial_state(spec, "sample", seed)
    recs = [simulate_path(spec, x, run["T"], run["dt"], seed, nonlinear=nonlinear,
                          generator=_rng.stream(seed, i)) for i in range(run["paths"])]
    write_path_csv(recs[0], os.path.join(rundir, "path_0.csv"))
    write_paths_binary(recs, os.path.join(rundir, "paths.bin"))
    theta = spec.theta
    lam = build_spectrum(spec).lam
    return {
        "kind": recs[0].kind,
        "paths": len(recs),
        "steps": len(recs[0].times) - 1,
        "terminal_norm_theta": [float(np.sqrt(np.sum(lam ** (2 * theta) * r.states[-1] ** 2))) for r in recs],
        "increment_hash": [r.increment_hash() for r in recs],
    }


def cmd_simulate_linear(cfg, spec, seed, rundir, threads):
    return _simulate(cfg, spec, seed, rundir, nonlinear=False)


def cmd_simulate_nonlinear(cfg, spec, seed, rundir, threads):
    return _simulate(cfg, spec, seed, rundir, nonlinear=True)


def _N(run):
    return None if run["N"] == "pilot" else float(run["N"])


def cmd_girsanov_normalization(cfg, spec, seed, rundir, threads):
    run = cfg["run"]
    res = normalization_check(spec, run["T"], run["dt"], run["M"], _N(run), seed,
                              initial_state(spec, run["x"], seed), sign=FORWARD,
                              chunk=run["chunk"], threads=threads)
    write_girsanov_csv(os.path.join(rundir, "girsanov.csv"), res.ensemble)
    return {
        "mean": res.mean,
        "se": res.se,
        "zscore": res.zscore(),
        "ess": res.ess,
        "ess_fraction": res.ess / res.M,
        "truncation_frequency": res.truncation_frequency,
        "N": res.N,
        "N_rule": "pilot 99th percentile of Q_T" if run["N"] == "pilot" else "configured",
        "M": res.M,
    }


def cmd_girsanov_importance(cfg, spec, seed, rundir, threads):
    run = cfg["run"]
    x = initial_state(spec, run["x"], seed)
    est, ens, N = importance_estimate(spec, run["observables"], run["T"], run["dt"], run["M"], _N(run),
                                      seed, x, chunk=run["chunk"], threads=threads, return_ensemble=True)
    dseed = (seed + 1) % (_rng.MAX_SEED + 1)
    direct = direct_estimate(spec, run["observables"], run["T"], run["dt"], run["M"], dseed, x,
                             chunk=run["chunk"], threads=threads)
    write_girsanov_csv(os.path.join(rundir, "girsanov.csv"), ens)
    out = {"N": N, "M": run["M"], "direct_seed": dseed, "estimates": {}}
    for e in est:
        dm, dse = direct[e.observable]
        out["estimates"][e.observable] = {
            "unnormalized": e.unnormalized, "unnormalized_se": e.unnormalized_se,
            "self_normalized": e.self_normalized, "self_normalized_se": e.self_normalized_se,
            "plain_linear": e.plain, "plain_linear_se": e.plain_se,
            "direct_nonlinear": dm, "direct_nonlinear_se": dse,
            "ess": e.ess,
        }
    return out


def cmd_twin_path(cfg, spec, seed, rundir, threads):
    tw = cfg["twin"]
    st = twin_study(spec, tw["T"], tw["dt"], seed, tw["beta"], tw["deltas"], tw["calibration"],
                    tw["trials"], tw["safety"], tw["index"])
    write_rows(os.path.join(rundir, "twin.csv"), ["t", "divergence", "budget"], st.example.to_csv_rows())
    return st.summary()


def cmd_ergodics(cfg, spec, seed, rundir, threads):
    er = cfg["ergodics"]
    samples = gaussian_dofs(spec, _rng.stream(seed, 0, "field"), er["samples"])
    st = stationary_stats(spec, samples)
    tau = relaxation_time(spec)
    t = er["t_factor"] * tau
    x = initial_state(spec, er["x"], seed)
    mix = mixing_test(spec, x, t, er["mixing_M"], seed, threads=threads)
    write_ergodics_csv(os.path.join(rundir, "ergodics.csv"), st, mix)
    return {
        "samples": er["samples"],
        "max_abs_zscore": float(np.max(np.abs(st.zscore))),
        "flagged_modes": [st.labels[i] for i in st.flagged],
        "relaxation_time": tau,
        "mixing_time": t,
        "mixing_M": er["mixing_M"],
        "ks_max": float(np.max(mix.statistic)),
        "ks_critical": mix.critical,
        "mixing_passed": mix.passed,
    }


def cmd_growth_audit(cfg, spec, seed, rundir, threads):
    g = cfg["growth"]
    return growth_audit(spec, g["samples"], seed, g["beta"])


HANDLERS = {
    "check-regime": cmd_check_regime,
    "simulate-linear": cmd_simulate_linear,
    "simulate-nonlinear": cmd_simulate_nonlinear,
    "girsanov-normalization": cmd_girsanov_normalization,
    "girsanov-importance": cmd_girsanov_importance,
    "twin-path": cmd_twin_path,
    "ergodics": cmd_ergodics,
    "growth-audit": cmd_growth_audit,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", default=argparse.SUPPRESS, help="TOML config file")
    common.add_argument("--preset", choices=sorted(PRESETS), default=argparse.SUPPRESS)
    common.add_argument("--set", metavar="SECTION.KEY=VALUE", action="append", default=argparse.SUPPRESS,
                        help="override one config value (repeatable)")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed (unsigned 64-bit)")
    common.add_argument("--out", metavar="DIR", default=argparse.SUPPRESS, help="output root (default runs/)")
    common.add_argument("--strict", action="store_true", default=argparse.SUPPRESS,
                        help="treat regime violations as fatal")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="ensemble parallelism")
    p = argparse.ArgumentParser(prog="girsanovlab", parents=[common], description=__doc__.split("\n")[0])
    p.add_argument("--print-defaults", action="store_true", help="print the resolved config as TOML and exit")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")
    for c in COMMANDS:
        sub.add_parser(c, parents=[common], help=HANDLERS[c].__name__.replace("cmd_", "").replace("_", " "))
    return p


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    opt = vars(args)
    try:
        cfg = load_config(opt.get("config"), opt.get("preset"))
        if opt.get("set"):
            cfg = cfg.with_overrides(opt["set"])
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"config: {exc}", file=sys.stderr)
        return 1
    if args.print_defaults:
        sys.stdout.write(cfg.to_toml())
        return 0
    if not args.command:
        build_parser().print_usage(sys.stderr)
        return 1
    try:
        seed = _rng.check_seed(opt.get("seed", 0))
    except ValueError as exc:
        print(f"--seed: {exc}", file=sys.stderr)
        return 1
    threads = max(1, opt.get("threads", 1))
    strict = opt.get("strict", False)
    spec = cfg.spec

    report = regime_report(spec, series=False)
    if not report.passed:
        failed = ", ".join(c.text for c in report.conditions if not c.passed)
        print(f"warning: parameters outside the admissible regime ({failed})", file=sys.stderr)
        if strict and args.command != "check-regime":
            return 2

    rundir = run_directory(opt.get("out", "runs"), cfg, seed, args.command)
    write_json(os.path.join(rundir, "manifest.json"), {
        "tool": "girsanovlab",
        "version": __version__,
        "command": args.command,
        "argv": argv,
        "seed": seed,
        "threads": threads,
        "spec": spec.to_dict(),
        "spec_hash": spec.spec_hash(),
        "config": cfg.data,
        "numpy": np.__version__,
    })
    build_spectrum(spec).to_csv(os.path.join(rundir, "modes.csv"))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", HeavyTailWarning)
        try:
            summary = HANDLERS[args.command](cfg, spec, seed, rundir, threads)
        except BlowUpError as exc:
            print(f"blow-up: {exc}", file=sys.stderr)
            write_json(os.path.join(rundir, "summary.json"), {"error": str(exc)})
            return 3
        except ConfigError as exc:
            print(exc, file=sys.stderr)
            return 1
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    summary.update({"command": args.command, "seed": seed, "spec_hash": spec.spec_hash(),
                    "regime_passed": report.passed, "warnings": [str(w.message) for w in caught]})
    write_json(os.path.join(rundir, "summary.json"), summary)
    print(rundir)
    if strict and not report.passed:
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
