"""Command-line front end.

Subcommands:
  simulate    integrate a named system and write a trajectory CSV (ODEs) or
              a binary field container with JSON sidecar (PDEs)
  fit         sparse regression on a saved trajectory or field
  experiment  run a TOML-configured experiment family end to end
  report      rebuild summary.csv and plot-ready pivot tables from records

Exit codes: 0 success, 2 configuration or usage error, 3 when an experiment
finished but one or more trial cells failed.
"""

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import io
from .differentiation import Differentiator, differentiate
from .errors import ConfigError, MiosindyError
from .harness import load_config, load_records, run_experiment, simulate_pde_field, write_report
from .library import normalize_columns, pde_library, polynomial_library
from .metrics import coefficient_error, true_positivity_rate
from .rng import RngStream
from .solver import BnbConfig, SparseRegressionProblem, solve_sparse, unbias
from .systems import (add_noise, get_system, rk4_integrate,
                      sample_initial_condition, system_names)
from .weak import WeakConfig, weak_form

_PDE_SYSTEMS = ("ks", "reaction_diffusion")


def _build_parser():
    top = argparse.ArgumentParser(
        prog="miosindy",
        description="sparse governing-equation discovery with an exact "
                    "branch-and-bound subset solver")
    sub = top.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="integrate a named system to disk")
    sim.add_argument("system", choices=sorted(set(system_names()) | set(_PDE_SYSTEMS)))
    sim.add_argument("--seconds", type=float, default=10.0,
                     help="length of the saved window (default 10)")
    sim.add_argument("--dt", type=float, default=0.002,
                     help="output sample spacing (default 0.002; PDEs 0.1)")
    sim.add_argument("--noise", type=float, default=0.0,
                     help="additive gaussian noise, percent of signal RMS")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--substeps", type=int, default=1,
                     help="internal RK4 steps per sample (ODEs)")
    sim.add_argument("--grid-points", type=int, default=None,
                     help="spatial resolution (PDEs)")
    sim.add_argument("--spin-seconds", type=float, default=None,
                     help="transient to discard before the saved window (PDEs)")
    sim.add_argument("--out", required=True,
                     help="CSV path (ODEs) or base path for .bin/.json (PDEs)")

    fit = sub.add_parser("fit", help="sparse regression on saved data")
    fit.add_argument("data", help="trajectory CSV or field base path")
    fit.add_argument("--degree", type=int, default=5)
    fit.add_argument("--max-deriv", type=int, default=4,
                     help="highest spatial derivative order (fields)")
    fit.add_argument("--algorithm", choices=("miosr", "stlsq"), default="miosr")
    fit.add_argument("--ks", type=int, nargs="+", default=[3],
                     help="per-equation sparsity budgets (one value broadcasts)")
    fit.add_argument("--thresholds", type=float, nargs="+", default=[0.1],
                     help="stlsq cut level (one value broadcasts)")
    fit.add_argument("--alphas", type=float, nargs="+", default=[1e-5],
                     help="ridge weight (first value is used)")
    fit.add_argument("--differentiation", default="smoothed",
                     choices=("centered", "fd4", "savgol", "smoothed"))
    fit.add_argument("--window", type=int, default=9)
    fit.add_argument("--polyorder", type=int, default=3)
    fit.add_argument("--weak", action="store_true",
                     help="integral formulation instead of derivatives")
    fit.add_argument("--num-domains", type=int, default=1000)
    fit.add_argument("--points-per-domain", type=int, default=200)
    fit.add_argument("--time-limit", type=float, default=30.0)
    fit.add_argument("--seed", type=int, default=0,
                     help="weak-form domain placement seed")
    fit.add_argument("--system", default=None,
                     help="score against this system's known terms")
    fit.add_argument("--out", default=None,
                     help="write the model JSON here instead of stdout")

    exp = sub.add_parser("experiment", help="run a TOML experiment config")
    exp.add_argument("config")
    exp.add_argument("--output-dir", default=None)
    exp.add_argument("--trials", type=int, default=None)
    exp.add_argument("--workers", type=int, default=None)
    exp.add_argument("--seed", type=int, default=None)

    rep = sub.add_parser("report", help="aggregate saved records")
    rep.add_argument("directory", help="experiment output dir (or its records/)")
    rep.add_argument("--out", default=None,
                     help="write tables here (default: the records' parent)")
    return top


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _cmd_simulate(args):
    stream = RngStream(args.seed)
    if args.system in _PDE_SYSTEMS:
        sim = {"t_end": args.seconds}
        if args.dt != 0.002:
            sim["dt_out"] = args.dt
        if args.grid_points is not None:
            sim["grid_points"] = args.grid_points
        if args.spin_seconds is not None:
            sim["spin_seconds"] = args.spin_seconds
        fld = simulate_pde_field(args.system, sim, stream.child(0))
        if args.noise > 0.0:
            rms = float(np.sqrt(np.mean(fld.values ** 2)))
            noise = stream.child(1).normal(size=fld.values.shape)
            fld = dataclasses.replace(
                fld, values=fld.values + (args.noise / 100.0) * rms * noise)
        bin_path, json_path = io.save_field(fld, args.out)
        print(f"wrote {bin_path} and {json_path}")
        return 0
    system = get_system(args.system)
    x0 = sample_initial_condition(system, stream.child(0))
    traj = rk4_integrate(system, x0, args.seconds, args.dt, args.substeps)
    if args.noise > 0.0:
        traj = add_noise(traj, args.noise, stream.child(1))
    path = io.save_trajectory_csv(traj, args.out)
    print(f"wrote {path} ({traj.n} samples, dim {traj.states.shape[1]})")
    return 0


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------

def _load_data(path_str):
    path = Path(path_str)
    if path.suffix == ".csv":
        if not path.exists():
            raise ConfigError(f"no trajectory CSV at {path_str}")
        return io.load_trajectory_csv(path), "trajectory"
    base = path.with_suffix("") if path.suffix in (".bin", ".json") else path
    if base.with_suffix(".json").exists():
        return io.load_field(base), "field"
    if path.exists():
        return io.load_trajectory_csv(path), "trajectory"
    raise ConfigError(f"no trajectory CSV or field container at {path_str}")


def _fit_library(args, data, kind):
    if kind == "field":
        lib = weak_form({"degree": args.degree, "max_deriv": args.max_deriv},
                        data, WeakConfig(args.num_domains, args.points_per_domain,
                                         rng=RngStream(args.seed)))
    elif args.weak:
        lib = weak_form({"degree": args.degree, "include_bias": True},
                        data, WeakConfig(args.num_domains, args.points_per_domain,
                                         rng=RngStream(args.seed)))
    else:
        diff = Differentiator(args.differentiation, args.window, args.polyorder)
        deriv = differentiate(data, diff)
        lib = polynomial_library(data, args.degree, True).with_targets(deriv)
    return lib


def _broadcast(values, d, what):
    if len(values) == 1:
        return [values[0]] * d
    if len(values) != d:
        raise ConfigError(f"{what}: expected 1 or {d} values, got {len(values)}")
    return values


def _cmd_fit(args):
    data, kind = _load_data(args.data)
    lib = _fit_library(args, data, kind)
    lib_norm = normalize_columns(lib)
    theta = lib_norm.theta
    d = lib.targets.shape[1]
    alpha = float(args.alphas[0])

    coefficients = np.zeros((theta.shape[1], d))
    supports, statuses, gaps = [], [], []
    if args.algorithm == "miosr":
        ks = _broadcast(args.ks, d, "--ks")
        for dim in range(d):
            y = lib.targets[:, dim]
            problem = SparseRegressionProblem(
                gram=np.ascontiguousarray(theta.T @ theta),
                linear=np.ascontiguousarray(theta.T @ y),
                lam=alpha, k=int(ks[dim]))
            sol = solve_sparse(problem, BnbConfig(time_limit=args.time_limit))
            coefficients[:, dim] = unbias(sol.support, lib.theta, y)
            supports.append(sorted(int(i) for i in sol.support))
            statuses.append(sol.status)
            gaps.append(float(sol.gap))
    else:
        from .baselines import StlsqConfig, stlsq
        cuts = _broadcast(args.thresholds, d, "--thresholds")
        for dim in range(d):
            y = lib.targets[:, dim]
            sol = stlsq(theta, y, StlsqConfig(threshold=float(cuts[dim]), lam=alpha))
            if sol.support.size:
                coefficients[:, dim] = unbias(sol.support, lib.theta, y)
            supports.append(sorted(int(i) for i in sol.support))
            statuses.append(sol.status)
            gaps.append(float(sol.gap))

    model = {
        "data": str(args.data),
        "kind": kind,
        "library": "weak" if (kind == "field" or args.weak) else "differential",
        "algorithm": args.algorithm,
        "alpha": alpha,
        "terms": [term.label() for term in lib.terms],
        "supports": supports,
        "statuses": statuses,
        "gaps": gaps,
        "coefficients": coefficients.tolist(),
    }
    if args.system is not None:
        if kind == "field":
            from .harness import pde_truth
            truth = pde_truth(args.system, lib.terms)
        else:
            system = get_system(args.system)
            truth = system.true_coefficients([t.exponents for t in lib.terms])
        model["tpr"] = true_positivity_rate(truth, coefficients)
        model["coefficient_error"] = coefficient_error(truth, coefficients)
    text = json.dumps(model, indent=1)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        print(text)
    return 0


# ---------------------------------------------------------------------------
# experiment / report
# ---------------------------------------------------------------------------

def _cmd_experiment(args):
    overrides = {}
    if args.output_dir is not None:
        overrides["output_dir"] = args.output_dir
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.seed is not None:
        overrides["seed"] = args.seed
    cfg = load_config(args.config, overrides)
    records = run_experiment(cfg)
    failed = [r for r in records if "error" in r]
    out_dir = Path(cfg.output_dir)
    print(f"{len(records)} records -> {out_dir / 'records'}")
    print(f"summary -> {out_dir / 'summary.csv'}")
    if failed:
        print(f"{len(failed)} trial cell(s) failed; see their record JSON",
              file=sys.stderr)
        return 3
    return 0


def _cmd_report(args):
    records = load_records(args.directory)
    if not records:
        raise ConfigError(f"no records found under {args.directory}")
    base = Path(args.directory)
    if base.name == "records":
        base = base.parent
    out_dir = Path(args.out) if args.out else base
    paths = write_report(records, out_dir)
    for path in paths:
        print(f"wrote {path}")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
    "experiment": _cmd_experiment,
    "report": _cmd_report,
}


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, MiosindyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
