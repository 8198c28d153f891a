"""Config-driven experiment execution and aggregation.

Five experiment families, all sharing the trial contract (seed = base xor
trial index, one RngStream per trial with fixed-purpose substreams):

  sample_efficiency  vary training duration at fixed noise; AICc selection
  runtime            fixed hyperparameters, regression wall time is the point
  constraints        joint sparse fit of the two momentum equations of the
                     coupled oscillator with curl-free equality rows
  robustness         weak-form trajectory fits across a noise ladder
  pde                weak-form field fits (achievability mode: the exact
                     solver gets the true sparsity, thresholding baselines
                     report their best-by-recovery grid point)

Each (trial, condition, algorithm) cell yields one JSON record; aggregate()
reduces records to the summary table. Records fully determine a rerun:
config hash, seed, initial condition, chosen hyperparameters, coefficients.
"""

import dataclasses
import hashlib
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:                      # Python 3.10
    import tomli as tomllib

from . import io
from .baselines import StlsqConfig, stlsq
from .differentiation import Differentiator, differentiate
from .errors import ConfigError, MiosindyError, UnknownSystem
from .library import (evaluate_monomials, gradient_constraints,
                      normalize_columns, pde_library, polynomial_library,
                      unscale_coefficients)
from .metrics import (MetricReport, coefficient_error, constraint_violation,
                      derivative_rmse, true_positivity_rate)
from .pde import Field, simulate_ks, simulate_reaction_diffusion, \
    spiral_initial_condition
from .rng import RngStream
from .selection import SelectionConfig, select_joint, select_model
from .solver import (BnbConfig, Constraints, SparseRegressionProblem,
                     solve_sparse, unbias)
from .systems import (add_noise, get_system, rk4_integrate,
                      sample_initial_condition)
from .weak import WeakConfig, weak_form

logger = logging.getLogger("miosindy")

FAMILIES = ("sample_efficiency", "runtime", "constraints", "robustness", "pde")
ALGORITHM_NAMES = ("miosr", "stlsq", "ssr", "ensemble")
PDE_SYSTEMS = ("ks", "reaction_diffusion")

SUMMARY_COLUMNS = ("experiment", "system", "algorithm", "condition",
                   "metric", "mean", "stderr", "n")
# wall-time rows sort last: they are excluded from byte-stability checks
_METRIC_ORDER = ("tpr", "log10_rmse", "log10_coef_error", "violation",
                 "max_violation", "wall_time_fit")
_LOG_FLOOR = 1e-15

_DEFAULT_ALPHAS = (0.0, 1e-5, 1e-3, 1e-2, 0.05, 0.2)
_DEFAULT_KS = (1, 2, 3, 4, 5)


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description (usually parsed from a TOML file)."""

    experiment: str
    system: str
    trials: int
    noise_percent: tuple
    train_seconds: tuple
    dt: float
    seed: int
    output_dir: str
    library: dict = field(default_factory=dict)
    algorithms: tuple = ()
    sim: dict = field(default_factory=dict)
    split_fraction: float = 2.0 / 3.0
    workers: int = 1

    def __post_init__(self):
        if self.experiment not in FAMILIES:
            raise ConfigError(f"unknown experiment family {self.experiment!r}")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if not 0.0 < self.split_fraction < 1.0:
            raise ConfigError("split_fraction must lie in (0, 1)")
        object.__setattr__(self, "noise_percent",
                           tuple(float(p) for p in _as_list(self.noise_percent)))
        object.__setattr__(self, "train_seconds",
                           tuple(float(s) for s in _as_list(self.train_seconds)))
        object.__setattr__(self, "algorithms",
                           tuple(dict(a) for a in self.algorithms))
        if not self.algorithms:
            raise ConfigError("at least one algorithm entry is required")
        for algo in self.algorithms:
            if algo.get("name") not in ALGORITHM_NAMES:
                raise ConfigError(f"unknown algorithm {algo.get('name')!r}")
        if self.experiment == "pde":
            if self.system not in PDE_SYSTEMS:
                raise ConfigError(
                    f"pde experiments support {PDE_SYSTEMS}, got {self.system!r}")
        else:
            try:
                get_system(self.system)
            except UnknownSystem as exc:
                raise ConfigError(str(exc)) from exc
            if not self.train_seconds:
                raise ConfigError("train_seconds must be non-empty")
            if self.dt <= 0:
                raise ConfigError("dt must be positive")
        if not self.noise_percent:
            raise ConfigError("noise_percent must be non-empty")
        if self.experiment == "constraints" and self.system != "duffing":
            raise ConfigError("the constraints experiment fits the coupled "
                              "oscillator; system must be 'duffing'")


def _as_list(value):
    if isinstance(value, (list, tuple)):
        return list(value)
    return [value]


_CONFIG_KEYS = {f.name for f in dataclasses.fields(ExperimentConfig)}


def load_config(path, overrides=None):
    """Parse and validate a TOML experiment config; CLI overrides win."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML: {exc}") from exc
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
    for key, value in (overrides or {}).items():
        if value is not None:
            raw[key] = value
    missing = {"experiment", "system", "trials", "seed", "output_dir"} - set(raw)
    if missing:
        raise ConfigError(f"{path}: missing required keys {sorted(missing)}")
    raw.setdefault("noise_percent", [0.0])
    raw.setdefault("train_seconds", [10.0])
    raw.setdefault("dt", 0.002)
    try:
        return ExperimentConfig(**raw)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def config_hash(cfg):
    """Stable 12-hex-digit digest of every config field."""
    payload = dataclasses.asdict(cfg)
    blob = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


# --------------------------------------------------------------------------
# conditions


def _conditions(cfg):
    """Ordered (label, settings) pairs for the family's varied quantity."""
    fam = cfg.experiment
    if fam == "sample_efficiency":
        return [(f"{s:g}s", {"train_seconds": s,
                             "noise_percent": cfg.noise_percent[0]})
                for s in cfg.train_seconds]
    if fam == "runtime":
        degrees = [int(d) for d in
                   _as_list(cfg.library.get("degrees",
                                            cfg.library.get("degree", 5)))]
        return [(f"deg{d}-{s:g}s", {"train_seconds": s, "degree": d,
                                    "noise_percent": cfg.noise_percent[0]})
                for d in degrees for s in cfg.train_seconds]
    return [(f"{p:g}pct", {"noise_percent": p,
                           "train_seconds": cfg.train_seconds[0]})
            for p in cfg.noise_percent]


def _noise_levels(conditions):
    levels = []
    for _, cond in conditions:
        if cond["noise_percent"] not in levels:
            levels.append(cond["noise_percent"])
    return levels


def _algo_label(cfg, algo):
    if algo.get("label"):
        return str(algo["label"])
    name = algo["name"]
    if cfg.experiment == "constraints" and name == "miosr":
        return name + ("_constrained" if algo.get("constrained", True)
                       else "_unconstrained")
    return name


# --------------------------------------------------------------------------
# record plumbing


def _base_record(cfg, chash, trial, seed, cidx, label, cond, algo_label):
    return {
        "schema": 1,
        "experiment": cfg.experiment,
        "system": cfg.system,
        "condition_label": label,
        "condition_index": cidx,
        "condition": dict(cond),
        "trial": trial,
        "seed": seed,
        "config_hash": chash,
        "algorithm": algo_label,
    }


def _error_record(base, exc):
    rec = dict(base)
    rec["error"] = f"{type(exc).__name__}: {exc}"
    return rec


def _solution_fields(rec, xi, solutions, hyperparams, report,
                     aicc_values=None, n_grid_errors=0):
    rec["hyperparams"] = hyperparams
    rec["supports"] = [np.nonzero(xi[:, j])[0].tolist()
                       for j in range(xi.shape[1])]
    rec["coefficients"] = [xi[:, j].tolist() for j in range(xi.shape[1])]
    rec["statuses"] = [s.status for s in solutions]
    rec["gaps"] = [float(s.gap) for s in solutions]
    rec["nodes"] = [int(s.nodes_explored) for s in solutions]
    rec["metrics"] = report.to_dict()
    if aicc_values is not None:
        rec["aicc_per_dim"] = [float(a) for a in aicc_values]
    rec["n_grid_errors"] = int(n_grid_errors)
    return rec


# --------------------------------------------------------------------------
# shared helpers


def _trial_streams(cfg, trial):
    seed = cfg.seed ^ trial
    stream = RngStream(seed)
    names = ("ic", "noise", "weak", "algo", "test", "val")
    return seed, {name: stream.child(i) for i, name in enumerate(names)}


def _test_set(cfg, system, rng):
    n_traj = int(cfg.sim.get("test_trajectories", 10))
    seconds = float(cfg.sim.get("test_seconds", 10.0))
    substeps = int(cfg.sim.get("substeps", 1))
    out = []
    for _ in range(n_traj):
        x0 = sample_initial_condition(system, rng)
        out.append(rk4_integrate(system, x0, seconds, cfg.dt, substeps))
    return out


def _rows(lib, start, stop):
    targets = None if lib.targets is None else lib.targets[start:stop]
    return dataclasses.replace(lib, theta=lib.theta[start:stop],
                               targets=targets, scales=None)


def _selection_config(cfg, algo, rng_cell):
    return SelectionConfig(
        alphas=tuple(float(a) for a in algo.get("alphas", _DEFAULT_ALPHAS)),
        thresholds=tuple(float(t) for t in algo.get("thresholds", ())),
        ks=tuple(int(k) for k in algo.get("ks", _DEFAULT_KS)),
        unbias=bool(algo.get("unbias", True)),
        bnb=BnbConfig(
            gap_tolerance=float(algo.get("gap_tolerance", 1e-6)),
            time_limit=float(algo.get("time_limit", 30.0))),
        ensemble_n_models=int(algo.get("n_models", 50)),
        ensemble_mode=str(algo.get("mode", "bragging")),
        ensemble_top_k=int(algo.get("top_k", 0)),
        ensemble_rng=rng_cell)


def _stlsq_alpha_reuse(algo, condition_state):
    """The bagged baseline reuses the plain baseline's chosen ridge weights."""
    if algo["name"] != "ensemble" or not algo.get("use_stlsq_alpha", True):
        return None
    alphas = condition_state.get("stlsq_alphas")
    if not alphas:
        return None
    return [(float(a),) for a in alphas]


# --------------------------------------------------------------------------
# trajectory families (sample_efficiency, runtime, robustness)


def _differentiator(cfg, default_window=9, prefix=""):
    method = cfg.library.get(prefix + "differentiation")
    if method is None:
        if prefix:
            return None
        method = "smoothed"
    window = int(cfg.library.get(prefix + "smoothing_window", default_window))
    polyorder = int(cfg.library.get(prefix + "polyorder", 3))
    return Differentiator(str(method), window, polyorder)


def _ode_library(cfg, cond, noisy, cidx, rngs):
    """Train/validation libraries for one condition; both carry targets.

    Weak mode assembles the integral system on the training segment; the
    validation side follows the noise rule: below 15% noise a smoothed
    (window 21) differential fit, at or above it a weak assembly on the
    held-out segment with proportionally fewer domains.
    """
    degree = int(cond.get("degree", cfg.library.get("degree", 5)))
    include_bias = bool(cfg.library.get("include_bias", True))
    spec = {"degree": degree, "include_bias": include_bias}
    n = noisy.n
    n_train = int(n * cfg.split_fraction)

    if cfg.library.get("weak"):
        num_domains = int(cfg.library.get("num_domains", 1000))
        ppd = int(cfg.library.get("points_per_domain", 200))
        train_traj = noisy.segment(0, n_train)
        val_traj = noisy.segment(n_train, n)
        train_lib = weak_form(spec, train_traj,
                              WeakConfig(num_domains, ppd,
                                         rng=rngs["weak"].child(cidx)))
        if cond["noise_percent"] >= 15.0:
            k_val = max(8, int(round(num_domains * val_traj.n / train_traj.n)))
            val_lib = weak_form(spec, val_traj,
                                WeakConfig(k_val, ppd,
                                           rng=rngs["val"].child(cidx)))
        else:
            deriv = differentiate(val_traj, Differentiator("smoothed", 21))
            val_lib = polynomial_library(val_traj, degree,
                                         include_bias).with_targets(deriv)
    else:
        deriv = differentiate(noisy, _differentiator(cfg))
        full = polynomial_library(noisy, degree, include_bias).with_targets(deriv)
        train_lib = _rows(full, 0, n_train)
        val_lib = _rows(full, n_train, n)
        # An independent validation-side estimator breaks the absorption of
        # systematic differentiation bias by the library: terms that only
        # explain the training estimator's truncation error stop paying off
        # on the held-out score, so the information criterion can prune them.
        val_diff = _differentiator(cfg, prefix="validation_")
        if val_diff is not None:
            val_deriv = differentiate(noisy, val_diff)
            val_lib = _rows(full.with_targets(val_deriv), n_train, n)

    if cfg.library.get("normalize"):
        train_lib = normalize_columns(train_lib)
    return train_lib, val_lib, spec


def _score_against_system(system, xi, spec, test_trajs, exponents):
    true_xi = system.true_coefficients(exponents)
    return MetricReport(
        tpr=true_positivity_rate(true_xi, xi),
        coef_error=coefficient_error(true_xi, xi),
        rmse=derivative_rmse(xi, system, test_trajs, spec["degree"],
                             spec["include_bias"]))


def _fixed_fit(cfg, algo, train_lib, rng_cell):
    """Runtime-family fit: one hyperparameter point, no tuning or splits.

    Returns (xi_raw, solutions, hyperparams, fit_seconds) where fit_seconds
    times only the regression calls (library and derivative work is outside).
    """
    from .baselines import EnsembleConfig, ensemble_stlsq, ssr

    name = algo["name"]
    theta = train_lib.theta
    d = train_lib.targets.shape[1]
    D = theta.shape[1]
    alpha = float(algo.get("alpha", 1e-5))
    solutions = []
    hyperparams = []
    fit_seconds = 0.0

    for dim in range(d):
        y = train_lib.targets[:, dim]
        t0 = time.perf_counter()
        if name == "miosr":
            k_list = _as_list(algo.get("k", 3))
            k = int(k_list[dim] if len(k_list) > 1 else k_list[0])
            problem = SparseRegressionProblem(
                gram=np.ascontiguousarray(theta.T @ theta),
                linear=np.ascontiguousarray(theta.T @ y), lam=alpha, k=k)
            sol = solve_sparse(problem, BnbConfig(
                gap_tolerance=float(algo.get("gap_tolerance", 1e-6)),
                time_limit=float(algo.get("time_limit", 30.0))))
            hyper = {"alpha": alpha, "k": k}
        elif name == "stlsq":
            threshold = float(algo.get("threshold", 0.1))
            sol = stlsq(theta, y, StlsqConfig(threshold=threshold, lam=alpha))
            hyper = {"alpha": alpha, "threshold": threshold}
        elif name == "ssr":
            sizes = _as_list(algo.get("size", 3))
            size = int(sizes[dim] if len(sizes) > 1 else sizes[0])
            path = ssr(theta, y, alpha)
            sol = next((s for s in path if s.hyperparams["size"] == size),
                       path[-1])
            hyper = {"alpha": alpha, "size": size}
        else:
            threshold = float(algo.get("threshold", 0.1))
            ens = EnsembleConfig(
                base=StlsqConfig(threshold=threshold, lam=alpha),
                rng=rng_cell.child(dim),
                n_models=int(algo.get("n_models", 50)),
                mode=str(algo.get("mode", "bragging")),
                top_k=int(algo.get("top_k", 0)))
            sol = ensemble_stlsq(theta, y, ens)
            hyper = {"alpha": alpha, "threshold": threshold}
        fit_seconds += time.perf_counter() - t0
        solutions.append(sol)
        hyperparams.append(hyper)

    raw_theta = theta if train_lib.scales is None else theta * train_lib.scales
    xi = np.zeros((D, d))
    for dim, sol in enumerate(solutions):
        if algo.get("unbias", True):
            xi[:, dim] = unbias(sol.support, raw_theta,
                                train_lib.targets[:, dim])
        else:
            xi[:, dim] = unscale_coefficients(sol.xi, train_lib.scales)
    return xi, solutions, hyperparams, fit_seconds


def _ode_trial(cfg, trial, chash):
    records = []
    seed, rngs = _trial_streams(cfg, trial)
    conditions = _conditions(cfg)
    levels = _noise_levels(conditions)
    system = get_system(cfg.system)

    t0 = time.perf_counter()
    x0 = sample_initial_condition(system, rngs["ic"])
    t_max = max(c["train_seconds"] for _, c in conditions)
    clean = rk4_integrate(system, x0, t_max, cfg.dt,
                          int(cfg.sim.get("substeps", 1)))
    test_trajs = _test_set(cfg, system, rngs["test"])
    sim_seconds = time.perf_counter() - t0

    noisy_cache = {}

    def noisy_at(level):
        if level not in noisy_cache:
            pct = levels[level]
            noisy_cache[level] = add_noise(clean, pct,
                                           rngs["noise"].child(level))
        return noisy_cache[level]

    for cidx, (label, cond) in enumerate(conditions):
        condition_state = {}
        level = levels.index(cond["noise_percent"])
        n_keep = int(round(cond["train_seconds"] / cfg.dt)) + 1
        try:
            t0 = time.perf_counter()
            noisy = noisy_at(level).segment(0, n_keep)
            train_lib, val_lib, spec = _ode_library(cfg, cond, noisy, cidx, rngs)
            lib_seconds = time.perf_counter() - t0
        except MiosindyError as exc:
            logger.warning("trial %d condition %s: %s", trial, label, exc)
            for algo in cfg.algorithms:
                base = _base_record(cfg, chash, trial, seed, cidx, label, cond,
                                    _algo_label(cfg, algo))
                base["initial_condition"] = x0.tolist()
                records.append(_error_record(base, exc))
            continue

        for aidx, algo in enumerate(cfg.algorithms):
            base = _base_record(cfg, chash, trial, seed, cidx, label, cond,
                                _algo_label(cfg, algo))
            base["initial_condition"] = x0.tolist()
            rng_cell = rngs["algo"].child(cidx).child(aidx)
            try:
                if cfg.experiment == "runtime":
                    base["mode"] = "fixed"
                    xi, sols, hyper, fit_seconds = _fixed_fit(
                        cfg, algo, train_lib, rng_cell)
                    aicc_values, n_grid_errors = None, 0
                else:
                    base["mode"] = "selection"
                    sel = _selection_config(cfg, algo, rng_cell)
                    t0 = time.perf_counter()
                    res = select_model(train_lib, val_lib, algo["name"], sel,
                                       alphas_per_dim=_stlsq_alpha_reuse(
                                           algo, condition_state))
                    fit_seconds = time.perf_counter() - t0
                    xi, sols, hyper = res.xi, res.solutions, res.hyperparams
                    aicc_values = res.aicc_values
                    n_grid_errors = res.n_grid_errors
                    if algo["name"] == "stlsq":
                        condition_state["stlsq_alphas"] = [
                            h["alpha"] for h in hyper]
                t0 = time.perf_counter()
                report = _score_against_system(
                    system, xi, spec, test_trajs,
                    [t.exponents for t in train_lib.terms])
                metric_seconds = time.perf_counter() - t0
                rec = _solution_fields(base, xi, sols, hyper, report,
                                       aicc_values, n_grid_errors)
                rec["wall_times"] = {"simulate": sim_seconds,
                                     "library": lib_seconds,
                                     "fit": fit_seconds,
                                     "metrics": metric_seconds}
                records.append(rec)
            except MiosindyError as exc:
                logger.warning("trial %d condition %s algo %s: %s",
                               trial, label, base["algorithm"], exc)
                records.append(_error_record(base, exc))
    return records


# --------------------------------------------------------------------------
# constraints family


def _momentum_truth(system, terms):
    """True (D, 2) coefficients of the two momentum equations over the
    position-only polynomial library."""
    index = {t.exponents: i for i, t in enumerate(terms)}
    out = np.zeros((len(terms), 2))
    for col, dim in enumerate((2, 3)):
        for exps, coef in system.true_terms[dim]:
            if exps[2] != 0 or exps[3] != 0:
                raise MiosindyError(
                    "momentum equations must not depend on momenta")
            out[index[(exps[0], exps[1])], col] = coef
    return out


def _momentum_rmse(system, xi, exponents, test_trajs):
    vals = []
    for traj in test_trajs:
        theta = evaluate_monomials(traj.states[:, :2], exponents)
        pred = theta @ xi
        truth = np.stack([system.rhs_at(x)[2:4] for x in traj.states])
        vals.append(float(np.sqrt(np.mean((pred - truth) ** 2))))
    return float(np.mean(vals))


def _constraints_trial(cfg, trial, chash):
    records = []
    seed, rngs = _trial_streams(cfg, trial)
    conditions = _conditions(cfg)
    levels = _noise_levels(conditions)
    system = get_system(cfg.system)
    degree = int(cfg.library.get("degree", 3))

    t0 = time.perf_counter()
    x0 = sample_initial_condition(system, rngs["ic"])
    clean = rk4_integrate(system, x0, conditions[0][1]["train_seconds"], cfg.dt,
                          int(cfg.sim.get("substeps", 1)))
    test_trajs = _test_set(cfg, system, rngs["test"])
    sim_seconds = time.perf_counter() - t0

    for cidx, (label, cond) in enumerate(conditions):
        level = levels.index(cond["noise_percent"])
        try:
            t0 = time.perf_counter()
            noisy = add_noise(clean, cond["noise_percent"],
                              rngs["noise"].child(level))
            deriv = differentiate(noisy, _differentiator(cfg, default_window=21))
            lib = polynomial_library(noisy.states[:, :2], degree,
                                     True).with_targets(deriv[:, 2:4])
            n_train = int(noisy.n * cfg.split_fraction)
            train_lib = _rows(lib, 0, n_train)
            val_lib = _rows(lib, n_train, noisy.n)
            a_mat, b_vec = gradient_constraints(lib.terms)
            lib_seconds = time.perf_counter() - t0
        except MiosindyError as exc:
            for algo in cfg.algorithms:
                base = _base_record(cfg, chash, trial, seed, cidx, label, cond,
                                    _algo_label(cfg, algo))
                base["initial_condition"] = x0.tolist()
                records.append(_error_record(base, exc))
            continue

        exponents = [t.exponents for t in lib.terms]
        truth = _momentum_truth(system, lib.terms)

        for aidx, algo in enumerate(cfg.algorithms):
            base = _base_record(cfg, chash, trial, seed, cidx, label, cond,
                                _algo_label(cfg, algo))
            base["initial_condition"] = x0.tolist()
            base["mode"] = "joint"
            rng_cell = rngs["algo"].child(cidx).child(aidx)
            try:
                constrained = bool(algo.get("constrained", True))
                cons = Constraints(a_mat, b_vec) if constrained else None
                sel = _selection_config(cfg, algo, rng_cell)
                k_grid = [int(k) for k in algo.get("k_globals",
                                                   range(2, 11))]
                t0 = time.perf_counter()
                res, joint = select_joint(train_lib, val_lib, sel, k_grid,
                                          cons)
                fit_seconds = time.perf_counter() - t0

                t0 = time.perf_counter()
                xi = res.xi
                stacked = np.concatenate([xi[:, 0], xi[:, 1]])
                report = MetricReport(
                    tpr=true_positivity_rate(truth, xi),
                    coef_error=coefficient_error(truth, xi),
                    rmse=_momentum_rmse(system, xi, exponents, test_trajs),
                    extras={
                        "violation": constraint_violation(a_mat, b_vec,
                                                          stacked),
                        "max_violation": constraint_violation(
                            a_mat, b_vec, stacked, mode="max"),
                    })
                metric_seconds = time.perf_counter() - t0
                rec = _solution_fields(base, xi, list(joint.per_dim),
                                       res.hyperparams, report,
                                       res.aicc_values, res.n_grid_errors)
                rec["constrained"] = constrained
                rec["wall_times"] = {"simulate": sim_seconds,
                                     "library": lib_seconds,
                                     "fit": fit_seconds,
                                     "metrics": metric_seconds}
                records.append(rec)
            except MiosindyError as exc:
                logger.warning("trial %d condition %s algo %s: %s",
                               trial, label, base["algorithm"], exc)
                records.append(_error_record(base, exc))
    return records


# --------------------------------------------------------------------------
# pde family


def pde_truth(system_name, terms, diffusion=0.1, beta=1.0):
    """True coefficient matrix over a PDE term list.

    ks: u_t = -u u_x - u_xx - u_xxxx (one variable).
    reaction_diffusion: the oscillatory two-species model expanded over the
    cubic polynomial-times-derivative library (seven terms per equation).
    """
    index = {(t.exponents, t.deriv_var, t.deriv_orders): i
             for i, t in enumerate(terms)}
    if system_name == "ks":
        spec = [{((1,), 0, (1,)): -1.0,
                 ((0,), 0, (2,)): -1.0,
                 ((0,), 0, (4,)): -1.0}]
    elif system_name == "reaction_diffusion":
        none = -1
        spec = [
            {((1, 0), none, ()): 1.0, ((3, 0), none, ()): -1.0,
             ((1, 2), none, ()): -1.0, ((2, 1), none, ()): beta,
             ((0, 3), none, ()): beta,
             ((0, 0), 0, (2, 0)): diffusion, ((0, 0), 0, (0, 2)): diffusion},
            {((0, 1), none, ()): 1.0, ((3, 0), none, ()): -beta,
             ((2, 1), none, ()): -1.0, ((1, 2), none, ()): -beta,
             ((0, 3), none, ()): -1.0,
             ((0, 0), 1, (2, 0)): diffusion, ((0, 0), 1, (0, 2)): diffusion},
        ]
    else:
        raise MiosindyError(f"no ground truth for field system {system_name!r}")
    out = np.zeros((len(terms), len(spec)))
    for col, entries in enumerate(spec):
        for key, coef in entries.items():
            if key not in index:
                raise MiosindyError(
                    f"library is missing the true term {key} "
                    "(degree or max_deriv too small)")
            out[index[key], col] = coef
    return out


def _noisy_field(fld, percent, rng):
    if percent == 0.0:
        return fld
    std = (percent / 100.0) * float(np.sqrt(np.mean(fld.values ** 2)))
    values = fld.values + std * rng.normal(size=fld.values.shape)
    return dataclasses.replace(fld, values=values)


def simulate_pde_field(system_name, sim, rng):
    """One field realization; the spin-up transient is simulated and dropped.

    sim is a plain dict of solver settings (grid_points, t_end, ...); rng an
    RngStream that draws the initial-condition parameters.
    """
    if system_name == "ks":
        n = int(sim.get("grid_points", 256))
        length = float(sim.get("domain_length", 32.0 * np.pi))
        dt_out = float(sim.get("dt_out", 0.1))
        t_end = float(sim.get("t_end", 25.0))
        spin = float(sim.get("spin_seconds", 20.0))
        x = np.arange(n) * (length / n)
        m1 = int(rng.integers(1, 5))
        m2 = int(rng.integers(1, 9))
        r0, r2 = rng.uniform(size=2)
        u0 = np.cos((2 * np.pi / length) * m1 * x + 2 * np.pi * r0) \
            + np.sin((2 * np.pi / length) * m2 * x + 2 * np.pi * r2)
        fld = simulate_ks(u0, t_end=spin + t_end, dt_out=dt_out,
                          grid_points=n, domain_length=length)
    else:
        n = int(sim.get("grid_points", 64))
        extent = float(sim.get("extent", 20.0))
        dt_out = float(sim.get("dt_out", 0.02))
        t_end = float(sim.get("t_end", 5.0))
        spin = float(sim.get("spin_seconds", 0.0))
        scale = float(rng.uniform(0.95, 1.05))
        rotation = float(rng.uniform(0.0, 2.0 * np.pi))
        u0, v0 = spiral_initial_condition(n, extent, scale, rotation)
        fld = simulate_reaction_diffusion(
            u0, v0, t_end=spin + t_end, dt_out=dt_out, grid=n, extent=extent,
            diffusion=float(sim.get("diffusion", 0.1)),
            beta=float(sim.get("beta", 1.0)))
    keep = int(round(t_end / fld.dt)) + 1
    return dataclasses.replace(fld, times=fld.times[-keep:],
                               values=fld.values[-keep:])


def _simulate_pde(cfg, rng):
    return simulate_pde_field(cfg.system, cfg.sim, rng)


def _simulate_pde_test(cfg, rng):
    sim = dict(cfg.sim)
    sim["t_end"] = float(cfg.sim.get("test_seconds",
                                     10.0 if cfg.system == "ks" else 2.0))
    sim["dt_out"] = float(cfg.sim.get("test_dt_out", 0.1))
    probe = dataclasses.replace(cfg, sim=sim)
    return _simulate_pde(probe, rng)


def _pde_fit_miosr(algo, lib, lib_norm, truth):
    """Exact solves at the true per-variable sparsity (achievability mode)."""
    d = lib.targets.shape[1]
    D = lib.theta.shape[1]
    xi = np.zeros((D, d))
    solutions, hyperparams = [], []
    for dim in range(d):
        k = int(algo.get("k", int(np.count_nonzero(truth[:, dim]))))
        alpha = float(algo.get("alpha", 1e-5))
        problem = SparseRegressionProblem(
            gram=np.ascontiguousarray(lib_norm.theta.T @ lib_norm.theta),
            linear=np.ascontiguousarray(lib_norm.theta.T @ lib.targets[:, dim]),
            lam=alpha, k=k)
        sol = solve_sparse(problem, BnbConfig(
            gap_tolerance=float(algo.get("gap_tolerance", 1e-6)),
            time_limit=float(algo.get("time_limit", 30.0))))
        if algo.get("unbias", True):
            xi[:, dim] = unbias(sol.support, lib.theta, lib.targets[:, dim])
        else:
            xi[:, dim] = unscale_coefficients(sol.xi, lib_norm.scales)
        solutions.append(sol)
        hyperparams.append({"alpha": alpha, "k": k})
    return xi, solutions, hyperparams


def _pde_fit_stlsq(algo, lib, lib_norm, truth):
    """Thresholding baseline scanned over a fixed grid; the best-recovery
    point is reported (achievability protocol, not model selection)."""
    thresholds = [float(t) for t in algo.get("thresholds", ())]
    if not thresholds:
        raise MiosindyError("pde stlsq entries need an explicit threshold list")
    alpha = float(algo.get("alpha", 1e-5))
    d = lib.targets.shape[1]
    D = lib.theta.shape[1]
    xi = np.zeros((D, d))
    solutions, hyperparams = [], []
    for dim in range(d):
        best = None
        for threshold in thresholds:
            sol = stlsq(lib_norm.theta, lib.targets[:, dim],
                        StlsqConfig(threshold=threshold, lam=alpha))
            col = np.zeros(D)
            col[sol.support] = 1.0
            tpr = true_positivity_rate(truth[:, dim], col)
            if best is None or tpr > best[0] + 1e-12:
                best = (tpr, threshold, sol)
        tpr, threshold, sol = best
        if algo.get("unbias", True) and sol.support.size:
            xi[:, dim] = unbias(sol.support, lib.theta, lib.targets[:, dim])
        else:
            xi[:, dim] = unscale_coefficients(sol.xi, lib_norm.scales)
        solutions.append(sol)
        hyperparams.append({"alpha": alpha, "threshold": threshold})
    return xi, solutions, hyperparams


def _pde_trial(cfg, trial, chash):
    records = []
    seed, rngs = _trial_streams(cfg, trial)
    conditions = _conditions(cfg)
    levels = _noise_levels(conditions)
    degree = int(cfg.library.get("degree", 3))
    max_deriv = int(cfg.library.get("max_deriv",
                                    4 if cfg.system == "ks" else 2))
    num_domains = int(cfg.library.get("num_domains", 200))
    ppd = int(cfg.library.get("points_per_domain", 50))

    t0 = time.perf_counter()
    train_field = _simulate_pde(cfg, rngs["ic"])
    test_field = _simulate_pde_test(cfg, rngs["test"])
    test_lib = pde_library(test_field, degree, max_deriv)
    sim_seconds = time.perf_counter() - t0

    truth = pde_truth(cfg.system, test_lib.terms,
                      diffusion=float(cfg.sim.get("diffusion", 0.1)),
                      beta=float(cfg.sim.get("beta", 1.0)))

    for cidx, (label, cond) in enumerate(conditions):
        level = levels.index(cond["noise_percent"])
        try:
            t0 = time.perf_counter()
            noisy = _noisy_field(train_field, cond["noise_percent"],
                                 rngs["noise"].child(level))
            lib = weak_form({"degree": degree, "max_deriv": max_deriv}, noisy,
                            WeakConfig(num_domains, ppd,
                                       rng=rngs["weak"].child(cidx)))
            lib_norm = normalize_columns(lib)
            lib_seconds = time.perf_counter() - t0
        except MiosindyError as exc:
            for algo in cfg.algorithms:
                base = _base_record(cfg, chash, trial, seed, cidx, label, cond,
                                    _algo_label(cfg, algo))
                records.append(_error_record(base, exc))
            continue

        for algo in cfg.algorithms:
            base = _base_record(cfg, chash, trial, seed, cidx, label, cond,
                                _algo_label(cfg, algo))
            base["mode"] = "achievability"
            try:
                t0 = time.perf_counter()
                if algo["name"] == "miosr":
                    xi, sols, hyper = _pde_fit_miosr(algo, lib, lib_norm, truth)
                elif algo["name"] == "stlsq":
                    xi, sols, hyper = _pde_fit_stlsq(algo, lib, lib_norm, truth)
                else:
                    raise MiosindyError(
                        f"pde experiments support miosr/stlsq, "
                        f"got {algo['name']!r}")
                fit_seconds = time.perf_counter() - t0

                t0 = time.perf_counter()
                pred = test_lib.theta @ xi
                rmse = float(np.sqrt(np.mean((pred - test_lib.targets) ** 2)))
                report = MetricReport(
                    tpr=true_positivity_rate(truth, xi),
                    coef_error=coefficient_error(truth, xi),
                    rmse=rmse)
                metric_seconds = time.perf_counter() - t0
                rec = _solution_fields(base, xi, sols, hyper, report)
                rec["wall_times"] = {"simulate": sim_seconds,
                                     "library": lib_seconds,
                                     "fit": fit_seconds,
                                     "metrics": metric_seconds}
                records.append(rec)
            except MiosindyError as exc:
                logger.warning("trial %d condition %s algo %s: %s",
                               trial, label, base["algorithm"], exc)
                records.append(_error_record(base, exc))
    return records


# --------------------------------------------------------------------------
# driver


_TRIAL_RUNNERS = {
    "sample_efficiency": _ode_trial,
    "runtime": _ode_trial,
    "robustness": _ode_trial,
    "constraints": _constraints_trial,
    "pde": _pde_trial,
}


def _run_trial(cfg, trial, chash, records_dir):
    runner = _TRIAL_RUNNERS[cfg.experiment]
    try:
        records = runner(cfg, trial, chash)
    except Exception as exc:  # a trial must never kill the experiment
        logger.exception("trial %d failed outright", trial)
        seed = cfg.seed ^ trial
        records = []
        for cidx, (label, cond) in enumerate(_conditions(cfg)):
            for algo in cfg.algorithms:
                base = _base_record(cfg, chash, trial, seed, cidx, label,
                                    cond, _algo_label(cfg, algo))
                records.append(_error_record(base, exc))
    for rec in records:
        io.write_record(rec, records_dir)
    return records


def run_experiment(cfg):
    """Run every (trial, condition, algorithm) cell and persist results.

    Writes <output_dir>/records/*.json as trials complete plus a final
    <output_dir>/summary.csv. Returns the record list; entries with an
    "error" key are failed cells (the run itself continues).
    """
    out_dir = Path(cfg.output_dir)
    records_dir = out_dir / "records"
    records_dir.mkdir(parents=True, exist_ok=True)
    chash = config_hash(cfg)
    logger.info("experiment %s/%s: %d trials, hash %s",
                cfg.experiment, cfg.system, cfg.trials, chash)

    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(_run_trial, cfg, t, chash, records_dir)
                       for t in range(cfg.trials)]
            batches = [f.result() for f in futures]
    else:
        batches = [_run_trial(cfg, t, chash, records_dir)
                   for t in range(cfg.trials)]
    records = [rec for batch in batches for rec in batch]

    rows = aggregate(records)
    io.write_summary_csv(rows, SUMMARY_COLUMNS, out_dir / "summary.csv")
    n_failed = sum(1 for r in records if "error" in r)
    if n_failed:
        logger.warning("%d of %d cells failed", n_failed, len(records))
    return records


def _stderr(values):
    if len(values) < 2:
        return 0.0
    return float(np.std(values, ddof=1) / np.sqrt(len(values)))


def aggregate(records):
    """Reduce records to summary rows: per (algorithm x condition) the mean
    and standard error of log10 RMSE and log10 coefficient error, mean TPR,
    constraint violations when present, and mean fit wall time (last)."""
    good = [r for r in records if "error" not in r]
    groups = {}
    for rec in sorted(good, key=lambda r: (r["experiment"], r["system"],
                                           r["algorithm"],
                                           r["condition_index"], r["trial"])):
        key = (rec["experiment"], rec["system"], rec["algorithm"],
               rec["condition_index"], rec["condition_label"])
        groups.setdefault(key, []).append(rec)

    rows = []
    for key in sorted(groups):
        experiment, system, algorithm, _, label = key
        recs = groups[key]
        series = {}
        for rec in recs:
            m = rec["metrics"]
            series.setdefault("tpr", []).append(float(m["tpr"]))
            series.setdefault("log10_rmse", []).append(
                float(np.log10(max(float(m["rmse"]), _LOG_FLOOR))))
            series.setdefault("log10_coef_error", []).append(
                float(np.log10(max(float(m["coef_error"]), _LOG_FLOOR))))
            for extra in ("violation", "max_violation"):
                if extra in m:
                    series.setdefault(extra, []).append(float(m[extra]))
            series.setdefault("wall_time_fit", []).append(
                float(rec["wall_times"]["fit"]))
        for metric in _METRIC_ORDER:
            if metric not in series:
                continue
            vals = series[metric]
            rows.append({"experiment": experiment, "system": system,
                         "algorithm": algorithm, "condition": label,
                         "metric": metric, "mean": float(np.mean(vals)),
                         "stderr": _stderr(vals), "n": len(vals)})
    return rows


def load_records(directory):
    """Read every record JSON under <directory> (or its records/ child)."""
    directory = Path(directory)
    if (directory / "records").is_dir():
        directory = directory / "records"
    paths = sorted(directory.glob("*.json"))
    records = []
    for path in paths:
        with open(path, "r", encoding="utf-8") as fh:
            records.append(json.load(fh))
    return records


def write_report(records, out_dir):
    """summary.csv plus one plot-ready wide CSV per (experiment, system)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = aggregate(records)
    paths = [io.write_summary_csv(rows, SUMMARY_COLUMNS,
                                  out_dir / "summary.csv")]

    panels = {}
    for row in rows:
        panels.setdefault((row["experiment"], row["system"]), []).append(row)
    for (experiment, system), panel_rows in sorted(panels.items()):
        conditions = []
        algorithms = []
        for row in panel_rows:
            if row["condition"] not in conditions:
                conditions.append(row["condition"])
            if row["algorithm"] not in algorithms:
                algorithms.append(row["algorithm"])
        algorithms.sort()
        metrics = [m for m in _METRIC_ORDER
                   if any(r["metric"] == m for r in panel_rows)]
        cell = {(r["condition"], r["algorithm"], r["metric"]):
                (r["mean"], r["stderr"]) for r in panel_rows}
        columns = ["condition"]
        for algorithm in algorithms:
            for metric in metrics:
                columns.append(f"{algorithm}_{metric}_mean")
                columns.append(f"{algorithm}_{metric}_stderr")
        out_rows = []
        for condition in conditions:
            row = {"condition": condition}
            for algorithm in algorithms:
                for metric in metrics:
                    mean, stderr = cell.get((condition, algorithm, metric),
                                            ("", ""))
                    row[f"{algorithm}_{metric}_mean"] = mean
                    row[f"{algorithm}_{metric}_stderr"] = stderr
            out_rows.append(row)
        paths.append(io.write_summary_csv(
            out_rows, columns, out_dir / f"figure_{experiment}_{system}.csv"))
    return paths
