"""Hyperparameter selection by corrected Akaike information criterion.

Fits candidate models on a training library across a hyperparameter grid,
scores each on held-out validation residuals with AICc, and picks the
minimizer. Ties break toward smaller supports, then earlier grid entries.
Validation always happens in the raw (unnormalized) column basis.
"""

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import baselines, solver
from .errors import DegenerateSampleSize, MiosindyError, ZeroRssWarning
from .library import unscale_coefficients

logger = logging.getLogger("miosindy")

_RSS_FLOOR = 1e-300
_SKIPPABLE = (MiosindyError, np.linalg.LinAlgError)


def aicc(rss, m, k):
    """Corrected AIC for gaussian residuals: m ln(rss/m) + 2k + correction.

    Raises DegenerateSampleSize unless m > k + 2. Nonpositive rss is floored
    at 1e-300 with a ZeroRssWarning (a perfect fit otherwise has no score).
    """
    m = int(m)
    k = int(k)
    if m <= k + 2:
        raise DegenerateSampleSize(
            f"AICc needs m > k + 2 (got m={m}, k={k})")
    if rss <= 0.0:
        warnings.warn("nonpositive residual sum floored at 1e-300", ZeroRssWarning)
        rss = _RSS_FLOOR
    return float(m * np.log(rss / m) + 2.0 * k
                 + 2.0 * (k + 1.0) * (k + 2.0) / (m - k - 2.0))


@dataclass(frozen=True)
class SelectionConfig:
    """Grids and policies for model selection.

    alphas: ridge weights; thresholds: heuristic cut levels; ks: sparsity
    budgets for the exact solver. unbias refits the chosen support by
    ordinary least squares on the training data (raw basis).
    """

    alphas: tuple = (0.0, 1e-5, 1e-3, 1e-2, 0.05, 0.2)
    thresholds: tuple = ()
    ks: tuple = (1, 2, 3, 4, 5)
    unbias: bool = True
    bnb: solver.BnbConfig = field(default_factory=solver.BnbConfig)
    ensemble_n_models: int = 50
    ensemble_mode: str = "bragging"
    ensemble_top_k: int = 0
    ensemble_rng: object = None


@dataclass
class SelectionResult:
    xi: np.ndarray                 # (D, d) raw-basis coefficients
    hyperparams: list              # chosen hyperparameters per dimension
    solutions: list                # chosen SparseSolution per dimension
    aicc_values: list              # chosen AICc per dimension
    n_grid_errors: int = 0


def _raw_theta(lib):
    if lib.scales is None:
        return lib.theta
    return lib.theta * lib.scales


def _grid_points(algorithm, cfg, alphas):
    if algorithm == "miosr":
        return [{"alpha": float(a), "k": int(k)} for a in alphas for k in cfg.ks]
    if algorithm in ("stlsq", "ensemble"):
        return [{"alpha": float(a), "threshold": float(t)}
                for a in alphas for t in cfg.thresholds]
    raise MiosindyError(f"unknown algorithm {algorithm!r}")


def _fit_point(algorithm, point, lib, y_col, cfg, member_index):
    theta = lib.theta
    if algorithm == "miosr":
        gram = np.ascontiguousarray(theta.T @ theta)
        lin = np.ascontiguousarray(theta.T @ y_col)
        problem = solver.SparseRegressionProblem(
            gram=gram, linear=lin, lam=point["alpha"], k=point["k"])
        return solver.solve_sparse(problem, cfg.bnb)
    if algorithm == "stlsq":
        return baselines.stlsq(
            theta, y_col,
            baselines.StlsqConfig(threshold=point["threshold"], lam=point["alpha"]))
    if algorithm == "ensemble":
        if cfg.ensemble_rng is None:
            raise MiosindyError("ensemble selection needs ensemble_rng")
        ens_cfg = baselines.EnsembleConfig(
            base=baselines.StlsqConfig(threshold=point["threshold"],
                                       lam=point["alpha"]),
            rng=cfg.ensemble_rng.child(member_index),
            n_models=cfg.ensemble_n_models,
            mode=cfg.ensemble_mode, top_k=cfg.ensemble_top_k)
        return baselines.ensemble_stlsq(theta, y_col, ens_cfg)
    raise MiosindyError(f"unknown algorithm {algorithm!r}")


class _DimSelector:
    """Tracks the best (AICc, support size, grid order) candidate for one
    target dimension."""

    def __init__(self, train, val, y_train, y_val, cfg):
        self.train = train
        self.raw_train = _raw_theta(train)
        self.val = val
        self.y_train = y_train
        self.y_val = y_val
        self.cfg = cfg
        self.m_val = val.theta.shape[0]
        self.best = None
        self.grid_idx = 0
        self.n_errors = 0

    def offer(self, hyper, sol):
        idx = self.grid_idx
        self.grid_idx += 1
        try:
            if self.cfg.unbias:
                xi_raw = solver.unbias(sol.support, self.raw_train, self.y_train)
            else:
                xi_raw = unscale_coefficients(sol.xi, self.train.scales)
            resid = self.val.theta @ xi_raw - self.y_val
            score = aicc(float(resid @ resid), self.m_val, sol.support.size)
        except _SKIPPABLE as exc:
            self.n_errors += 1
            logger.info("skipping grid point %s: %s", hyper, exc)
            return
        key = (score, int(sol.support.size), idx)
        if self.best is None or key < self.best[0]:
            self.best = (key, dict(hyper), sol, xi_raw)

    def failed_fit(self, hyper, exc):
        self.grid_idx += 1
        self.n_errors += 1
        logger.info("skipping grid point %s (fit failed): %s", hyper, exc)


def select_model(train, val, algorithm, cfg, alphas_per_dim=None):
    """Grid search with dimensionwise AICc selection.

    train and val are candidate libraries with targets attached; val must be
    in the raw basis. Returns a SelectionResult with raw-basis coefficients.
    A grid point that errors is skipped with a log entry.
    """
    if train.targets is None or val.targets is None:
        raise MiosindyError("both libraries need targets for selection")
    d = train.targets.shape[1]
    D = train.theta.shape[1]

    xi_out = np.zeros((D, d))
    chosen_hyper = []
    chosen_sol = []
    chosen_aicc = []
    n_errors = 0

    for dim in range(d):
        y_train = train.targets[:, dim]
        y_val = val.targets[:, dim]
        alphas = cfg.alphas if alphas_per_dim is None else alphas_per_dim[dim]
        sel = _DimSelector(train, val, y_train, y_val, cfg)
        if algorithm == "ssr":
            for alpha in alphas:
                try:
                    path = baselines.ssr(train.theta, y_train, alpha)
                except _SKIPPABLE as exc:
                    sel.failed_fit({"alpha": alpha}, exc)
                    continue
                for sol in path:
                    sel.offer(dict(sol.hyperparams), sol)
        else:
            for member_index, point in enumerate(_grid_points(algorithm, cfg, alphas)):
                try:
                    sol = _fit_point(algorithm, point, train, y_train, cfg,
                                     member_index)
                except _SKIPPABLE as exc:
                    sel.failed_fit(point, exc)
                    continue
                sel.offer(point, sol)
        if sel.best is None:
            raise MiosindyError(
                f"every {algorithm} grid point failed on dimension {dim}")
        key, hyper, sol, xi_raw = sel.best
        xi_out[:, dim] = xi_raw
        chosen_hyper.append(hyper)
        chosen_sol.append(sol)
        chosen_aicc.append(key[0])
        n_errors += sel.n_errors

    return SelectionResult(xi=xi_out, hyperparams=chosen_hyper,
                           solutions=chosen_sol, aicc_values=chosen_aicc,
                           n_grid_errors=n_errors)


def select_joint(train, val, cfg, k_grid, constraints=None):
    """Joint-model selection: one global sparsity budget, pooled AICc.

    Fits the stacked problem for every (alpha, k_global) pair and scores with
    a single AICc over all dimensions' validation residuals. Coefficients are
    NOT unbiased (a plain refit would break the side constraints).
    """
    if train.targets is None or val.targets is None:
        raise MiosindyError("both libraries need targets for selection")
    d = train.targets.shape[1]
    m_val = val.theta.shape[0] * d
    best = None
    n_errors = 0
    grid = [(float(a), int(k)) for a in cfg.alphas for k in k_grid]
    for grid_idx, (alpha, k_global) in enumerate(grid):
        try:
            joint = solver.solve_joint(train.theta, train.targets, alpha,
                                       k_global, constraints, cfg.bnb)
            xi = np.stack([unscale_coefficients(s.xi, train.scales)
                           for s in joint.per_dim], axis=1)
            resid = val.theta @ xi - val.targets
            k_total = int(joint.stacked.support.size)
            score = aicc(float(np.sum(resid * resid)), m_val, k_total)
        except _SKIPPABLE as exc:
            n_errors += 1
            logger.info("skipping joint grid point (alpha=%g, k=%d): %s",
                        alpha, k_global, exc)
            continue
        key = (score, int(joint.stacked.support.size), grid_idx)
        if best is None or key < best[0]:
            best = (key, {"alpha": alpha, "k_global": k_global}, joint, xi)
    if best is None:
        raise MiosindyError("every joint grid point failed")
    key, hyper, joint, xi = best
    result = SelectionResult(xi=xi, hyperparams=[dict(hyper) for _ in range(d)],
                             solutions=list(joint.per_dim),
                             aicc_values=[key[0]] * d,
                             n_grid_errors=n_errors)
    return result, joint
