"""Heuristic sparse regression baselines: STLSQ, SSR, and ensemble STLSQ.

All three return SparseSolution objects with status "Heuristic"; they carry
no optimality certificate, so gap and lower_bound are NaN.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import TooFewSamples
from .solver import STATUS_HEURISTIC, SparseSolution


@dataclass(frozen=True)
class StlsqConfig:
    threshold: float
    lam: float = 0.0
    max_iter: int = 20


@dataclass(frozen=True)
class EnsembleConfig:
    """Row-bootstrap ensembling of STLSQ.

    mode "bragging" takes entrywise median coefficients; mode "library"
    selects the top_k terms by inclusion probability and reports the median
    coefficients on that support.
    """

    base: StlsqConfig
    rng: object
    n_models: int = 50
    mode: str = "bragging"
    top_k: int = 0

    def __post_init__(self):
        if self.mode not in ("bragging", "library"):
            raise ValueError(f"unknown ensemble mode {self.mode!r}")
        if self.mode == "library" and self.top_k < 1:
            raise ValueError("library mode needs top_k >= 1")
        if self.n_models < 1:
            raise ValueError("n_models must be positive")


def _heuristic_solution(xi, G, c, lam):
    obj = float(xi @ (G @ xi) + lam * (xi @ xi) - 2.0 * (c @ xi))
    return SparseSolution(
        xi=xi, support=np.nonzero(xi)[0].astype(np.int64), objective=obj,
        lower_bound=np.nan, gap=np.nan, status=STATUS_HEURISTIC)


def _ridge_on(G, c, lam, active):
    idx = np.ascontiguousarray(active, dtype=np.int64)
    xi_sub, _ = kernels.node_solve(G, c, lam, idx)
    return xi_sub


def stlsq(theta, y, cfg):
    """Sequentially thresholded least squares.

    Ridge fit, zero out coefficients below the threshold, refit on the
    survivors; stop when the active set stabilizes, repeats, or max_iter is
    reached. An empty active set is a valid all-zero model, not an error.
    """
    theta = np.asarray(theta, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    G = np.ascontiguousarray(theta.T @ theta)
    c = np.ascontiguousarray(theta.T @ y)
    D = theta.shape[1]
    active = np.arange(D, dtype=np.int64)
    xi = np.zeros(D)
    seen = set()
    for _ in range(cfg.max_iter):
        fit = _ridge_on(G, c, cfg.lam, active)
        keep = np.abs(fit) >= cfg.threshold
        xi = np.zeros(D)
        xi[active[keep]] = fit[keep]
        new_active = active[keep]
        if new_active.size == 0:
            xi = np.zeros(D)
            break
        key = frozenset(int(i) for i in new_active)
        if new_active.size == active.size and np.array_equal(new_active, active):
            break
        if key in seen:
            active = new_active
            fit = _ridge_on(G, c, cfg.lam, active)
            xi = np.zeros(D)
            xi[active] = fit
            break
        seen.add(key)
        active = new_active
    else:
        # max_iter exhausted: final refit on the last active set
        fit = _ridge_on(G, c, cfg.lam, active)
        xi = np.zeros(D)
        xi[active] = fit
    sol = _heuristic_solution(xi, G, c, cfg.lam)
    sol.hyperparams = {"threshold": cfg.threshold, "alpha": cfg.lam}
    return sol


def ssr(theta, y, lam):
    """Stepwise sparse regression: backward elimination path.

    Starts from the full ridge fit and repeatedly drops the smallest
    magnitude active coefficient (ties: lowest index), refitting after each
    drop. Returns one solution per sparsity level D, D-1, ..., 1.
    """
    theta = np.asarray(theta, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    G = np.ascontiguousarray(theta.T @ theta)
    c = np.ascontiguousarray(theta.T @ y)
    D = theta.shape[1]
    active = np.arange(D, dtype=np.int64)
    path = []
    while active.size >= 1:
        fit = _ridge_on(G, c, lam, active)
        xi = np.zeros(D)
        xi[active] = fit
        sol = _heuristic_solution(xi, G, c, lam)
        sol.hyperparams = {"alpha": lam, "size": int(active.size)}
        path.append(sol)
        if active.size == 1:
            break
        drop = int(np.lexsort((active, np.abs(fit)))[0])
        active = np.delete(active, drop)
    return path


def ensemble_stlsq(theta, y, cfg):
    """Bootstrap-ensembled STLSQ over data rows.

    Each member fits on n rows drawn with replacement from its own child
    random stream, so members are reproducible and order-independent.
    """
    theta = np.asarray(theta, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, D = theta.shape
    if n < 10:
        raise TooFewSamples("ensembling needs at least 10 rows")
    coefs = np.empty((cfg.n_models, D))
    for i in range(cfg.n_models):
        rows = cfg.rng.child(i).integers(0, n, size=n)
        coefs[i] = stlsq(theta[rows], y[rows], cfg.base).xi
    median = np.median(coefs, axis=0)
    if cfg.mode == "bragging":
        xi = median
    else:
        inclusion = np.mean(coefs != 0.0, axis=0)
        order = np.lexsort((np.arange(D), -inclusion))
        support = np.sort(order[:cfg.top_k])
        xi = np.zeros(D)
        xi[support] = median[support]
    G = theta.T @ theta
    c = theta.T @ y
    sol = _heuristic_solution(xi, G, c, cfg.base.lam)
    sol.hyperparams = {"threshold": cfg.base.threshold, "alpha": cfg.base.lam,
                       "n_models": cfg.n_models, "mode": cfg.mode}
    return sol
