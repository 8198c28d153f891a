"""Model quality metrics: support recovery, coefficient error, forecast RMSE."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch
from .library import evaluate_monomials, monomial_exponents


@dataclass
class MetricReport:
    tpr: float = np.nan
    coef_error: float = np.nan
    rmse: float = np.nan
    aicc: float = np.nan
    extras: dict = field(default_factory=dict)

    def to_dict(self):
        out = {"tpr": self.tpr, "coef_error": self.coef_error,
               "rmse": self.rmse, "aicc": self.aicc}
        out.update(self.extras)
        return out


def _as_matrix_pair(true_xi, est_xi):
    a = np.asarray(true_xi, dtype=np.float64)
    b = np.asarray(est_xi, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"coefficient shapes differ: {a.shape} vs {b.shape}")
    return a, b


def true_positivity_rate(true_xi, est_xi):
    """Jaccard overlap of the nonzero supports, pooled over all dimensions.

    1.0 when both supports are empty; symmetric in its arguments.
    """
    a, b = _as_matrix_pair(true_xi, est_xi)
    sa = a != 0.0
    sb = b != 0.0
    union = np.logical_or(sa, sb).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(sa, sb).sum() / union)


def coefficient_error(true_xi, est_xi):
    """Relative Frobenius error ||true - est||_F / ||true||_F."""
    a, b = _as_matrix_pair(true_xi, est_xi)
    denom = np.linalg.norm(a)
    if denom == 0.0:
        return 0.0 if np.linalg.norm(b) == 0.0 else np.inf
    return float(np.linalg.norm(a - b) / denom)


def derivative_rmse(est_xi, system, test_trajectories, degree, include_bias=True):
    """Mean RMSE between predicted and exact derivatives on held-out paths.

    For each test trajectory, compares Theta(X) @ est_xi against the true
    right-hand side evaluated along the same states; returns the mean of the
    per-trajectory RMSEs.
    """
    est_xi = np.asarray(est_xi, dtype=np.float64)
    exps = monomial_exponents(system.dim, degree, include_bias)
    if est_xi.shape[0] != len(exps):
        raise ShapeMismatch(
            f"coefficients have {est_xi.shape[0]} rows, library has {len(exps)}")
    out = []
    for traj in test_trajectories:
        theta = evaluate_monomials(traj.states, exps)
        pred = theta @ est_xi
        truth = np.stack([system.rhs_at(x) for x in traj.states])
        out.append(float(np.sqrt(np.mean((pred - truth) ** 2))))
    return float(np.mean(out))


def constraint_violation(a_mat, b_vec, xi_stacked, mode="mean_l1"):
    """Violation of A xi = b: mean absolute per row, or the max."""
    a_mat = np.asarray(a_mat, dtype=np.float64)
    b_vec = np.asarray(b_vec, dtype=np.float64)
    xi = np.asarray(xi_stacked, dtype=np.float64).reshape(-1)
    resid = a_mat @ xi - b_vec
    if mode == "mean_l1":
        return float(np.abs(resid).sum() / max(1, resid.size))
    if mode == "max":
        return float(np.abs(resid).max(initial=0.0))
    raise ValueError(f"unknown violation mode {mode!r}")
