"""Validated dense solvers for ridge and equality-constrained ridge systems.

These are the checked, exception-raising entry points; the branch-and-bound
inner loop calls the raw kernels in :mod:`miosindy.kernels` directly.
"""

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, InfeasibleConstraints, SingularSystem

_SYM_RTOL = 1e-10
_COND_LIMIT = 1e12


def _check_gram(G, c, lam):
    G = np.asarray(G, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise DimensionMismatch(f"gram matrix must be square, got {G.shape}")
    if c.shape != (G.shape[0],):
        raise DimensionMismatch(
            f"linear term has shape {c.shape}, expected ({G.shape[0]},)")
    scale = max(1.0, float(np.abs(G).max(initial=0.0)))
    if float(np.abs(G - G.T).max(initial=0.0)) > _SYM_RTOL * scale:
        raise DimensionMismatch("gram matrix is not symmetric")
    if lam < 0.0:
        raise ValueError("ridge weight must be nonnegative")
    return G, c


def ridge_solve(G, c, lam):
    """Solve (G + lam I) xi = c for symmetric positive semidefinite G.

    Cholesky first; if that fails with lam == 0 the matrix gets a condition
    estimate and, when acceptable, a pivoted symmetric solve. Raises
    SingularSystem when lam == 0 and the system is numerically singular
    (condition estimate at or above 1e12).
    """
    G, c = _check_gram(G, c, lam)
    A = G if lam == 0.0 else G + lam * np.eye(G.shape[0])
    try:
        cf = scipy.linalg.cho_factor(A, check_finite=False)
        xi = scipy.linalg.cho_solve(cf, c, check_finite=False)
    except scipy.linalg.LinAlgError:
        if lam == 0.0 and _cond_estimate(A) >= _COND_LIMIT:
            raise SingularSystem(
                "unregularized system is numerically singular") from None
        xi = scipy.linalg.solve(A, c, assume_a="sym", check_finite=False)
    resid = np.abs(A @ xi - c).max(initial=0.0)
    if not np.isfinite(resid) or resid > 1e-6 * (1.0 + np.abs(c).max(initial=0.0)):
        raise SingularSystem("solve residual check failed")
    return xi


def _cond_estimate(A):
    s = scipy.linalg.svdvals(A)
    if s[-1] == 0.0:
        return np.inf
    return float(s[0] / s[-1])


def constrained_ridge_solve(G, c, lam, a_mat, b_vec):
    """Minimize xi'(G + lam I)xi - 2 c'xi subject to a_mat @ xi = b_vec.

    Solved through the symmetric indefinite KKT system. Raises
    InfeasibleConstraints when the constraints are inconsistent (no xi
    satisfies them), detected by a residual check on the least-squares
    KKT solution.
    """
    G, c = _check_gram(G, c, lam)
    a_mat = np.atleast_2d(np.asarray(a_mat, dtype=np.float64))
    b_vec = np.atleast_1d(np.asarray(b_vec, dtype=np.float64))
    D = G.shape[0]
    if a_mat.shape[1] != D:
        raise DimensionMismatch(
            f"constraint matrix has {a_mat.shape[1]} columns, expected {D}")
    if b_vec.shape != (a_mat.shape[0],):
        raise DimensionMismatch("constraint rhs length mismatch")
    r = a_mat.shape[0]
    if r == 0:
        return ridge_solve(G, c, lam)
    n = D + r
    M = np.zeros((n, n))
    M[:D, :D] = 2.0 * (G + lam * np.eye(D))
    M[:D, D:] = a_mat.T
    M[D:, :D] = a_mat
    rhs = np.concatenate([2.0 * c, b_vec])
    try:
        z = scipy.linalg.solve(M, rhs, assume_a="sym", check_finite=False)
    except scipy.linalg.LinAlgError:
        z, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    xi = z[:D]
    cres = np.abs(a_mat @ xi - b_vec).max(initial=0.0)
    if not np.isfinite(xi).all() or cres > 1e-6 * (1.0 + np.abs(b_vec).max(initial=0.0)):
        raise InfeasibleConstraints(
            "equality constraints are inconsistent on this support")
    return xi
