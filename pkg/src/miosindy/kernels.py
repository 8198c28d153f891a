"""Numerical hot loops, compiled with numba when available.

Everything here is written in the numpy subset numba supports, decorated with
:func:`miosindy._accel.njit`. With ``MIOSINDY_DISABLE_NUMBA=1`` (or without
numba installed) the identical source runs as plain numpy; the inner operations
are vectorized so the fallback stays usable on desk-scale problems.
"""

import numpy as np

from ._accel import njit

DIVERGE_LIMIT = 1.0e6


# ---------------------------------------------------------------------------
# Right-hand sides of the benchmark ODE systems. Signature: rhs(x, params).
# ---------------------------------------------------------------------------

@njit(cache=True)
def rhs_lorenz(x, p):
    out = np.empty(3)
    out[0] = p[0] * (x[1] - x[0])
    out[1] = x[0] * (p[1] - x[2]) - x[1]
    out[2] = x[0] * x[1] - p[2] * x[2]
    return out


@njit(cache=True)
def rhs_hopf(x, p):
    # p = (mu, omega, amp)
    r2 = x[0] * x[0] + x[1] * x[1]
    out = np.empty(2)
    out[0] = p[0] * x[0] + p[1] * x[1] - p[2] * x[0] * r2
    out[1] = -p[1] * x[0] + p[0] * x[1] - p[2] * x[1] * r2
    return out


@njit(cache=True)
def rhs_mhd(x, p):
    # Inviscid, unforced triadic MHD interaction; x = (V1, V2, V3, B1, B2, B3).
    out = np.empty(6)
    out[0] = 4.0 * (x[1] * x[2] - x[4] * x[5])
    out[1] = -7.0 * (x[0] * x[2] - x[3] * x[5])
    out[2] = 3.0 * (x[0] * x[1] - x[3] * x[4])
    out[3] = 2.0 * (x[5] * x[1] - x[2] * x[4])
    out[4] = 5.0 * (x[2] * x[3] - x[5] * x[0])
    out[5] = 9.0 * (x[0] * x[4] - x[3] * x[1])
    return out


@njit(cache=True)
def rhs_duffing(x, p):
    # Conservative 2-dof oscillator, x = (q1, q2, p1, p2); p = (omega, alpha).
    r2 = x[0] * x[0] + x[1] * x[1]
    out = np.empty(4)
    out[0] = x[2]
    out[1] = x[3]
    out[2] = p[0] * x[0] - p[1] * x[0] * r2
    out[3] = p[0] * x[1] - p[1] * x[1] * r2
    return out


@njit(cache=True)
def rhs_vanderpol(x, p):
    out = np.empty(2)
    out[0] = x[1]
    out[1] = p[0] * (1.0 - x[0] * x[0]) * x[1] - x[0]
    return out


@njit(cache=True)
def rhs_lotka(x, p):
    # p = (p1, p2); predator-prey with fixed death rate 2*p1.
    out = np.empty(2)
    out[0] = p[0] * x[0] - p[1] * x[0] * x[1]
    out[1] = p[1] * x[0] * x[1] - 2.0 * p[0] * x[1]
    return out


@njit(cache=True)
def rhs_rossler(x, p):
    # p = (a, b, c)
    out = np.empty(3)
    out[0] = -x[1] - x[2]
    out[1] = x[0] + p[0] * x[1]
    out[2] = p[1] + x[2] * (x[0] - p[2])
    return out


# ---------------------------------------------------------------------------
# Fixed-step integration.
# ---------------------------------------------------------------------------

@njit
def rk4_drive(rhs, x0, n_steps, dt, params, substeps):
    """Classic RK4. Returns (states, steps_completed).

    ``states`` has ``n_steps + 1`` rows sampled every ``dt``; each sample
    interval is integrated with ``substeps`` internal RK4 steps of size
    ``dt / substeps``, which drops the flow error by substeps**4. Rows past
    ``steps_completed`` are untrusted when the state diverged (non-finite
    or beyond DIVERGE_LIMIT).
    """
    d = x0.shape[0]
    out = np.empty((n_steps + 1, d))
    out[0] = x0
    x = x0.copy()
    h = dt / substeps
    for s in range(n_steps):
        for _ in range(substeps):
            k1 = rhs(x, params)
            k2 = rhs(x + (0.5 * h) * k1, params)
            k3 = rhs(x + (0.5 * h) * k2, params)
            k4 = rhs(x + h * k3, params)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        ok = True
        for j in range(d):
            if not np.isfinite(x[j]) or np.abs(x[j]) > DIVERGE_LIMIT:
                ok = False
        if not ok:
            return out, s
        out[s + 1] = x
    return out, n_steps


# ---------------------------------------------------------------------------
# Candidate feature evaluation.
# ---------------------------------------------------------------------------

@njit(cache=True)
def eval_monomials(states, expons):
    """Evaluate monomial columns prod_v x_v^e_{t,v} for every sample.

    states: (n, d) float64, expons: (D, d) int64. Returns (n, D).
    Powers are built by repeated multiply; exponents are small.
    """
    n = states.shape[0]
    d = states.shape[1]
    nterms = expons.shape[0]
    out = np.ones((n, nterms))
    for t in range(nterms):
        for v in range(d):
            e = expons[t, v]
            for _ in range(e):
                out[:, t] = out[:, t] * states[:, v]
    return out


# ---------------------------------------------------------------------------
# Quadratic subproblems for the branch-and-bound solver.
#
# All objectives are xi' (G + lam I) xi - 2 c' xi restricted to an index set.
# c always lies in the range of G for Gram matrices built from data, so the
# eigendecomposition pseudo-solve below returns a true minimizer even when the
# restricted matrix is singular (lam == 0 with collinear columns).
# ---------------------------------------------------------------------------

@njit(cache=True)
def sym_pinv_solve(A, b):
    """Minimum-norm solution of symmetric A x = b via eigendecomposition."""
    w, V = np.linalg.eigh(A)
    m = w.shape[0]
    wmax = 0.0
    for i in range(m):
        if np.abs(w[i]) > wmax:
            wmax = np.abs(w[i])
    tol = 1e-12 * wmax
    y = V.T @ b
    for i in range(m):
        if np.abs(w[i]) > tol:
            y[i] = y[i] / w[i]
        else:
            y[i] = 0.0
    return V @ y


@njit(cache=True)
def node_solve(G, c, lam, idx):
    """Ridge minimizer restricted to columns idx.

    Returns (xi_on_idx, objective). lam > 0 uses a direct solve (the matrix is
    positive definite); lam == 0 goes through the eigendecomposition route,
    which never raises on singular input.
    """
    m = idx.shape[0]
    A = np.empty((m, m))
    b = np.empty(m)
    for i in range(m):
        b[i] = c[idx[i]]
        for j in range(m):
            A[i, j] = G[idx[i], idx[j]]
        A[i, i] += lam
    if lam > 0.0:
        xi = np.linalg.solve(A, b)
    else:
        xi = sym_pinv_solve(A, b)
    obj = xi @ (A @ xi) - 2.0 * (b @ xi)
    return xi, obj


@njit(cache=True)
def kkt_node_solve(G, c, lam, idx, amat, bvec):
    """Equality-constrained ridge minimizer restricted to columns idx.

    Constraint rows use the full-width matrix; eliminated coordinates are
    implicitly zero, so only the idx columns of amat enter. Returns
    (xi_on_idx, objective, feasible). ``feasible`` is False when the KKT
    system is inconsistent, which for these objectives happens exactly when
    no point on the restricted support satisfies the constraints.
    """
    m = idx.shape[0]
    r = amat.shape[0]
    n = m + r
    M = np.zeros((n, n))
    rhs = np.empty(n)
    for i in range(m):
        rhs[i] = 2.0 * c[idx[i]]
        for j in range(m):
            M[i, j] = 2.0 * G[idx[i], idx[j]]
        M[i, i] += 2.0 * lam
    for a in range(r):
        rhs[m + a] = bvec[a]
        for j in range(m):
            M[m + a, j] = amat[a, idx[j]]
            M[j, m + a] = amat[a, idx[j]]
    z = sym_pinv_solve(M, rhs)
    res = M @ z - rhs
    scale = 1.0
    rnorm = 0.0
    for i in range(n):
        if np.abs(rhs[i]) > scale:
            scale = np.abs(rhs[i])
        if np.abs(res[i]) > rnorm:
            rnorm = np.abs(res[i])
    feasible = rnorm <= 1e-6 * scale
    xi = z[:m].copy()
    obj = 0.0
    for i in range(m):
        acc = lam * xi[i]
        for j in range(m):
            acc += G[idx[i], idx[j]] * xi[j]
        obj += xi[i] * acc - 2.0 * c[idx[i]] * xi[i]
    return xi, obj, feasible


# ---------------------------------------------------------------------------
# Weak-form assembly over trajectory windows.
# ---------------------------------------------------------------------------

@njit(cache=True)
def weak_ode_assemble(theta, states, starts, wphi, wdphi):
    """Integrate candidate columns and targets against a test function.

    theta: (n, D) candidate values on the full trajectory; states: (n, d);
    starts: (K,) window start indices; wphi / wdphi: (L,) quadrature weights
    already multiplied by phi and dphi/dt. Returns (Q, q0) where
    Q[k, i] = sum_j wphi[j] theta[s+j, i] and q0[k, m] = -sum_j wdphi[j] x_m.
    """
    K = starts.shape[0]
    L = wphi.shape[0]
    Q = np.empty((K, theta.shape[1]))
    q0 = np.empty((K, states.shape[1]))
    for k in range(K):
        s = starts[k]
        Q[k, :] = wphi @ theta[s:s + L, :]
        q0[k, :] = -(wdphi @ states[s:s + L, :])
    return Q, q0
