"""Timing comparison: jitted kernels vs the identical source as plain numpy.

Each kernel in miosindy.kernels is written once; numba compiles it unless
MIOSINDY_DISABLE_NUMBA is set. This script times the compiled dispatcher
against the underlying python function (``py_func``) in one process, so
both paths see identical inputs. Run from the repository root:

    python3 benchmarks/bench_numba.py --repeats 5
"""

import argparse
import time

import numpy as np

from miosindy import kernels
from miosindy._accel import NUMBA_ENABLED, plain
from miosindy.library import monomial_exponents
from miosindy.rng import RngStream
from miosindy.solver import BnbConfig, SparseRegressionProblem, solve_sparse
from miosindy.systems import get_system, rk4_integrate, sample_initial_condition
from miosindy.weak import WeakConfig, weak_form


def _time(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_eval_monomials(traj, repeats):
    expons = np.asarray(monomial_exponents(3, 5, True), dtype=np.int64)
    states = np.ascontiguousarray(traj.states)
    jitted = lambda: kernels.eval_monomials(states, expons)
    fallback = lambda: plain(kernels.eval_monomials)(states, expons)
    jitted()  # compile outside the timer
    return _time(jitted, repeats), _time(fallback, repeats)


def bench_rk4(system, x0, repeats):
    params = np.ascontiguousarray(system.params)
    jitted = lambda: kernels.rk4_drive(system.rhs, x0, 5000, 0.002, params, 1)
    py_rhs = plain(system.rhs)
    fallback = lambda: plain(kernels.rk4_drive)(py_rhs, x0, 5000, 0.002, params, 1)
    jitted()
    return _time(jitted, repeats), _time(fallback, repeats)


def bench_node_solve(traj, repeats):
    expons = np.asarray(monomial_exponents(3, 5, True), dtype=np.int64)
    theta = kernels.eval_monomials(np.ascontiguousarray(traj.states), expons)
    y = np.ascontiguousarray(theta[:, 1] - 0.5 * theta[:, 5])
    G = np.ascontiguousarray(theta.T @ theta)
    c = np.ascontiguousarray(theta.T @ y)
    idx = np.arange(8, dtype=np.int64)

    def many(fn):
        def run():
            for lo in range(0, 40):
                fn(G, c, 1e-3, idx + lo % 16)
        return run

    jitted = many(kernels.node_solve)
    fallback = many(plain(kernels.node_solve))
    kernels.node_solve(G, c, 1e-3, idx)
    return _time(jitted, repeats), _time(fallback, repeats)


def bench_weak_assembly(traj, repeats):
    spec = {"degree": 5, "include_bias": True}

    def run_with(seed):
        def run():
            weak_form(spec, traj, WeakConfig(800, 200, rng=RngStream(seed)))
        return run

    # weak_form calls the module-level kernel; flip it temporarily for the
    # fallback measurement so both paths run the same orchestration code.
    jitted = run_with(11)
    jitted()
    t_jit = _time(jitted, repeats)
    saved = kernels.weak_ode_assemble
    kernels.weak_ode_assemble = plain(saved)
    try:
        t_py = _time(run_with(11), repeats)
    finally:
        kernels.weak_ode_assemble = saved
    return t_jit, t_py


def bench_bnb(traj, repeats):
    """End-to-end branch-and-bound; node solves dominate the runtime."""
    expons = np.asarray(monomial_exponents(3, 5, True), dtype=np.int64)
    theta = kernels.eval_monomials(np.ascontiguousarray(traj.states), expons)
    scales = np.sqrt(np.sum(theta ** 2, axis=0))
    theta = theta / scales
    y = np.ascontiguousarray(traj.states[:, 0])
    problem = SparseRegressionProblem(
        gram=np.ascontiguousarray(theta.T @ theta),
        linear=np.ascontiguousarray(theta.T @ y), lam=1e-3, k=4)

    def run():
        solve_sparse(problem, BnbConfig())

    run()
    t_jit = _time(run, repeats)
    saved_node, saved_kkt = kernels.node_solve, kernels.kkt_node_solve
    kernels.node_solve = plain(saved_node)
    kernels.kkt_node_solve = plain(saved_kkt)
    try:
        t_py = _time(run, repeats)
    finally:
        kernels.node_solve, kernels.kkt_node_solve = saved_node, saved_kkt
    return t_jit, t_py


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5,
                        help="take the best of this many runs (default 5)")
    parser.add_argument("--seconds", type=float, default=10.0,
                        help="trajectory length driving the problem sizes")
    args = parser.parse_args(argv)

    if not NUMBA_ENABLED:
        print("numba is disabled (MIOSINDY_DISABLE_NUMBA set or not installed); "
              "both columns below run the plain-numpy path.")

    system = get_system("lorenz")
    x0 = sample_initial_condition(system, RngStream(0))
    traj = rk4_integrate(system, x0, args.seconds, 0.002)

    rows = [
        ("monomial evaluation (5001x56)", *bench_eval_monomials(traj, args.repeats)),
        ("rk4 drive (5000 steps)", *bench_rk4(system, x0, args.repeats)),
        ("ridge node solves (40x 8-var)", *bench_node_solve(traj, args.repeats)),
        ("weak assembly (800x200)", *bench_weak_assembly(traj, args.repeats)),
        ("branch-and-bound (D=56, k=4)", *bench_bnb(traj, args.repeats)),
    ]

    name_w = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{name_w}}  {'jitted':>10}  {'numpy':>10}  {'speedup':>8}")
    for name, t_jit, t_py in rows:
        ratio = t_py / t_jit if t_jit > 0 else float("inf")
        print(f"{name:<{name_w}}  {t_jit * 1e3:>8.2f}ms  {t_py * 1e3:>8.2f}ms  "
              f"{ratio:>7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
