"""Branch-and-bound sparse regression against an exhaustive-enumeration oracle.

Every optimality claim here is checked against brute force over all supports
of size <= k, so these tests hold the solver to exactness, not plausibility.
"""

import json

import numpy as np
import pytest

from miosindy.errors import (InfeasibleConstraints, InvalidProblem,
                             SingularSupport)
from miosindy.rng import RngStream
from miosindy.solver import (BnbConfig, Constraints, JointSolution,
                             SparseRegressionProblem, objective_value,
                             problem_from_data, solve_joint, solve_sparse,
                             stack_joint, unbias)

from conftest import enumeration_oracle, random_regression_instance


def _assert_matches_oracle(theta, y, lam, k, tol=1e-8):
    problem = problem_from_data(theta, y, lam, k)
    sol = solve_sparse(problem)
    best_obj, best_support = enumeration_oracle(
        theta.T @ theta, theta.T @ y, lam, k)
    scale = max(1.0, abs(best_obj))
    assert sol.status == "Optimal"
    assert sol.objective <= best_obj + tol * scale, (
        f"solver objective {sol.objective} worse than enumeration {best_obj}")
    assert sol.lower_bound <= best_obj + tol * scale, (
        f"lower bound {sol.lower_bound} above true optimum {best_obj}")
    assert sol.gap <= 1e-6 + 1e-12
    assert len(sol.support) <= k
    # xi must be consistent with the reported support and objective
    assert set(np.nonzero(sol.xi)[0]) == set(sol.support)
    assert np.isclose(objective_value(problem, sol.xi), sol.objective,
                      rtol=1e-12, atol=1e-12)
    return sol


def test_small_instances_match_enumeration():
    rng = RngStream(42)
    for _ in range(40):
        theta, y, lam, k = random_regression_instance(
            rng, n_max=40, d_max=10, k_max=4)
        _assert_matches_oracle(theta, y, lam, k)


def test_duplicate_and_near_duplicate_columns():
    """Collinear libraries are the hard case: ties and singular subsets."""
    rng = RngStream(7)
    for trial in range(15):
        n, D, k = 30, 8, 3
        theta = rng.normal(size=(n, D))
        theta[:, 4] = theta[:, 1]                      # exact duplicate
        theta[:, 5] = theta[:, 2] + 1e-7 * theta[:, 3]  # near duplicate
        y = theta[:, [1, 2]] @ np.array([2.0, -1.0]) + 1e-6 * rng.normal(size=n)
        for lam in (0.0, 1e-3):
            _assert_matches_oracle(theta, y, lam, k)


def test_zero_column_instance():
    rng = RngStream(11)
    theta = rng.normal(size=(25, 6))
    theta[:, 3] = 0.0
    y = theta[:, 0] - 0.5 * theta[:, 5]
    _assert_matches_oracle(theta, y, 1e-3, 2)


def test_k_equals_dimension_is_ridge():
    rng = RngStream(12)
    theta = rng.normal(size=(30, 5))
    y = rng.normal(size=30)
    lam = 1e-2
    sol = solve_sparse(problem_from_data(theta, y, lam, 5))
    dense = np.linalg.solve(theta.T @ theta + lam * np.eye(5), theta.T @ y)
    assert np.allclose(sol.xi, dense, rtol=1e-8, atol=1e-10)


def test_k_zero_returns_empty_model():
    rng = RngStream(13)
    theta = rng.normal(size=(20, 4))
    y = rng.normal(size=20)
    sol = solve_sparse(problem_from_data(theta, y, 0.0, 0))
    assert sol.support.size == 0
    assert np.all(sol.xi == 0.0)
    assert sol.objective == pytest.approx(0.0, abs=1e-12)
    assert sol.status == "Optimal"


def test_determinism_across_repeat_solves():
    rng = RngStream(14)
    theta, y, lam, k = random_regression_instance(rng, n_max=50, d_max=12)
    problem = problem_from_data(theta, y, lam, k)
    a = solve_sparse(problem)
    b = solve_sparse(problem)
    assert np.array_equal(a.xi, b.xi)
    assert np.array_equal(a.support, b.support)
    assert a.objective == b.objective
    assert a.nodes_explored == b.nodes_explored


def test_warm_start_does_not_degrade():
    rng = RngStream(15)
    theta, y, lam, k = random_regression_instance(rng, n_max=50, d_max=12)
    problem = problem_from_data(theta, y, lam, k)
    cold = solve_sparse(problem)
    warm = solve_sparse(problem, BnbConfig(warm_start=cold.xi))
    assert warm.status == "Optimal"
    assert warm.objective <= cold.objective + 1e-12 * max(1.0, abs(cold.objective))
    assert warm.nodes_explored <= cold.nodes_explored


def test_node_limit_gives_honest_nonoptimal_status():
    rng = RngStream(16)
    theta = rng.normal(size=(60, 14))
    y = rng.normal(size=60)
    sol = solve_sparse(problem_from_data(theta, y, 1e-3, 5),
                       BnbConfig(node_limit=3))
    assert sol.status in ("TimeLimit", "Heuristic")
    assert sol.gap > 0.0 or not np.isfinite(sol.gap)


def test_trace_log_is_written(tmp_path):
    rng = RngStream(17)
    theta, y, lam, k = random_regression_instance(rng, n_max=30, d_max=8)
    trace = tmp_path / "trace.jsonl"
    solve_sparse(problem_from_data(theta, y, lam, k),
                 BnbConfig(trace_path=str(trace)))
    lines = trace.read_text().strip().splitlines()
    assert len(lines) >= 1
    rec = json.loads(lines[0])
    assert {"lower_bound", "action"} <= set(rec)


def test_equality_constrained_solution_is_feasible_and_optimal():
    """Constrained optimum checked against enumeration with the same KKT
    refit applied to every candidate support."""
    rng = RngStream(18)
    n, D, k = 40, 7, 3
    theta = rng.normal(size=(n, D))
    y = theta[:, [0, 2, 5]] @ np.array([1.5, -2.0, 0.7]) + 0.01 * rng.normal(size=n)
    lam = 1e-3
    # tie coefficients 0 and 2: xi_0 + xi_2 = -0.5
    cons = Constraints(a_mat=np.array([[1.0, 0, 1.0, 0, 0, 0, 0]]),
                       b_vec=np.array([-0.5]))
    sol = solve_sparse(problem_from_data(theta, y, lam, k, cons))
    assert sol.status == "Optimal"
    assert abs(sol.xi[0] + sol.xi[2] + 0.5) <= 1e-8

    # oracle: enumerate supports, solve each KKT restricted to the support,
    # skip supports that cannot satisfy the constraint
    import itertools
    G = theta.T @ theta
    c = theta.T @ y
    best = np.inf
    for size in range(1, k + 1):
        for S in itertools.combinations(range(D), size):
            idx = np.array(S)
            a_s = cons.a_mat[:, idx]
            if np.linalg.matrix_rank(a_s) < cons.a_mat.shape[0]:
                continue
            Dk = len(idx)
            kkt = np.zeros((Dk + 1, Dk + 1))
            kkt[:Dk, :Dk] = G[np.ix_(idx, idx)] + lam * np.eye(Dk)
            kkt[:Dk, Dk:] = a_s.T
            kkt[Dk:, :Dk] = a_s
            rhs = np.concatenate([c[idx], cons.b_vec])
            try:
                z = np.linalg.solve(kkt, rhs)
            except np.linalg.LinAlgError:
                continue
            xi_s = z[:Dk]
            obj = (xi_s @ G[np.ix_(idx, idx)] @ xi_s + lam * xi_s @ xi_s
                   - 2.0 * c[idx] @ xi_s)
            best = min(best, obj)
    assert sol.objective <= best + 1e-8 * max(1.0, abs(best))


def test_inequality_constraint_is_respected():
    rng = RngStream(19)
    n, D = 40, 6
    theta = rng.normal(size=(n, D))
    y = theta[:, 1] * 3.0 + 0.01 * rng.normal(size=n)
    cons = Constraints(a_mat=np.array([[0, 1.0, 0, 0, 0, 0]]),
                       b_vec=np.array([2.0]), senses=("le",))
    sol = solve_sparse(problem_from_data(theta, y, 1e-4, 2, cons))
    assert sol.status == "Optimal"
    assert sol.xi[1] <= 2.0 + 1e-8
    # unconstrained fit would take xi_1 near 3, so the bound must bind
    assert sol.xi[1] == pytest.approx(2.0, abs=1e-6)


def test_infeasible_constraints_raise_with_proof():
    rng = RngStream(20)
    theta = rng.normal(size=(20, 4))
    y = rng.normal(size=20)
    # contradictory equalities on the same coefficient
    cons = Constraints(a_mat=np.array([[1.0, 0, 0, 0], [1.0, 0, 0, 0]]),
                       b_vec=np.array([1.0, 2.0]))
    with pytest.raises(InfeasibleConstraints):
        solve_sparse(problem_from_data(theta, y, 1e-3, 2, cons))


def test_joint_unconstrained_equals_per_dim_when_budget_is_loose():
    """With a budget that covers every dimension's own optimum, the joint
    solve must recover exactly the concatenation of per-dimension solves."""
    rng = RngStream(21)
    n, D, d = 50, 6, 2
    theta = rng.normal(size=(n, D))
    xi_true = np.zeros((D, d))
    xi_true[[0, 3], 0] = [1.0, -2.0]
    xi_true[[2, 4], 1] = [0.5, 1.5]
    targets = theta @ xi_true + 1e-4 * rng.normal(size=(n, d))
    lam = 1e-4

    joint = solve_joint(theta, targets, lam, k_global=4)
    assert isinstance(joint, JointSolution)
    assert joint.stacked.status == "Optimal"

    for i in range(d):
        per = solve_sparse(problem_from_data(theta, targets[:, i], lam, 2))
        assert set(joint.per_dim[i].support) == set(per.support)
        assert np.allclose(joint.per_dim[i].xi, per.xi, rtol=1e-7, atol=1e-9)

    # and the joint optimum matches stacked enumeration of the block problem
    prob = stack_joint(theta.T @ theta, theta.T @ targets, lam, 4)
    best_obj, _ = enumeration_oracle(prob.gram, prob.linear, lam, 4)
    assert joint.stacked.objective <= best_obj + 1e-8 * max(1.0, abs(best_obj))


def test_joint_tight_budget_allocates_across_dimensions():
    """k_global below the sum of per-dim supports forces a tradeoff; the
    result must still match enumeration on the stacked problem."""
    rng = RngStream(22)
    n, D, d = 40, 4, 2
    theta = rng.normal(size=(n, D))
    xi_true = np.zeros((D, d))
    xi_true[[0, 1], 0] = [3.0, 1.0]
    xi_true[[2, 3], 1] = [0.2, 0.1]
    targets = theta @ xi_true + 1e-5 * rng.normal(size=(n, d))
    lam = 0.0

    joint = solve_joint(theta, targets, lam, k_global=3)
    prob = stack_joint(theta.T @ theta, theta.T @ targets, lam, 3)
    best_obj, best_support = enumeration_oracle(prob.gram, prob.linear, lam, 3)
    assert joint.stacked.objective <= best_obj + 1e-8 * max(1.0, abs(best_obj))
    total = sum(len(s.support) for s in joint.per_dim)
    assert total <= 3


def test_unbias_matches_lstsq_oracle():
    rng = RngStream(23)
    theta = rng.normal(size=(30, 6))
    y = theta[:, [1, 4]] @ np.array([2.0, -0.3]) + 0.01 * rng.normal(size=30)
    xi = unbias([1, 4], theta, y)
    coef, *_ = np.linalg.lstsq(theta[:, [1, 4]], y, rcond=None)
    assert np.allclose(xi[[1, 4]], coef, rtol=1e-12)
    assert np.all(xi[[0, 2, 3, 5]] == 0.0)
    assert np.all(unbias([], theta, y) == 0.0)


def test_unbias_rank_deficient_support_raises():
    rng = RngStream(24)
    theta = rng.normal(size=(30, 4))
    theta[:, 2] = theta[:, 0]
    with pytest.raises(SingularSupport):
        unbias([0, 2], theta, rng.normal(size=30))


def test_problem_validation_rejects_bad_inputs():
    rng = RngStream(25)
    theta = rng.normal(size=(10, 3))
    y = rng.normal(size=10)
    G = theta.T @ theta
    c = theta.T @ y
    with pytest.raises(InvalidProblem):
        SparseRegressionProblem(gram=G, linear=c, lam=1e-3, k=7)  # k > D
    with pytest.raises(InvalidProblem):
        SparseRegressionProblem(gram=G, linear=c, lam=1e-3, k=-1)
    bad = G.copy()
    bad[0, 1] += 1.0  # asymmetric
    with pytest.raises(InvalidProblem):
        SparseRegressionProblem(gram=bad, linear=c, lam=1e-3, k=2)
    nan = G.copy()
    nan[0, 0] = np.nan
    with pytest.raises(InvalidProblem):
        SparseRegressionProblem(gram=nan, linear=c, lam=1e-3, k=2)
    with pytest.raises(InvalidProblem):
        BnbConfig(gap_tolerance=0.0)
    with pytest.raises(InvalidProblem):
        BnbConfig(time_limit=-1.0)
    with pytest.raises(InvalidProblem):
        Constraints(a_mat=np.ones((2, 3)), b_vec=np.ones(2),
                    senses=("eq", "bogus"))
