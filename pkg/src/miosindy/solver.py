"""Exact cardinality-constrained sparse ridge regression by branch-and-bound.

The problem: minimize xi' (G + lam I) xi - 2 c' xi subject to ||xi||_0 <= k
and optional linear side constraints A xi {=,<=} b. Nodes carry a partition
of the variables into forced-nonzero (S_in), eliminated (S_out), and free;
support membership is handled structurally (eliminated variables leave the
system), never through big-M penalties.

Bound logic: the node relaxation drops the cardinality constraint and solves
ridge over the non-eliminated variables, so its objective lower-bounds every
completion of the node. Incumbents come from refitting on S_in plus the
largest-magnitude free relaxation coefficients. Exploration is best-first by
lower bound with deterministic tie-breaking, so the search is exactly
reproducible.
"""

import heapq
import itertools
import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import (DimensionMismatch, InfeasibleConstraints, InvalidProblem,
                     SingularSupport)

_ABS_PRUNE = 1e-9
_FEAS_TOL = 1e-8
_MAX_LE_ROWS = 8

STATUS_OPTIMAL = "Optimal"
STATUS_TIME_LIMIT = "TimeLimit"
STATUS_HEURISTIC = "Heuristic"


@dataclass(frozen=True)
class Constraints:
    """Linear side constraints a_mat @ xi (sense) b_vec, row by row."""

    a_mat: np.ndarray
    b_vec: np.ndarray
    senses: tuple = ()

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a_mat, dtype=np.float64))
        b = np.atleast_1d(np.asarray(self.b_vec, dtype=np.float64))
        if a.shape[0] != b.shape[0]:
            raise InvalidProblem("constraint rows and rhs length differ")
        senses = self.senses or ("eq",) * a.shape[0]
        if isinstance(senses, str):
            senses = (senses,) * a.shape[0]
        if len(senses) != a.shape[0] or any(s not in ("eq", "le") for s in senses):
            raise InvalidProblem("senses must be 'eq'/'le', one per row")
        if sum(s == "le" for s in senses) > _MAX_LE_ROWS:
            raise InvalidProblem(
                f"at most {_MAX_LE_ROWS} inequality rows are supported")
        object.__setattr__(self, "a_mat", a)
        object.__setattr__(self, "b_vec", b)
        object.__setattr__(self, "senses", tuple(senses))

    @property
    def n_rows(self):
        return self.a_mat.shape[0]

    def split(self):
        senses = np.array(self.senses)
        eq = senses == "eq"
        return (self.a_mat[eq], self.b_vec[eq],
                self.a_mat[~eq], self.b_vec[~eq])


@dataclass(frozen=True)
class SparseRegressionProblem:
    """Quadratic data (gram, linear), ridge weight, sparsity budget, and
    optional side constraints / block structure (joint mode)."""

    gram: np.ndarray
    linear: np.ndarray
    lam: float = 0.0
    k: int = 0
    constraints: object = None
    groups: tuple = ()

    def __post_init__(self):
        G = np.ascontiguousarray(np.asarray(self.gram, dtype=np.float64))
        c = np.ascontiguousarray(np.asarray(self.linear, dtype=np.float64))
        if G.ndim != 2 or G.shape[0] != G.shape[1]:
            raise InvalidProblem("gram matrix must be square")
        if c.shape != (G.shape[0],):
            raise InvalidProblem("linear term must match gram dimension")
        if not np.isfinite(G).all() or not np.isfinite(c).all():
            raise InvalidProblem("non-finite problem data")
        scale = max(1.0, np.abs(G).max(initial=0.0))
        if np.abs(G - G.T).max(initial=0.0) > 1e-10 * scale:
            raise InvalidProblem("gram matrix must be symmetric")
        if self.lam < 0:
            raise InvalidProblem("ridge weight must be nonnegative")
        if self.k < 0 or int(self.k) != self.k:
            raise InvalidProblem("sparsity budget must be a nonnegative integer")
        if self.k > G.shape[0]:
            raise InvalidProblem(
                f"sparsity budget {self.k} exceeds dimension {G.shape[0]}")
        if self.constraints is not None and \
                self.constraints.a_mat.shape[1] != G.shape[0]:
            raise InvalidProblem("constraint width must match dimension")
        object.__setattr__(self, "gram", G)
        object.__setattr__(self, "linear", c)
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def dim(self):
        return self.gram.shape[0]


@dataclass(frozen=True)
class BnbConfig:
    gap_tolerance: float = 1e-6
    time_limit: float = 30.0
    node_limit: int = 0          # 0 = unlimited
    warm_start: object = None    # coefficient vector seeding the incumbent
    big_m: object = None         # optional |coef| clamp guiding the heuristics
    trace_path: object = None    # JSONL node log

    def __post_init__(self):
        if self.gap_tolerance <= 0:
            raise InvalidProblem("gap_tolerance must be positive")
        if self.time_limit <= 0:
            raise InvalidProblem("time_limit must be positive")


@dataclass
class SparseSolution:
    xi: np.ndarray
    support: np.ndarray
    objective: float
    lower_bound: float
    gap: float
    status: str
    nodes_explored: int = 0
    wall_time: float = 0.0
    hyperparams: dict = field(default_factory=dict)


def problem_from_data(theta, y, lam, k, constraints=None):
    """Build the gram form of the objective from raw regression data."""
    theta = np.asarray(theta, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if theta.ndim != 2 or y.shape != (theta.shape[0],):
        raise DimensionMismatch("theta must be (n, D) and y (n,)")
    return SparseRegressionProblem(gram=theta.T @ theta, linear=theta.T @ y,
                                   lam=lam, k=k, constraints=constraints)


def objective_value(problem, xi):
    """Exact objective xi'(G + lam I)xi - 2 c'xi of a coefficient vector."""
    G, c, lam = problem.gram, problem.linear, problem.lam
    return float(xi @ (G @ xi) + lam * (xi @ xi) - 2.0 * (c @ xi))


class _Search:
    """One branch-and-bound run. Not reusable."""

    def __init__(self, problem, cfg):
        self.problem = problem
        self.cfg = cfg
        self.G = problem.gram
        self.c = problem.linear
        self.lam = problem.lam
        self.k = problem.k
        self.D = problem.dim
        con = problem.constraints
        if con is None or con.n_rows == 0:
            self.a_eq = self.a_le = None
        else:
            a_eq, b_eq, a_le, b_le = con.split()
            self.a_eq = np.ascontiguousarray(a_eq) if a_eq.shape[0] else None
            self.b_eq = np.ascontiguousarray(b_eq) if a_eq.shape[0] else None
            self.a_le = np.ascontiguousarray(a_le) if a_le.shape[0] else None
            self.b_le = np.ascontiguousarray(b_le) if a_le.shape[0] else None
        self.nodes = 0
        self.ub = np.inf
        self.best_xi = None
        self.min_pruned = np.inf
        self.trace = [] if cfg.trace_path else None
        if cfg.big_m is not None:
            self.big_m = float(np.atleast_1d(cfg.big_m).max())
        else:
            self.big_m = None

    # -- node algebra -----------------------------------------------------

    def _relax(self, idx):
        """Relaxation over the non-eliminated index set.

        Returns (xi_on_idx, lower_bound, feasible). Infeasible means the
        side constraints admit no point supported on idx, which makes the
        whole subtree infeasible.
        """
        if self.a_eq is None and self.a_le is None:
            xi, obj = kernels.node_solve(self.G, self.c, self.lam, idx)
            return xi, obj, True
        if self.a_le is None:
            xi, obj, ok = kernels.kkt_node_solve(
                self.G, self.c, self.lam, idx, self.a_eq, self.b_eq)
            return xi, obj, ok
        return self._relax_with_inequalities(idx)

    def _relax_with_inequalities(self, idx):
        """Active-set enumeration over the inequality rows (= at most 2^m
        equality-constrained solves). Falls back to the unconstrained bound
        when no activation passes the numerical checks."""
        n_le = self.a_le.shape[0]
        a_eq = self.a_eq if self.a_eq is not None else np.zeros((0, self.D))
        b_eq = self.b_eq if self.a_eq is not None else np.zeros(0)
        any_consistent = False
        for r in range(n_le + 1):
            for rows in itertools.combinations(range(n_le), r):
                a_act = np.ascontiguousarray(
                    np.vstack([a_eq, self.a_le[list(rows)]]))
                b_act = np.ascontiguousarray(
                    np.concatenate([b_eq, self.b_le[list(rows)]]))
                xi, obj, mult, ok = _kkt_with_multipliers(
                    self.G, self.c, self.lam, idx, a_act, b_act)
                if not ok:
                    continue
                any_consistent = True
                slack = self.b_le - self.a_le[:, idx] @ xi
                if slack.min(initial=0.0) < -_FEAS_TOL * (1.0 + np.abs(self.b_le).max(initial=0.0)):
                    continue
                mu = mult[len(b_eq):]
                if mu.size and mu.min(initial=0.0) < -1e-7 * (1.0 + np.abs(mult).max(initial=0.0)):
                    continue
                return xi, obj, True
        if not any_consistent:
            return np.zeros(idx.shape[0]), np.inf, False
        # Numerically ambiguous: keep the subtree alive with the (valid,
        # weaker) unconstrained bound; no incumbent is generated from it.
        xi, obj = kernels.node_solve(self.G, self.c, self.lam, idx)
        return xi, obj, True

    def _refit(self, support):
        """Exact solve on a fixed support. Returns (xi_full, obj) or None
        when the side constraints are infeasible on that support."""
        support = np.asarray(support, dtype=np.int64)
        xi_full = np.zeros(self.D)
        if support.size == 0:
            obj = 0.0
            if not self._zero_feasible():
                return None
            return xi_full, obj
        if self.a_eq is None and self.a_le is None:
            xi, obj = kernels.node_solve(self.G, self.c, self.lam, support)
        elif self.a_le is None:
            xi, obj, ok = kernels.kkt_node_solve(
                self.G, self.c, self.lam, support, self.a_eq, self.b_eq)
            if not ok:
                return None
        else:
            xi, obj, ok = self._relax_with_inequalities(support)
            if not ok:
                return None
            slack = self.b_le - self.a_le[:, support] @ xi
            if slack.min(initial=0.0) < -1e-6 * (1.0 + np.abs(self.b_le).max(initial=0.0)):
                return None
        xi_full[support] = xi
        return xi_full, obj

    def _zero_feasible(self):
        tol = _FEAS_TOL
        if self.a_eq is not None and np.abs(self.b_eq).max(initial=0.0) > tol:
            return False
        if self.a_le is not None and (-self.b_le).max(initial=0.0) > tol:
            return False
        return True

    # -- incumbent machinery ----------------------------------------------

    def _rank_magnitude(self, values):
        mags = np.abs(values)
        if self.big_m is not None:
            mags = np.minimum(mags, self.big_m)
        return mags

    def _try_incumbent(self, in_positions, free_positions, free_values):
        take = self.k - len(in_positions)
        if take < 0:
            return
        chosen = []
        if take > 0 and free_positions.size:
            mags = self._rank_magnitude(free_values)
            order = np.lexsort((free_positions, -mags))
            chosen = list(free_positions[order[:take]])
        support = np.array(sorted(list(in_positions) + chosen), dtype=np.int64)
        self._offer_support(support)

    def _offer_support(self, support):
        fit = self._refit(support)
        if fit is None:
            return
        xi_full, obj = fit
        if not np.isfinite(self.ub) or \
                obj < self.ub - 1e-15 * max(1.0, abs(self.ub)):
            self.ub = obj
            self.best_xi = xi_full

    def _should_prune(self, lb):
        if not np.isfinite(self.ub):
            return False
        return lb >= self.ub - _ABS_PRUNE * (1.0 + abs(self.ub))

    # -- main loop ----------------------------------------------------------

    def run(self):
        t0 = time.perf_counter()
        cfg = self.cfg
        D, k = self.D, self.k

        if cfg.warm_start is not None:
            warm = np.asarray(cfg.warm_start, dtype=np.float64)
            if warm.shape != (D,):
                raise InvalidProblem("warm start length must match dimension")
            nz = np.nonzero(warm)[0]
            order = np.lexsort((nz, -np.abs(warm[nz])))
            self._offer_support(np.sort(nz[order[:k]]))

        if k == 0:
            if not self._zero_feasible():
                raise InfeasibleConstraints(
                    "only the zero vector fits a budget of 0 and it violates "
                    "the side constraints")
            return self._finish(np.zeros(D), 0.0, 0.0, STATUS_OPTIMAL, t0)

        all_idx = np.arange(D, dtype=np.int64)
        xi_root, lb_root, ok = self._relax(all_idx)
        self.nodes += 1
        if not ok:
            raise InfeasibleConstraints(
                "side constraints are infeasible on the full variable set")

        if k >= D:
            fit = self._refit(all_idx)
            if fit is None:
                raise InfeasibleConstraints(
                    "side constraints are infeasible on the full variable set")
            xi_full, obj = fit
            return self._finish(xi_full, obj, obj, STATUS_OPTIMAL, t0)

        self._try_incumbent((), all_idx, xi_root)

        heap = []
        seq = itertools.count()
        heapq.heappush(heap, (lb_root, next(seq), 0, 0, xi_root))
        status = STATUS_OPTIMAL
        final_lb = lb_root

        while heap:
            lb, _, in_mask, out_mask, xi_act = heapq.heappop(heap)
            final_lb = lb
            gap = self._gap(lb)
            if gap <= cfg.gap_tolerance:
                self._log(in_mask, out_mask, lb, "terminate")
                break
            if time.perf_counter() - t0 > cfg.time_limit or \
                    (cfg.node_limit and self.nodes >= cfg.node_limit):
                status = STATUS_TIME_LIMIT
                self._log(in_mask, out_mask, lb, "limit")
                break
            if self._should_prune(lb):
                self.min_pruned = min(self.min_pruned, lb)
                self._log(in_mask, out_mask, lb, "prune")
                continue
            self._log(in_mask, out_mask, lb, "expand")

            active = _mask_complement_indices(out_mask, D)
            in_set = _mask_indices(in_mask)
            free_mask = np.array([(in_mask >> int(i)) & 1 == 0 for i in active])
            free_positions = active[free_mask]
            free_values = xi_act[free_mask]

            mags = self._rank_magnitude(free_values)
            pick = np.lexsort((free_positions, -mags))[0]
            j = int(free_positions[pick])

            # Child forcing j into the support: same relaxation, same bound.
            in2 = in_mask | (1 << j)
            if len(in_set) + 1 == k:
                self.nodes += 1
                self._offer_support(np.array(sorted(in_set + [j]), dtype=np.int64))
            else:
                heapq.heappush(heap, (lb, next(seq), in2, out_mask, xi_act))

            # Child eliminating j: smaller active set, fresh relaxation.
            out2 = out_mask | (1 << j)
            active2 = active[active != j]
            if active2.size == len(in_set):
                self.nodes += 1
                self._offer_support(np.array(sorted(in_set), dtype=np.int64))
            elif active2.size == k:
                self.nodes += 1
                self._offer_support(active2)
            else:
                xi2, lb2, ok2 = self._relax(active2)
                self.nodes += 1
                if ok2:
                    lb2 = max(lb2, lb)  # bounds are monotone along a branch
                    free_mask2 = np.array(
                        [(in_mask >> int(i)) & 1 == 0 for i in active2])
                    self._try_incumbent(tuple(in_set), active2[free_mask2],
                                        xi2[free_mask2])
                    if self._should_prune(lb2):
                        self.min_pruned = min(self.min_pruned, lb2)
                    else:
                        heapq.heappush(heap, (lb2, next(seq), in_mask, out2, xi2))
        else:
            # Heap exhausted: optimum proven up to the pruning tolerance.
            final_lb = min(self.ub, self.min_pruned)

        if not np.isfinite(self.ub):
            if status == STATUS_TIME_LIMIT:
                return self._finish(np.zeros(D), np.inf, final_lb, status, t0)
            raise InfeasibleConstraints(
                "no support of size <= k satisfies the side constraints "
                "(proved by exhausting the search tree)")
        return self._finish(self.best_xi, self.ub, final_lb, status, t0)

    def _gap(self, lb):
        if not np.isfinite(self.ub):
            return np.inf
        return max(0.0, (self.ub - lb) / max(1.0, abs(self.ub)))

    def _finish(self, xi, obj, lb, status, t0):
        support = np.nonzero(xi)[0].astype(np.int64)
        lb = min(lb, obj)
        sol = SparseSolution(
            xi=xi, support=support, objective=obj, lower_bound=lb,
            gap=self._final_gap(obj, lb), status=status,
            nodes_explored=self.nodes,
            wall_time=time.perf_counter() - t0)
        if self.trace is not None:
            with open(self.cfg.trace_path, "w", encoding="utf-8") as fh:
                for entry in self.trace:
                    fh.write(json.dumps(entry) + "\n")
        return sol

    @staticmethod
    def _final_gap(obj, lb):
        if not np.isfinite(obj):
            return np.inf
        return max(0.0, (obj - lb) / max(1.0, abs(obj)))

    def _log(self, in_mask, out_mask, lb, action):
        if self.trace is None:
            return
        self.trace.append({
            "node_id": len(self.trace),
            "depth": int(in_mask.bit_count() + out_mask.bit_count()),
            "lower_bound": float(lb) if np.isfinite(lb) else None,
            "incumbent": float(self.ub) if np.isfinite(self.ub) else None,
            "action": action,
        })


def _mask_indices(mask):
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


def _mask_complement_indices(mask, width):
    return np.array([i for i in range(width) if not (mask >> i) & 1],
                    dtype=np.int64)


def _kkt_with_multipliers(G, c, lam, idx, a_act, b_act):
    """Python-side equality-constrained node solve that also returns the
    constraint multipliers (needed for inequality active-set checks)."""
    m = idx.shape[0]
    r = a_act.shape[0]
    A = G[np.ix_(idx, idx)] + lam * np.eye(m)
    b = c[idx]
    if r == 0:
        xi = kernels.sym_pinv_solve(np.ascontiguousarray(A),
                                    np.ascontiguousarray(b))
        return xi, float(xi @ A @ xi - 2.0 * b @ xi), np.zeros(0), True
    C = a_act[:, idx]
    M = np.zeros((m + r, m + r))
    M[:m, :m] = 2.0 * A
    M[:m, m:] = C.T
    M[m:, :m] = C
    rhs = np.concatenate([2.0 * b, b_act])
    z = kernels.sym_pinv_solve(np.ascontiguousarray(M),
                               np.ascontiguousarray(rhs))
    res = np.abs(M @ z - rhs).max(initial=0.0)
    ok = res <= 1e-6 * max(1.0, np.abs(rhs).max(initial=0.0))
    xi = z[:m]
    obj = float(xi @ A @ xi - 2.0 * b @ xi)
    return xi, obj, z[m:], ok


def solve_sparse(problem, cfg=None):
    """Solve one cardinality-constrained ridge problem to proven optimality.

    Returns a SparseSolution whose lower_bound certifies the objective:
    lower_bound <= true optimum <= objective, with gap their scaled
    difference. nodes_explored counts relaxation and leaf solves. Raises
    InfeasibleConstraints only with a proof (exhausted tree or k = 0).
    """
    if not isinstance(problem, SparseRegressionProblem):
        raise InvalidProblem("expected a SparseRegressionProblem")
    cfg = cfg or BnbConfig()
    sol = _Search(problem, cfg).run()
    if np.isfinite(sol.objective):
        # The returned objective is recomputed from xi so it is exact.
        sol.objective = objective_value(problem, sol.xi)
        sol.lower_bound = min(sol.lower_bound, sol.objective)
        sol.gap = _Search._final_gap(sol.objective, sol.lower_bound)
    return sol


def stack_joint(gram, targets_linear, lam, k_global, constraints=None):
    """Assemble the block-diagonal joint problem over stacked coefficients.

    gram: (D, D) shared gram matrix; targets_linear: (D, d) per-dimension
    linear terms (columns are Theta' y_i). Stacking order is dimension-major:
    coefficients of dimension i occupy rows i*D .. (i+1)*D.
    """
    gram = np.asarray(gram, dtype=np.float64)
    lin = np.asarray(targets_linear, dtype=np.float64)
    if lin.ndim != 2 or lin.shape[0] != gram.shape[0]:
        raise DimensionMismatch("targets_linear must be (D, d)")
    D, d = lin.shape
    big_g = np.zeros((D * d, D * d))
    for i in range(d):
        big_g[i * D:(i + 1) * D, i * D:(i + 1) * D] = gram
    big_c = lin.T.reshape(D * d)
    return SparseRegressionProblem(gram=big_g, linear=big_c, lam=lam,
                                   k=k_global, constraints=constraints,
                                   groups=tuple((i * D, (i + 1) * D) for i in range(d)))


@dataclass
class JointSolution:
    stacked: SparseSolution
    per_dim: tuple


def solve_joint(theta, targets, lam, k_global, constraints=None, cfg=None):
    """Joint sparse regression: one global budget across all dimensions.

    theta: (n, D) shared candidate matrix; targets: (n, d). Side constraints
    act on the stacked coefficient vector (dimension-major). Returns a
    JointSolution; each per-dimension SparseSolution carries its block of
    coefficients and the block objective, while gap/status/lower_bound
    certify the joint problem.
    """
    theta = np.asarray(theta, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim == 1:
        targets = targets[:, None]
    if theta.ndim != 2 or targets.shape[0] != theta.shape[0]:
        raise DimensionMismatch("theta (n, D) and targets (n, d) must align")
    gram = theta.T @ theta
    lin = theta.T @ targets
    problem = stack_joint(gram, lin, lam, k_global, constraints)
    stacked = solve_sparse(problem, cfg)
    D = theta.shape[1]
    d = targets.shape[1]
    dims = []
    for i in range(d):
        xi_i = stacked.xi[i * D:(i + 1) * D]
        sub = SparseRegressionProblem(gram=gram, linear=lin[:, i], lam=lam,
                                      k=min(problem.k, D))
        dims.append(SparseSolution(
            xi=xi_i, support=np.nonzero(xi_i)[0].astype(np.int64),
            objective=objective_value(sub, xi_i),
            lower_bound=stacked.lower_bound, gap=stacked.gap,
            status=stacked.status, nodes_explored=stacked.nodes_explored,
            wall_time=stacked.wall_time))
    return JointSolution(stacked=stacked, per_dim=tuple(dims))


def unbias(support, theta, y):
    """Unregularized least squares on a fixed support; zero elsewhere."""
    theta = np.asarray(theta, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    support = np.asarray(sorted(int(i) for i in np.atleast_1d(support)),
                         dtype=np.int64) if len(np.atleast_1d(support)) else \
        np.zeros(0, dtype=np.int64)
    xi = np.zeros(theta.shape[1])
    if support.size == 0:
        return xi
    sub = theta[:, support]
    coef, _, rank, _ = np.linalg.lstsq(sub, y, rcond=None)
    if rank < support.size:
        raise SingularSupport(
            f"support columns are rank deficient ({rank} < {support.size})")
    xi[support] = coef
    return xi
