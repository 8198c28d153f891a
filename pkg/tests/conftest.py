"""Shared fixtures and independent oracles used across the test suite."""

import itertools

import numpy as np
import pytest

from miosindy.rng import RngStream
from miosindy.systems import get_system, rk4_integrate, sample_initial_condition


def enumeration_oracle(G, c, lam, k):
    """Best achievable objective over every support of size <= k.

    Independent of the solver under test: per support S, any solution of
    (G_SS + lam I) xi = c_S minimizes the quadratic there, with value
    -c_S' xi. Adding columns never hurts, so scanning size == k suffices,
    but small sizes are scanned too so rank-deficient corners are covered.
    Returns (best objective, best support as a frozenset).
    """
    D = G.shape[0]
    best = (0.0, frozenset())  # empty model: objective 0
    for size in range(1, k + 1):
        for sub in itertools.combinations(range(D), size):
            idx = np.asarray(sub)
            gs = G[np.ix_(idx, idx)] + lam * np.eye(size)
            xi = np.linalg.pinv(gs, hermitian=True) @ c[idx]
            obj = float(xi @ gs @ xi - 2.0 * (c[idx] @ xi))
            if obj < best[0] - 1e-15:
                best = (obj, frozenset(int(i) for i in sub))
    return best


def random_regression_instance(rng, n_max=60, d_max=14, k_max=5):
    """One random cardinality-constrained ridge instance.

    Mixes plain gaussian designs with correlated and duplicated columns so
    singular sub-grams appear in the sweep. Returns (theta, y, lam, k).
    """
    n = int(rng.integers(10, n_max + 1))
    D = int(rng.integers(3, d_max + 1))
    theta = rng.normal(size=(n, D))
    style = int(rng.integers(0, 3))
    if style == 1 and D >= 4:
        # strongly correlated pair
        theta[:, 1] = theta[:, 0] + 1e-3 * theta[:, 1]
    elif style == 2 and D >= 4:
        # exact duplicate column: singular gram
        theta[:, 2] = theta[:, 0]
    k_true = int(rng.integers(1, min(k_max, D) + 1))
    support = rng.choice(D, size=k_true, replace=False)
    xi = np.zeros(D)
    xi[support] = rng.normal(size=k_true) * 3.0
    noise = 10.0 ** float(rng.uniform(-8, -1))
    y = theta @ xi + noise * rng.normal(size=n)
    lam = [0.0, 1e-3, 1e-2][int(rng.integers(0, 3))]
    k = int(rng.integers(1, min(k_max, D) + 1))
    return theta, y, lam, k


@pytest.fixture(scope="session")
def lorenz_trajectory():
    """Clean 4-second Lorenz run shared by the slower integration tests."""
    system = get_system("lorenz")
    x0 = sample_initial_condition(system, RngStream(7))
    return rk4_integrate(system, x0, 4.0, 0.002)
