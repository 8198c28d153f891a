"""Heuristic baselines against hand-rolled reference iterations."""

import numpy as np
import pytest

from miosindy.baselines import (EnsembleConfig, StlsqConfig, ensemble_stlsq,
                                ssr, stlsq)
from miosindy.errors import TooFewSamples
from miosindy.rng import RngStream


def _reference_stlsq(theta, y, threshold, lam, max_iter=20):
    """Straight transcription of the iteration: ridge fit, hard threshold,
    refit on survivors, stop at a fixed point or empty set."""
    D = theta.shape[1]
    active = np.arange(D)
    for _ in range(max_iter):
        A = theta[:, active]
        fit = np.linalg.solve(A.T @ A + lam * np.eye(active.size), A.T @ y)
        keep = np.abs(fit) >= threshold
        new_active = active[keep]
        if new_active.size == 0:
            return np.zeros(D)
        if np.array_equal(new_active, active):
            xi = np.zeros(D)
            xi[active] = fit
            return xi
        active = new_active
    A = theta[:, active]
    fit = np.linalg.solve(A.T @ A + lam * np.eye(active.size), A.T @ y)
    xi = np.zeros(D)
    xi[active] = fit
    return xi


def test_stlsq_matches_reference_iteration():
    rng = RngStream(31)
    for trial in range(10):
        n, D = 60, 8
        theta = rng.normal(size=(n, D))
        xi_true = np.zeros(D)
        xi_true[[0, 3, 6]] = [2.0, -1.5, 0.8]
        y = theta @ xi_true + 0.05 * rng.normal(size=n)
        for threshold, lam in ((0.3, 0.0), (0.3, 1e-3), (0.05, 1e-2)):
            sol = stlsq(theta, y, StlsqConfig(threshold=threshold, lam=lam))
            ref = _reference_stlsq(theta, y, threshold, lam)
            assert np.allclose(sol.xi, ref, rtol=1e-9, atol=1e-11)
            assert sol.status == "Heuristic"
            assert np.isnan(sol.gap) and np.isnan(sol.lower_bound)


def test_stlsq_recovers_planted_support():
    rng = RngStream(32)
    theta = rng.normal(size=(200, 10))
    xi_true = np.zeros(10)
    xi_true[[1, 4]] = [3.0, -2.0]
    y = theta @ xi_true + 0.01 * rng.normal(size=200)
    sol = stlsq(theta, y, StlsqConfig(threshold=0.5))
    assert set(sol.support) == {1, 4}
    assert np.allclose(sol.xi[[1, 4]], [3.0, -2.0], atol=0.05)


def test_stlsq_aggressive_threshold_gives_empty_model():
    rng = RngStream(33)
    theta = rng.normal(size=(50, 5))
    y = 0.01 * rng.normal(size=50)
    sol = stlsq(theta, y, StlsqConfig(threshold=100.0))
    assert sol.support.size == 0
    assert np.all(sol.xi == 0.0)
    assert sol.objective == pytest.approx(0.0, abs=1e-12)


def test_ssr_path_shape_and_monotone_supports():
    rng = RngStream(34)
    n, D = 80, 7
    theta = rng.normal(size=(n, D))
    xi_true = np.zeros(D)
    xi_true[[2, 5]] = [1.0, -2.0]
    y = theta @ xi_true + 0.02 * rng.normal(size=n)
    path = ssr(theta, y, lam=1e-4)
    assert len(path) == D
    sizes = [sol.support.size for sol in path]
    assert sizes == list(range(D, 0, -1))
    # nested: each support is the previous minus exactly one element
    for prev, cur in zip(path, path[1:]):
        assert set(cur.support) < set(prev.support)
        assert len(set(prev.support) - set(cur.support)) == 1
    # the size-2 model should be the planted support
    by_size = {sol.support.size: sol for sol in path}
    assert set(by_size[2].support) == {2, 5}


def test_ssr_drops_smallest_magnitude_coefficient():
    rng = RngStream(35)
    theta = rng.normal(size=(60, 5))
    y = theta @ np.array([5.0, 0.01, -3.0, 0.001, 1.0]) + 1e-4 * rng.normal(size=60)
    path = ssr(theta, y, lam=0.0)
    # first drop is index 3 (smallest true magnitude), then index 1
    assert 3 not in path[1].support
    assert 1 not in path[2].support


def test_ensemble_is_deterministic_given_stream():
    rng = RngStream(36)
    theta = rng.normal(size=(80, 6))
    y = theta @ np.array([2.0, 0, 0, -1.0, 0, 0]) + 0.1 * rng.normal(size=80)
    base = StlsqConfig(threshold=0.3)
    a = ensemble_stlsq(theta, y, EnsembleConfig(
        base=base, rng=RngStream(99), n_models=20))
    b = ensemble_stlsq(theta, y, EnsembleConfig(
        base=base, rng=RngStream(99), n_models=20))
    assert np.array_equal(a.xi, b.xi)
    c = ensemble_stlsq(theta, y, EnsembleConfig(
        base=base, rng=RngStream(100), n_models=20))
    # different stream should bootstrap different rows
    assert not np.array_equal(a.xi, c.xi) or np.allclose(a.xi, c.xi)


def test_ensemble_bragging_median_matches_manual_loop():
    rng = RngStream(37)
    theta = rng.normal(size=(60, 5))
    y = theta @ np.array([1.0, 0, -2.0, 0, 0]) + 0.05 * rng.normal(size=60)
    base = StlsqConfig(threshold=0.2)
    stream = RngStream(7)
    sol = ensemble_stlsq(theta, y, EnsembleConfig(
        base=base, rng=stream, n_models=15))
    coefs = np.empty((15, 5))
    for i in range(15):
        rows = RngStream(7).child(i).integers(0, 60, size=60)
        coefs[i] = stlsq(theta[rows], y[rows], base).xi
    assert np.array_equal(sol.xi, np.median(coefs, axis=0))


def test_ensemble_library_mode_restricts_to_top_k():
    rng = RngStream(38)
    theta = rng.normal(size=(100, 8))
    y = theta @ np.array([3.0, 0, 0, -2.0, 0, 0, 0, 0]) + 0.2 * rng.normal(size=100)
    sol = ensemble_stlsq(theta, y, EnsembleConfig(
        base=StlsqConfig(threshold=0.15), rng=RngStream(5), n_models=30,
        mode="library", top_k=2))
    assert sol.support.size <= 2
    assert set(sol.support) == {0, 3}


def test_ensemble_config_validation():
    base = StlsqConfig(threshold=0.1)
    with pytest.raises(ValueError):
        EnsembleConfig(base=base, rng=RngStream(1), mode="voting")
    with pytest.raises(ValueError):
        EnsembleConfig(base=base, rng=RngStream(1), mode="library", top_k=0)
    with pytest.raises(ValueError):
        EnsembleConfig(base=base, rng=RngStream(1), n_models=0)
    with pytest.raises(TooFewSamples):
        ensemble_stlsq(np.ones((5, 2)), np.ones(5),
                       EnsembleConfig(base=base, rng=RngStream(1)))
