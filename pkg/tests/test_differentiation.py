"""Finite-difference and smoothing derivative estimators: exactness on
polynomials, convergence orders, and noise behavior."""

import numpy as np
import pytest

from miosindy.differentiation import (Differentiator, differentiate,
                                      moving_average)
from miosindy.errors import TooFewSamples
from miosindy.rng import RngStream
from miosindy.systems import Trajectory


def _poly_traj(n, dt, coeffs):
    """states[:, 0] = polynomial in t with the given coefficients."""
    t = np.arange(n) * dt
    vals = np.polyval(coeffs, t)
    return Trajectory(times=t, states=vals[:, None]), t


def test_centered_exact_on_quadratics():
    # centered 2nd-order differences differentiate degree-2 exactly (interior)
    traj, t = _poly_traj(50, 0.01, [3.0, -2.0, 1.0])  # 3t^2 - 2t + 1
    d = differentiate(traj, Differentiator("centered"))
    ref = 6.0 * t - 2.0
    assert np.allclose(d[1:-1, 0], ref[1:-1], atol=1e-10)


def test_fd4_exact_on_quartics_interior():
    traj, t = _poly_traj(60, 0.02, [1.0, -0.5, 0.25, 2.0, -1.0])
    d = differentiate(traj, Differentiator("fd4"))
    ref = np.polyval([4.0, -1.5, 0.5, 2.0], t)
    assert np.allclose(d[2:-2, 0], ref[2:-2], atol=1e-9)
    # one-sided edges are 2nd order: exact on quadratics only
    traj2, t2 = _poly_traj(20, 0.05, [2.0, 1.0, 0.0])
    d2 = differentiate(traj2, Differentiator("fd4"))
    assert np.allclose(d2[:, 0], 4.0 * t2 + 1.0, atol=1e-9)


def test_savgol_exact_below_polyorder():
    traj, t = _poly_traj(80, 0.01, [0.5, 1.0, -2.0, 3.0])  # cubic
    d = differentiate(traj, Differentiator("savgol", window=11, polyorder=4))
    ref = np.polyval([1.5, 2.0, -2.0], t)
    assert np.allclose(d[:, 0], ref, atol=1e-8)


def test_convergence_orders():
    """Halving dt must shrink interior error by ~2^2 (centered) and ~2^4
    (fd4) on a smooth non-polynomial signal."""
    def err(method, dt):
        n = int(round(2.0 / dt)) + 1
        t = np.arange(n) * dt
        traj = Trajectory(times=t, states=np.sin(t)[:, None])
        d = differentiate(traj, Differentiator(method))
        interior = slice(4, -4)
        return np.abs(d[interior, 0] - np.cos(t[interior])).max()

    r2 = err("centered", 0.02) / err("centered", 0.01)
    assert 3.0 < r2 < 5.0
    r4 = err("fd4", 0.02) / err("fd4", 0.01)
    assert 12.0 < r4 < 20.0


def test_smoothed_beats_centered_on_noisy_signal():
    rng = RngStream(51)
    n, dt = 2000, 0.005
    t = np.arange(n) * dt
    clean = np.sin(3.0 * t)
    noisy = clean + 0.01 * rng.normal(size=n)
    traj = Trajectory(times=t, states=noisy[:, None])
    ref = 3.0 * np.cos(3.0 * t)
    interior = slice(20, -20)

    e_centered = np.abs(
        differentiate(traj, Differentiator("centered"))[interior, 0]
        - ref[interior]).max()
    e_smoothed = np.abs(
        differentiate(traj, Differentiator("smoothed", window=21))[interior, 0]
        - ref[interior]).max()
    assert e_smoothed < 0.5 * e_centered


def test_moving_average_preserves_length_and_mean_of_constant():
    x = np.ones((30, 2)) * 4.0
    out = moving_average(x, 7)
    assert out.shape == x.shape
    assert np.allclose(out, 4.0)


def test_validation_and_too_few_samples():
    with pytest.raises(ValueError):
        Differentiator("savgol", window=8)          # even window
    with pytest.raises(ValueError):
        Differentiator("savgol", window=11, polyorder=11)
    with pytest.raises(ValueError):
        Differentiator("nope")
    tiny = Trajectory(times=np.array([0.0, 0.1]), states=np.zeros((2, 1)))
    with pytest.raises(TooFewSamples):
        differentiate(tiny, Differentiator("centered"))
    short = Trajectory(times=np.arange(6) * 0.1, states=np.zeros((6, 1)))
    with pytest.raises(TooFewSamples):
        differentiate(short, Differentiator("savgol", window=11, polyorder=3))
