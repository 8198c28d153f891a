"""Registered dynamical systems: right-hand sides against their declared
polynomial truth, RK4 order, noise scaling, and sampler determinism."""

import numpy as np
import pytest

from miosindy.errors import DimensionMismatch, Diverged, UnknownSystem
from miosindy.library import evaluate_monomials, monomial_exponents
from miosindy.rng import RngStream
from miosindy.systems import (Trajectory, ad_hoc_system, add_noise,
                              get_system, rk4_integrate,
                              sample_initial_condition, system_names)


def test_every_registered_rhs_matches_its_declared_coefficients():
    """The declared (exponents, coefficient) truth and the compiled rhs must
    be the same function. Checked pointwise on random states."""
    rng = RngStream(61)
    for name in system_names():
        system = get_system(name)
        degree = max((sum(ex) for terms in system.true_terms for ex, _ in terms),
                     default=1)
        exps = monomial_exponents(system.dim, degree)
        xi = system.true_coefficients(exps)
        for _ in range(5):
            x = rng.uniform(-2.0, 2.0, system.dim)
            theta_row = evaluate_monomials(x[None, :], exps)
            ref = (theta_row @ xi)[0]
            assert np.allclose(system.rhs_at(x), ref, rtol=1e-12, atol=1e-12), name


def test_true_coefficients_requires_complete_basis():
    lorenz = get_system("lorenz")
    with pytest.raises(ValueError):
        lorenz.true_coefficients(monomial_exponents(3, 1))  # no xz, xy


def test_true_support_shapes():
    lorenz = get_system("lorenz")
    sup = lorenz.true_support()
    assert len(sup) == 3
    assert sup[0] == frozenset({(1, 0, 0), (0, 1, 0)})
    assert sup[2] == frozenset({(1, 1, 0), (0, 0, 1)})


def test_unknown_system_raises():
    with pytest.raises(UnknownSystem):
        get_system("not_a_system")


def test_rk4_fourth_order_convergence():
    """Exact solution oracle: x' = -x, x(1) = e^-1. Halving dt must cut the
    error by about 2^4."""
    sys_ = ad_hoc_system("decay", 1, lambda x, p: -x)
    x0 = np.array([1.0])
    errs = []
    for dt in (0.1, 0.05, 0.025):
        traj = rk4_integrate(sys_, x0, 1.0, dt)
        errs.append(abs(traj.states[-1, 0] - np.exp(-1.0)))
    assert 12.0 < errs[0] / errs[1] < 20.0
    assert 12.0 < errs[1] / errs[2] < 20.0


def test_substeps_match_finer_grid():
    """substeps=m at step dt must land on the same states as dt/m sampled
    every m-th point."""
    sys_ = get_system("lorenz")
    x0 = np.array([1.0, 2.0, 20.0])
    coarse = rk4_integrate(sys_, x0, 1.0, 0.01, substeps=4)
    fine = rk4_integrate(sys_, x0, 1.0, 0.0025)
    assert np.allclose(coarse.states, fine.states[::4], rtol=1e-12, atol=1e-12)


def test_rk4_validation_and_divergence():
    sys_ = get_system("lorenz")
    with pytest.raises(DimensionMismatch):
        rk4_integrate(sys_, np.zeros(2), 1.0, 0.01)
    with pytest.raises(ValueError):
        rk4_integrate(sys_, np.zeros(3), 1.0, -0.1)
    with pytest.raises(ValueError):
        rk4_integrate(sys_, np.zeros(3), 1.0, 0.01, substeps=0)
    blow = ad_hoc_system("blow", 1, lambda x, p: x * x)
    with pytest.raises(Diverged):
        rk4_integrate(blow, np.array([5.0]), 10.0, 0.1)


def test_trajectory_segment_and_dt():
    t = np.arange(100) * 0.02
    traj = Trajectory(times=t, states=np.arange(200, dtype=float).reshape(100, 2))
    assert traj.n == 100 and traj.dim == 2
    assert traj.dt == pytest.approx(0.02)
    seg = traj.segment(10, 20)
    assert seg.n == 10
    assert np.array_equal(seg.states, traj.states[10:20])
    with pytest.raises(DimensionMismatch):
        Trajectory(times=np.array([0.0, 0.1, 0.15]), states=np.zeros((3, 1)))


def test_add_noise_statistics_and_zero_case():
    rng = RngStream(62)
    t = np.arange(20000) * 0.001
    states = np.stack([np.sin(t), 2.0 * np.cos(t)], axis=1)
    traj = Trajectory(times=t, states=states)

    clean = add_noise(traj, 0.0, RngStream(1))
    assert np.array_equal(clean.states, traj.states)
    assert clean.states is not traj.states

    pct = 5.0
    noisy = add_noise(traj, pct, rng)
    resid = noisy.states - traj.states
    expected_std = (pct / 100.0) * np.linalg.norm(states) / np.sqrt(states.size)
    assert resid.std() == pytest.approx(expected_std, rel=0.05)
    with pytest.raises(ValueError):
        add_noise(traj, -1.0, rng)


def test_initial_condition_sampling_is_deterministic_and_in_volume():
    for name in system_names():
        system = get_system(name)
        a = sample_initial_condition(system, RngStream(77))
        b = sample_initial_condition(system, RngStream(77))
        assert np.array_equal(a, b), name
        assert a.shape == (system.dim,)
        assert np.all(np.isfinite(a))
    lorenz_ic = sample_initial_condition(get_system("lorenz"), RngStream(3))
    assert -5.0 <= lorenz_ic[0] <= 5.0
    assert 10.0 <= lorenz_ic[2] <= 40.0
    hopf_ic = sample_initial_condition(get_system("hopf"), RngStream(3))
    assert 0.75 <= np.hypot(*hopf_ic) <= 1.25


def test_sampled_trajectories_stay_bounded():
    """Each system integrated from its own sampled start must stay finite
    over a short horizon (the registry parameters give bounded attractors)."""
    rng = RngStream(63)
    for i, name in enumerate(system_names()):
        system = get_system(name)
        x0 = sample_initial_condition(system, rng.child(i))
        traj = rk4_integrate(system, x0, 2.0, 0.002)
        assert np.all(np.isfinite(traj.states)), name
        assert np.abs(traj.states).max() < 1e3, name
