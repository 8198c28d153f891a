"""Weak-form feature assembly: the integrated model must satisfy the same
linear relation as the differential model, without ever differencing data."""

import numpy as np
import pytest

from miosindy.errors import DomainTooSmall
from miosindy.library import monomial_exponents
from miosindy.pde import simulate_ks
from miosindy.rng import RngStream
from miosindy.systems import get_system, rk4_integrate
from miosindy.weak import WeakConfig, weak_form


def _residual(Q, q0, xi):
    """Relative residual ||Q xi - q0|| / ||q0|| per target column."""
    num = np.linalg.norm(Q @ xi - q0, axis=0)
    den = np.linalg.norm(q0, axis=0)
    return num / den


def test_weak_ode_rows_satisfy_true_model():
    """On a clean trajectory, the true coefficient matrix must solve the
    weak system to quadrature accuracy: integration by parts is exact for
    the model, only the trapezoid rule is approximate."""
    system = get_system("lorenz")
    traj = rk4_integrate(system, np.array([1.0, 3.0, 15.0]), 8.0, 0.002)
    cfg = WeakConfig(num_domains=150, points_per_domain=200, rng=RngStream(81))
    lib = weak_form({"degree": 2, "include_bias": True}, traj, cfg)
    assert lib.theta.shape == (150, 10)
    assert lib.targets.shape == (150, 3)
    xi_true = system.true_coefficients(monomial_exponents(3, 2))
    res = _residual(lib.theta, lib.targets, xi_true)
    assert np.all(res < 1e-5), res


def test_weak_ode_noise_robustness():
    """1% noise: the true model must still fit the weak rows far better than
    it fits pointwise finite differences."""
    from miosindy.differentiation import Differentiator, differentiate
    from miosindy.library import polynomial_library
    from miosindy.systems import add_noise

    system = get_system("lorenz")
    traj = rk4_integrate(system, np.array([1.0, 3.0, 15.0]), 8.0, 0.002)
    noisy = add_noise(traj, 1.0, RngStream(82))
    xi_true = system.true_coefficients(monomial_exponents(3, 2))

    cfg = WeakConfig(num_domains=300, points_per_domain=200, rng=RngStream(83))
    weak = weak_form({"degree": 2, "include_bias": True}, noisy, cfg)
    weak_res = _residual(weak.theta, weak.targets, xi_true).max()

    diff = polynomial_library(noisy, 2)
    targets = differentiate(noisy, Differentiator("centered"))
    diff_res = _residual(diff.theta, targets, xi_true).max()

    assert weak_res < 0.1 * diff_res, (weak_res, diff_res)


def test_weak_domains_are_reproducible():
    system = get_system("hopf")
    traj = rk4_integrate(system, np.array([1.0, 0.0]), 6.0, 0.01)
    spec = {"degree": 3, "include_bias": True}
    a = weak_form(spec, traj, WeakConfig(50, 80, RngStream(9)))
    b = weak_form(spec, traj, WeakConfig(50, 80, RngStream(9)))
    assert np.array_equal(a.theta, b.theta)
    assert np.array_equal(a.targets, b.targets)
    c = weak_form(spec, traj, WeakConfig(50, 80, RngStream(10)))
    assert not np.array_equal(a.theta, c.theta)


def test_weak_domain_too_small():
    system = get_system("hopf")
    traj = rk4_integrate(system, np.array([1.0, 0.0]), 0.5, 0.01)
    with pytest.raises(DomainTooSmall):
        weak_form({"degree": 2}, traj, WeakConfig(10, 200, RngStream(1)))


def test_weak_config_validation():
    with pytest.raises(ValueError):
        WeakConfig(0, 50, RngStream(1))
    with pytest.raises(ValueError):
        WeakConfig(10, 3, RngStream(1))


def test_weak_pde_rows_satisfy_ks_equation():
    """Clean Kuramoto-Sivashinsky data: u_t = -u u_x - u_xx - u_xxxx must
    hold for the weak rows with coefficients (-0.5 on (u^2)_x rewrite, -1,
    -1 on the linear derivatives)."""
    rng = RngStream(84)
    n = 128
    L = 32.0 * np.pi
    x = np.arange(n) * (L / n)
    u0 = (np.cos(2 * np.pi * x / L) * (1 + 0.4 * np.sin(4 * np.pi * x / L))
          + 0.2 * np.cos(10 * np.pi * x / L))
    fld = simulate_ks(u0, t_end=30.0, dt_out=0.05, dt_internal=0.01)
    # drop the transient so the field is in the chaotic regime
    fld_late = type(fld)(grids=fld.grids, times=fld.times[200:],
                         values=fld.values[200:], periodic=fld.periodic)

    cfg = WeakConfig(num_domains=120, points_per_domain=40, rng=rng)
    lib = weak_form({"degree": 2, "max_deriv": 4}, fld_late, cfg)

    labels = {t: i for i, t in enumerate(lib.terms)}
    from miosindy.library import Term
    xi = np.zeros((lib.n_terms, 1))
    xi[labels[Term(exponents=(1,), deriv_var=0, deriv_orders=(1,))], 0] = -1.0
    xi[labels[Term(exponents=(0,), deriv_var=0, deriv_orders=(2,))], 0] = -1.0
    xi[labels[Term(exponents=(0,), deriv_var=0, deriv_orders=(4,))], 0] = -1.0
    res = _residual(lib.theta, lib.targets, xi)
    assert res[0] < 1e-3, res
