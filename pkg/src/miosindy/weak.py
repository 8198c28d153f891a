"""Weak (integral) formulation of the regression problem.

Both sides of the model are integrated against compactly supported test
functions on randomly placed subdomains: windows of consecutive samples for
trajectories, axis-aligned space-time boxes for fields. The test function is
a tensor product of (tau^2 - 1)^p factors on each axis mapped to [-1, 1], so
derivatives up to p - 1 vanish at the boundary and integration by parts
transfers derivatives from the (noisy) data onto the (smooth) test function.

Transfer policy for product terms u^a * D^alpha(u):
  pure polynomial        -> integrate directly against phi
  pure derivative        -> fully transferred, sign (-1)^|alpha|
  u^a * du/dx_axis       -> exact rewrite as (u^{a+1})' / (a+1), transferred
  anything else          -> inner derivative evaluated spectrally, then
                            integrated against phi (no transfer)
The last row is the only inexact route and never applies to single-variable
libraries with first-order products.
"""

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as npoly

from . import kernels, pde
from .errors import DimensionMismatch, DomainTooSmall
from .library import (CandidateLibrary, Term, evaluate_monomials,
                      monomial_exponents, pde_terms)


@dataclass(frozen=True)
class WeakConfig:
    """num_domains subdomains of points_per_domain samples per axis (window
    length for trajectories, box edge length for fields); power is the
    test-function exponent (defaults to max(transferred order + 1, 4))."""

    num_domains: int
    points_per_domain: int
    rng: object
    power: object = None

    def __post_init__(self):
        if self.num_domains < 1:
            raise ValueError("num_domains must be positive")
        if self.points_per_domain < 5:
            raise ValueError("points_per_domain must be at least 5")


def _phi_tables(length, spacing, power, max_order):
    """Quadrature-weighted test function derivative rows on one axis.

    Returns rows[o][j] = w_j * d^o phi / d coordinate^o at sample j, where w
    are trapezoid weights with physical spacing. phi((tau^2-1)^power) on the
    axis mapped to [-1, 1].
    """
    tau = np.linspace(-1.0, 1.0, length)
    half = 0.5 * (length - 1) * spacing
    w = np.full(length, spacing)
    w[0] *= 0.5
    w[-1] *= 0.5
    coef = npoly.polypow([-1.0, 0.0, 1.0], power)
    rows = []
    for order in range(max_order + 1):
        c = coef
        for _ in range(order):
            c = npoly.polyder(c)
        rows.append(w * npoly.polyval(tau, c) / half ** order)
    return rows


def weak_form(library_spec, data, cfg):
    """Assemble the weak data matrix Q and target q0 for a library spec.

    library_spec: a CandidateLibrary (its meta is reused) or a dict with
    degree / include_bias (trajectories) or degree / max_deriv (fields).
    data: Trajectory or Field. Domain placement comes from cfg.rng, so an
    identical seed reproduces Q bit for bit.
    """
    meta = dict(library_spec.meta) if isinstance(library_spec, CandidateLibrary) \
        else dict(library_spec)
    if hasattr(data, "states"):
        return _weak_ode(data, meta.get("degree", 3),
                         meta.get("include_bias", True), cfg)
    if isinstance(data, pde.Field):
        return _weak_pde(data, meta.get("degree", 3), meta.get("max_deriv", 0), cfg)
    raise DimensionMismatch("data must be a Trajectory or a Field")


def _weak_ode(traj, degree, include_bias, cfg):
    states = np.ascontiguousarray(traj.states)
    n, d = states.shape
    length = cfg.points_per_domain
    if n < length:
        raise DomainTooSmall(
            f"trajectory has {n} samples, domains need {length}")
    power = cfg.power if cfg.power is not None else 4
    rows = _phi_tables(length, traj.dt, power, 1)
    wphi = np.ascontiguousarray(rows[0])
    wdphi = np.ascontiguousarray(rows[1])
    starts = np.ascontiguousarray(
        cfg.rng.integers(0, n - length + 1, size=cfg.num_domains), dtype=np.int64)
    exps = monomial_exponents(d, degree, include_bias)
    theta = np.ascontiguousarray(evaluate_monomials(states, exps))
    states = np.ascontiguousarray(states)
    Q, q0 = kernels.weak_ode_assemble(theta, states, starts, wphi, wdphi)
    terms = tuple(Term(exponents=tuple(e)) for e in exps)
    return CandidateLibrary(
        terms=terms, theta=Q, targets=q0, kind="weak-ode",
        meta={"degree": degree, "include_bias": include_bias,
              "points_per_domain": length, "num_domains": cfg.num_domains,
              "power": power})


def _weak_pde(fld, degree, max_deriv, cfg):
    n_vars = fld.n_vars
    n_spatial = len(fld.grids)
    n_axes = 1 + n_spatial
    m = int(cfg.points_per_domain)
    lengths = (fld.times.shape[0],) + tuple(g.shape[0] for g in fld.grids)
    for a, la in enumerate(lengths):
        if la < m:
            raise DomainTooSmall(
                f"axis {a} has {la} samples, domains need {m} per axis")
    spacings = (fld.dt,) + tuple(fld.grid_spacing(a) for a in range(n_spatial))
    power = cfg.power if cfg.power is not None else max(max_deriv + 1, 4)
    tables = [_phi_tables(m, spacings[a], power, max(1, max_deriv))
              for a in range(n_axes)]

    def weight_tensor(orders_by_axis):
        w = tables[0][orders_by_axis[0]]
        for a in range(1, n_axes):
            w = np.multiply.outer(w, tables[a][orders_by_axis[a]])
        return w

    terms = pde_terms(n_vars, n_spatial, degree, max_deriv)
    K = cfg.num_domains
    # axis-major draw order: all K starts for the time axis, then axis x, ...
    starts = np.empty((K, n_axes), dtype=np.int64)
    for a in range(n_axes):
        starts[:, a] = cfg.rng.integers(0, lengths[a] - m + 1, size=K)

    values = fld.values
    poly_cache = {}

    def poly_field(exponents):
        key = tuple(exponents)
        if key not in poly_cache:
            out = np.ones(values.shape[:-1])
            for v, e in enumerate(key):
                for _ in range(e):
                    out = out * values[..., v]
            poly_cache[key] = out
        return poly_cache[key]

    deriv_cache = {}

    def deriv_field(var, orders):
        key = (var, tuple(orders))
        if key not in deriv_cache:
            work = values[..., var]
            for axis, order in enumerate(orders):
                if order > 0:
                    # values are (T, *spatial): spatial axis a sits at a + 1
                    work = pde.differentiate_axis(work, fld.grids[axis],
                                                  axis + 1, order,
                                                  fld.periodic[axis])
            deriv_cache[key] = work
        return deriv_cache[key]

    # Each plan is (field, second_field_or_None, weight_tensor, factor);
    # products are formed inside each box so no per-term full-size array
    # is ever materialized.
    plans = []
    zero_beta = (0,) * n_axes
    for t in terms:
        if t.deriv_var < 0:
            plans.append((poly_field(t.exponents), None,
                          weight_tensor(zero_beta), 1.0))
            continue
        orders = t.deriv_orders
        total = sum(orders)
        beta = (0,) + tuple(orders)
        if t.degree == 0:
            plans.append((values[..., t.deriv_var], None, weight_tensor(beta),
                          (-1.0) ** total))
            continue
        only_var = all(e == 0 or v == t.deriv_var
                       for v, e in enumerate(t.exponents))
        if only_var and total == 1:
            a_pow = t.exponents[t.deriv_var]
            lifted = [0] * n_vars
            lifted[t.deriv_var] = a_pow + 1
            plans.append((poly_field(tuple(lifted)), None, weight_tensor(beta),
                          -1.0 / (a_pow + 1)))
            continue
        plans.append((poly_field(t.exponents),
                      deriv_field(t.deriv_var, orders),
                      weight_tensor(zero_beta), 1.0))

    time_beta = (1,) + (0,) * n_spatial
    w_time = weight_tensor(time_beta)

    Q = np.empty((K, len(terms)))
    q0 = np.empty((K, n_vars))
    for kdx in range(K):
        box = tuple(slice(int(s), int(s) + m) for s in starts[kdx])
        for i, (f1, f2, w, factor) in enumerate(plans):
            vals = f1[box] if f2 is None else f1[box] * f2[box]
            Q[kdx, i] = factor * float(np.sum(w * vals))
        for j in range(n_vars):
            q0[kdx, j] = -float(np.sum(w_time * values[(*box, j)]))

    return CandidateLibrary(
        terms=terms, theta=Q, targets=q0, kind="weak-pde",
        meta={"degree": degree, "max_deriv": max_deriv,
              "points_per_domain": m, "num_domains": K, "power": power})
