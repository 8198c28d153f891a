"""Candidate feature libraries over trajectories and fields.

A Term is a monomial in the state variables, optionally multiplied by one
spatial derivative factor of one variable (PDE libraries). Column order is
deterministic: graded lexicographic for the polynomial part, derivative
features grouped by multi-index after the pure polynomials.
"""

import itertools
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels, pde
from .errors import DimensionMismatch, ZeroColumn


@dataclass(frozen=True)
class Term:
    """One candidate function: prod_v state_v^exponents[v] times an optional
    derivative factor D^{deriv_orders} applied to variable deriv_var."""

    exponents: tuple
    deriv_var: int = -1
    deriv_orders: tuple = ()

    @property
    def degree(self):
        return int(sum(self.exponents))

    @property
    def deriv_total(self):
        return int(sum(self.deriv_orders))

    def label(self, var_names=None, axis_names=("x", "y", "z")):
        d = len(self.exponents)
        if var_names is None:
            var_names = ([f"x{i}" for i in range(d)] if self.deriv_var < 0
                         else ["u", "v", "w"][:d])
        parts = []
        for v, e in enumerate(self.exponents):
            if e == 1:
                parts.append(var_names[v])
            elif e > 1:
                parts.append(f"{var_names[v]}^{e}")
        if self.deriv_var >= 0:
            sub = "".join(axis_names[a] * o for a, o in enumerate(self.deriv_orders))
            parts.append(f"{var_names[self.deriv_var]}_{sub}")
        return " ".join(parts) if parts else "1"


@dataclass(frozen=True)
class CandidateLibrary:
    """Evaluated candidate columns plus optional regression targets.

    theta: (samples, D); targets: (samples, d) or None; scales: per-column
    normalization divisors or None; kind tags how theta was produced.
    """

    terms: tuple
    theta: np.ndarray
    targets: object = None
    scales: object = None
    kind: str = "poly"
    meta: dict = field(default_factory=dict)

    @property
    def n_terms(self):
        return len(self.terms)

    def exponents_array(self):
        return np.array([t.exponents for t in self.terms], dtype=np.int64)

    def labels(self, var_names=None):
        return [t.label(var_names) for t in self.terms]

    def term_index(self):
        return {t: i for i, t in enumerate(self.terms)}

    def with_targets(self, targets):
        targets = np.asarray(targets, dtype=np.float64)
        if targets.shape[0] != self.theta.shape[0]:
            raise DimensionMismatch("targets row count must match theta")
        return replace(self, targets=targets)


def monomial_exponents(n_vars, degree, include_bias=True):
    """Exponent tuples in graded lexicographic order."""
    out = []
    lo = 0 if include_bias else 1
    for deg in range(lo, degree + 1):
        for combo in itertools.combinations_with_replacement(range(n_vars), deg):
            e = [0] * n_vars
            for v in combo:
                e[v] += 1
            out.append(tuple(e))
    return out


def _states_of(data):
    states = data.states if hasattr(data, "states") else np.asarray(data, dtype=np.float64)
    if states.ndim != 2:
        raise DimensionMismatch("expected a trajectory or an (n, d) array")
    return np.ascontiguousarray(states, dtype=np.float64)


def evaluate_monomials(states, exponents):
    """Evaluate a list of exponent tuples on (n, d) states. Returns (n, D)."""
    states = np.ascontiguousarray(states, dtype=np.float64)
    exps = np.asarray(exponents, dtype=np.int64).reshape(len(exponents), -1)
    if exps.shape[1] != states.shape[1]:
        raise DimensionMismatch(
            f"exponent width {exps.shape[1]} != state dimension {states.shape[1]}")
    return kernels.eval_monomials(states, exps)


def polynomial_library(data, degree, include_bias=True):
    """Monomial library of total degree <= degree over trajectory states."""
    states = _states_of(data)
    exps = monomial_exponents(states.shape[1], degree, include_bias)
    theta = evaluate_monomials(states, exps)
    terms = tuple(Term(exponents=e) for e in exps)
    return CandidateLibrary(terms=terms, theta=theta, kind="poly",
                            meta={"degree": degree, "include_bias": include_bias})


def derivative_multi_indices(n_axes, max_deriv):
    """All derivative multi-indices with 1 <= total order <= max_deriv,
    ordered by (total order, leading-axis-major)."""
    out = []
    for total in range(1, max_deriv + 1):
        for combo in itertools.combinations_with_replacement(range(n_axes), total):
            o = [0] * n_axes
            for a in combo:
                o[a] += 1
            out.append(tuple(o))
    return out


def pde_terms(n_vars, n_axes, degree, max_deriv):
    """Term list for a PDE library: {monomials} x {1, derivative features},
    excluding the constant-times-nothing column.

    The pure-polynomial group comes first (no constant), then one group per
    derivative feature, each spanning all monomials including the constant.
    """
    polys = monomial_exponents(n_vars, degree, include_bias=True)
    terms = [Term(exponents=e) for e in polys if sum(e) > 0]
    for var in range(n_vars):
        for orders in derivative_multi_indices(n_axes, max_deriv):
            for e in polys:
                terms.append(Term(exponents=e, deriv_var=var, deriv_orders=orders))
    return tuple(terms)


def _derivative_fields(fld, n_vars, n_axes, max_deriv):
    """values[(var, orders)] for every needed derivative, computed spectrally
    on the full field."""
    cache = {}
    for var in range(n_vars):
        for orders in derivative_multi_indices(n_axes, max_deriv):
            work = fld.values[..., var]
            for axis, order in enumerate(orders):
                if order > 0:
                    work = pde.differentiate_axis(work, fld.grids[axis], axis + 1,
                                                  order, fld.periodic[axis])
            cache[(var, orders)] = work
    return cache


def pde_library(fld, degree, max_deriv):
    """Differential-form PDE library on every space-time sample.

    Columns follow :func:`pde_terms`; the target is the time derivative of
    each field variable (2nd-order differences on the time axis).
    """
    n_vars = fld.values.shape[-1]
    n_axes = len(fld.grids)
    terms = pde_terms(n_vars, n_axes, degree, max_deriv)
    n_samples = int(np.prod(fld.values.shape[:-1]))
    flat_states = fld.values.reshape(n_samples, n_vars)

    poly_exps = monomial_exponents(n_vars, degree, include_bias=True)
    poly_vals = evaluate_monomials(flat_states, poly_exps)
    poly_col = {tuple(e): poly_vals[:, i] for i, e in enumerate(poly_exps)}

    deriv_cache = _derivative_fields(fld, n_vars, n_axes, max_deriv)
    theta = np.empty((n_samples, len(terms)))
    for i, t in enumerate(terms):
        col = poly_col[t.exponents]
        if t.deriv_var >= 0:
            col = col * deriv_cache[(t.deriv_var, t.deriv_orders)].reshape(n_samples)
        theta[:, i] = col

    dt = float(fld.times[1] - fld.times[0])
    targets = np.gradient(fld.values, dt, axis=0).reshape(n_samples, n_vars)
    return CandidateLibrary(terms=terms, theta=theta, targets=targets, kind="pde",
                            meta={"degree": degree, "max_deriv": max_deriv})


def normalize_columns(lib):
    """Rescale theta to unit column 2-norm; records the divisors in scales.

    Coefficients fitted in the normalized basis map back to the original one
    as xi_original = xi_normalized / scales.
    """
    norms = np.linalg.norm(lib.theta, axis=0)
    if np.any(norms < 1e-150):
        bad = [lib.terms[i].label() for i in np.nonzero(norms < 1e-150)[0]]
        raise ZeroColumn(f"numerically zero candidate columns: {bad}")
    return replace(lib, theta=lib.theta / norms, scales=norms)


def unscale_coefficients(xi, scales):
    """Map coefficients from the normalized basis back to the raw basis."""
    if scales is None:
        return xi
    xi = np.asarray(xi, dtype=np.float64)
    if xi.ndim == 1:
        return xi / scales
    return xi / scales[:, None]


def gradient_constraints(terms):
    """Equality constraints making a stacked 2-equation polynomial model a
    gradient field: d(eq1)/dy == d(eq2)/dx monomial by monomial.

    terms must be monomials over exactly 2 variables. Returns (A, b) over the
    stacked coefficient vector [xi_eq1; xi_eq2], one row per monomial of the
    derivative space; b is zero.
    """
    D = len(terms)
    rows = {}
    for t_idx, term in enumerate(terms):
        if len(term.exponents) != 2 or term.deriv_var >= 0:
            raise DimensionMismatch(
                "gradient constraints need a 2-variable monomial basis")
        i, j = term.exponents
        if j >= 1:
            key = (i, j - 1)
            rows.setdefault(key, np.zeros(2 * D))[t_idx] += j
        if i >= 1:
            key = (i - 1, j)
            rows.setdefault(key, np.zeros(2 * D))[D + t_idx] -= i
    keys = sorted(rows)
    a_mat = np.stack([rows[k] for k in keys])
    return a_mat, np.zeros(len(keys))
