"""Benchmark ODE systems, RK4 integration, initial-condition samplers, noise.

Each system carries its ground-truth coefficients as a sparse map from
monomial exponent tuples to values, so any polynomial candidate library can
embed the truth exactly.
"""

import functools
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from ._accel import is_jitted, plain
from .errors import DimensionMismatch, Diverged, UnknownSystem


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled states: times (n,), states (n, d)."""

    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        states = np.asarray(self.states, dtype=np.float64)
        if times.ndim != 1 or states.ndim != 2 or states.shape[0] != times.shape[0]:
            raise DimensionMismatch(
                f"times {times.shape} and states {states.shape} do not align")
        if times.shape[0] >= 2:
            steps = np.diff(times)
            dt = steps[0]
            if dt <= 0 or np.abs(steps - dt).max() > 1e-12 * max(1.0, abs(dt)) * times.shape[0]:
                raise DimensionMismatch("times must be uniformly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)

    @property
    def n(self):
        return self.states.shape[0]

    @property
    def dim(self):
        return self.states.shape[1]

    @property
    def dt(self):
        if self.times.shape[0] < 2:
            return 0.0
        return float(self.times[1] - self.times[0])

    @property
    def duration(self):
        return float(self.times[-1] - self.times[0])

    def segment(self, start, stop):
        """Row slice [start, stop) as a new trajectory."""
        return Trajectory(self.times[start:stop].copy(), self.states[start:stop].copy())


@dataclass(frozen=True)
class OdeSystem:
    """A named dynamical system dx/dt = rhs(x, params).

    true_terms holds, per dimension, tuples of (exponent tuple, coefficient)
    describing the exact polynomial right-hand side.
    """

    name: str
    dim: int
    params: np.ndarray
    rhs: object
    true_terms: tuple
    param_names: tuple = field(default=())

    def rhs_at(self, x):
        x = np.ascontiguousarray(np.asarray(x, dtype=np.float64))
        return np.asarray(self.rhs(x, self.params), dtype=np.float64)

    def true_coefficients(self, exponents):
        """Ground-truth coefficient matrix for an ordered monomial basis.

        exponents: sequence of length-d integer tuples. Returns (D, d).
        Raises ValueError when a true term is missing from the basis.
        """
        index = {tuple(int(e) for e in ex): i for i, ex in enumerate(exponents)}
        xi = np.zeros((len(index), self.dim))
        for j, terms in enumerate(self.true_terms):
            for ex, coef in terms:
                if ex not in index:
                    raise ValueError(
                        f"true term {ex} of {self.name} dim {j} not in the basis")
                xi[index[ex], j] = coef
        return xi

    def true_support(self):
        """Per-dimension sets of exponent tuples with nonzero truth."""
        return tuple(frozenset(ex for ex, _ in terms) for terms in self.true_terms)


def _make(name, dim, params, rhs, true_terms, param_names=()):
    return OdeSystem(name=name, dim=dim, params=np.asarray(params, dtype=np.float64),
                     rhs=rhs, true_terms=true_terms, param_names=tuple(param_names))


_SIGMA, _RHO, _BETA = 10.0, 28.0, 8.0 / 3.0
_HOPF_MU, _HOPF_OMEGA, _HOPF_AMP = -0.05, 1.0, 1.0
_DUFF_OMEGA, _DUFF_ALPHA = -2.0, 0.1
_VDP_MU = 3.0
_LOTKA_P1, _LOTKA_P2 = 1.0, 10.0
_ROSSLER_A, _ROSSLER_B, _ROSSLER_C = 0.2, 0.2, 5.7


def _registry():
    systems = {}

    systems["lorenz"] = _make(
        "lorenz", 3, (_SIGMA, _RHO, _BETA), kernels.rhs_lorenz,
        (
            (((1, 0, 0), -_SIGMA), ((0, 1, 0), _SIGMA)),
            (((1, 0, 0), _RHO), ((0, 1, 0), -1.0), ((1, 0, 1), -1.0)),
            (((1, 1, 0), 1.0), ((0, 0, 1), -_BETA)),
        ),
        ("sigma", "rho", "beta"))

    systems["hopf"] = _make(
        "hopf", 2, (_HOPF_MU, _HOPF_OMEGA, _HOPF_AMP), kernels.rhs_hopf,
        (
            (((1, 0), _HOPF_MU), ((0, 1), _HOPF_OMEGA),
             ((3, 0), -_HOPF_AMP), ((1, 2), -_HOPF_AMP)),
            (((1, 0), -_HOPF_OMEGA), ((0, 1), _HOPF_MU),
             ((2, 1), -_HOPF_AMP), ((0, 3), -_HOPF_AMP)),
        ),
        ("mu", "omega", "amp"))

    systems["mhd"] = _make(
        "mhd", 6, (), kernels.rhs_mhd,
        (
            (((0, 1, 1, 0, 0, 0), 4.0), ((0, 0, 0, 0, 1, 1), -4.0)),
            (((1, 0, 1, 0, 0, 0), -7.0), ((0, 0, 0, 1, 0, 1), 7.0)),
            (((1, 1, 0, 0, 0, 0), 3.0), ((0, 0, 0, 1, 1, 0), -3.0)),
            (((0, 1, 0, 0, 0, 1), 2.0), ((0, 0, 1, 0, 1, 0), -2.0)),
            (((0, 0, 1, 1, 0, 0), 5.0), ((1, 0, 0, 0, 0, 1), -5.0)),
            (((1, 0, 0, 0, 1, 0), 9.0), ((0, 1, 0, 1, 0, 0), -9.0)),
        ))

    systems["duffing"] = _make(
        "duffing", 4, (_DUFF_OMEGA, _DUFF_ALPHA), kernels.rhs_duffing,
        (
            (((0, 0, 1, 0), 1.0),),
            (((0, 0, 0, 1), 1.0),),
            (((1, 0, 0, 0), _DUFF_OMEGA), ((3, 0, 0, 0), -_DUFF_ALPHA),
             ((1, 2, 0, 0), -_DUFF_ALPHA)),
            (((0, 1, 0, 0), _DUFF_OMEGA), ((2, 1, 0, 0), -_DUFF_ALPHA),
             ((0, 3, 0, 0), -_DUFF_ALPHA)),
        ),
        ("omega", "alpha"))

    systems["vanderpol"] = _make(
        "vanderpol", 2, (_VDP_MU,), kernels.rhs_vanderpol,
        (
            (((0, 1), 1.0),),
            (((1, 0), -1.0), ((0, 1), _VDP_MU), ((2, 1), -_VDP_MU)),
        ),
        ("mu",))

    systems["lotka"] = _make(
        "lotka", 2, (_LOTKA_P1, _LOTKA_P2), kernels.rhs_lotka,
        (
            (((1, 0), _LOTKA_P1), ((1, 1), -_LOTKA_P2)),
            (((1, 1), _LOTKA_P2), ((0, 1), -2.0 * _LOTKA_P1)),
        ),
        ("p1", "p2"))

    systems["rossler"] = _make(
        "rossler", 3, (_ROSSLER_A, _ROSSLER_B, _ROSSLER_C), kernels.rhs_rossler,
        (
            (((0, 1, 0), -1.0), ((0, 0, 1), -1.0)),
            (((1, 0, 0), 1.0), ((0, 1, 0), _ROSSLER_A)),
            (((0, 0, 0), _ROSSLER_B), ((0, 0, 1), -_ROSSLER_C), ((1, 0, 1), 1.0)),
        ),
        ("a", "b", "c"))

    return systems


_SYSTEMS = _registry()


def get_system(name):
    try:
        return _SYSTEMS[name]
    except KeyError:
        raise UnknownSystem(f"no system named {name!r}; "
                            f"known: {sorted(_SYSTEMS)}") from None


def system_names():
    return sorted(_SYSTEMS)


def rk4_integrate(system, x0, t_end, dt, substeps=1):
    """Fixed-step RK4 from t=0 to t_end inclusive, sampled every dt.

    substeps > 1 subdivides each output interval so the flow error can be
    pushed below the derivative-estimation error floor when needed.
    """
    x0 = np.ascontiguousarray(np.asarray(x0, dtype=np.float64))
    if x0.shape != (system.dim,):
        raise DimensionMismatch(
            f"x0 has shape {x0.shape}, system dimension is {system.dim}")
    if dt <= 0:
        raise ValueError("dt must be positive")
    if t_end < dt:
        raise ValueError("t_end must be at least dt")
    if substeps < 1:
        raise ValueError("substeps must be a positive integer")
    n_steps = int(round(t_end / dt))
    params = np.ascontiguousarray(system.params, dtype=np.float64)
    # A jitted driver can only take a jitted rhs; plain callables (ad-hoc
    # test systems) run through the pure-python driver.
    drive = kernels.rk4_drive if is_jitted(system.rhs) else plain(kernels.rk4_drive)
    states, done = drive(system.rhs, x0, n_steps, dt, params, int(substeps))
    if done < n_steps:
        t_bad = (done + 1) * dt
        raise Diverged(
            f"{system.name} trajectory left the trusted region at t={t_bad:.6g}",
            time=t_bad)
    times = np.arange(n_steps + 1, dtype=np.float64) * dt
    return Trajectory(times, states)


def ad_hoc_system(name, dim, rhs, params=()):
    """Wrap a plain python rhs(x, params) for testing and exploration."""
    return OdeSystem(name=name, dim=dim,
                     params=np.asarray(params, dtype=np.float64),
                     rhs=rhs, true_terms=tuple(() for _ in range(dim)))


# ---------------------------------------------------------------------------
# Initial-condition samplers. Draw order is fixed per system; do not reorder.
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=1)
def _rossler_reference():
    # Reference trajectory from (5, 3, 0): 100 s at dt = 0.002, first 10 s
    # discarded as transient.
    sys_ = get_system("rossler")
    traj = rk4_integrate(sys_, np.array([5.0, 3.0, 0.0]), 100.0, 0.002)
    keep = traj.states[int(round(10.0 / 0.002)):]
    return keep, keep.std(axis=0)


def sample_initial_condition(system, rng):
    """Draw one initial state from the system's documented sampling volume."""
    name = system.name if isinstance(system, OdeSystem) else str(system)
    if name not in _SYSTEMS:
        raise UnknownSystem(f"no sampler for {name!r}")
    if name == "lorenz":
        xy = rng.uniform(-5.0, 5.0, 2)
        z = rng.uniform(10.0, 40.0)
        return np.array([xy[0], xy[1], z])
    if name == "hopf":
        radius = rng.uniform(0.75, 1.25)
        angle = rng.uniform(0.0, 2.0 * np.pi)
        return np.array([radius * np.cos(angle), radius * np.sin(angle)])
    if name == "mhd":
        return rng.uniform(-1.5, 1.5, 6)
    if name == "duffing":
        return rng.uniform(-np.pi, np.pi, 4)
    if name == "vanderpol":
        return np.array([rng.uniform(-1.0, 1.0), rng.uniform(-3.0, 3.0)])
    if name == "lotka":
        return rng.uniform(0.0, 1.0, 2)
    if name == "rossler":
        states, col_std = _rossler_reference()
        row = int(rng.integers(0, states.shape[0]))
        point = states[row] + rng.normal(0.0, 1.0, 3) * (0.1 * col_std)
        point[2] = abs(point[2])
        return point
    raise UnknownSystem(name)


def add_noise(traj, percent, rng):
    """Additive i.i.d. Gaussian noise scaled to a percentage of the RMS signal.

    std = (percent/100) * ||X||_F / sqrt(n*d), one global level for all
    entries. percent = 0 returns an identical copy without consuming draws.
    """
    if percent < 0:
        raise ValueError("noise percent must be nonnegative")
    if percent == 0:
        return Trajectory(traj.times.copy(), traj.states.copy())
    scale = (percent / 100.0) * np.linalg.norm(traj.states) / np.sqrt(traj.states.size)
    noisy = traj.states + rng.normal(0.0, scale, traj.states.shape)
    return Trajectory(traj.times.copy(), noisy)
