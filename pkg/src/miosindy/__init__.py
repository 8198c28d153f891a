"""miosindy: sparse identification of nonlinear dynamics with an exact
branch-and-bound subset-selection solver, plus the heuristic baselines,
weak-form libraries, and experiment harness used to compare them."""

from ._accel import NUMBA_ENABLED
from .baselines import EnsembleConfig, StlsqConfig, ensemble_stlsq, ssr, stlsq
from .differentiation import Differentiator, differentiate
from .errors import (DegenerateSampleSize, DimensionMismatch, Diverged,
                     DomainTooSmall, InfeasibleConstraints, InvalidProblem,
                     MiosindyError, OrderUnsupported, ShapeMismatch,
                     SingularSupport, SingularSystem, TooFewSamples,
                     UnknownSystem, ZeroColumn, ZeroRssWarning)
from .library import (CandidateLibrary, Term, gradient_constraints,
                      monomial_exponents, normalize_columns, pde_library,
                      polynomial_library, unscale_coefficients)
from .linalg import constrained_ridge_solve, ridge_solve
from .metrics import (MetricReport, coefficient_error, constraint_violation,
                      derivative_rmse, true_positivity_rate)
from .pde import (Field, simulate_ks, simulate_reaction_diffusion,
                  spatial_derivative, spiral_initial_condition)
from .rng import RngStream
from .selection import (SelectionConfig, SelectionResult, aicc, select_joint,
                        select_model)
from .solver import (BnbConfig, Constraints, JointSolution,
                     SparseRegressionProblem, SparseSolution, objective_value,
                     problem_from_data, solve_joint, solve_sparse, unbias)
from .systems import (OdeSystem, Trajectory, add_noise, get_system,
                      rk4_integrate, sample_initial_condition, system_names)
from .weak import WeakConfig, weak_form

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
