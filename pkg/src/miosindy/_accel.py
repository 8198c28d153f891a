"""Optional numba acceleration layer.

Every hot kernel in :mod:`miosindy.kernels` is written once, in a numba-compatible
numpy subset, and decorated with the ``njit`` exported here. When numba is
installed and ``MIOSINDY_DISABLE_NUMBA`` is unset, the kernels are jit compiled;
otherwise ``njit`` degrades to an identity decorator and the same source runs as
plain numpy. ``benchmarks/bench_numba.py`` times the two paths against each other.
"""

import os


def _identity_jit(*args, **kwargs):
    # Supports both @njit and @njit(...) spellings.
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def wrap(func):
        return func

    return wrap


_flag = os.environ.get("MIOSINDY_DISABLE_NUMBA", "").strip().lower()
DISABLE_REQUESTED = _flag in ("1", "true", "yes", "on")

if DISABLE_REQUESTED:
    NUMBA_ENABLED = False
    njit = _identity_jit
else:
    try:
        from numba import njit  # noqa: F401

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - exercised via the env flag instead
        NUMBA_ENABLED = False
        njit = _identity_jit


def plain(func):
    """Return the pure-python implementation behind a possibly-jitted function."""
    return getattr(func, "py_func", func)


def is_jitted(func):
    return hasattr(func, "py_func")
