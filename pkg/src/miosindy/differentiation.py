"""Temporal derivative estimation on uniformly sampled trajectories.

Methods:
  centered   2nd-order centered differences
  fd4        4th-order centered differences
  savgol     direct Savitzky-Golay derivative (local polynomial fit of
             configurable order); the highest-accuracy choice on clean data
  smoothed   Savitzky-Golay smoothing (cubic, odd window) followed by
             centered differences; the choice for noisy measurements

All estimators carry systematic truncation bias that is a smooth function
of the state. On clean data that bias can be partially absorbed by a rich
candidate library, which matters for validation-based model selection: see
the selection module for how a second, independent estimator on the
validation split breaks that absorption.
"""

from dataclasses import dataclass

import numpy as np
from scipy.signal import savgol_filter

from .errors import TooFewSamples

_METHODS = ("centered", "fd4", "savgol", "smoothed")


@dataclass(frozen=True)
class Differentiator:
    """method from _METHODS; window (odd, >= 5) applies to 'smoothed' and
    'savgol'; polyorder applies to 'savgol' only and must stay below window."""

    method: str = "centered"
    window: int = 9
    polyorder: int = 3

    def __post_init__(self):
        if self.method not in _METHODS:
            raise ValueError(f"unknown differentiation method {self.method!r}")
        if self.method in ("smoothed", "savgol"):
            if self.window < 5 or self.window % 2 == 0:
                raise ValueError("smoothing window must be odd and >= 5")
        if self.method == "savgol":
            if not 1 <= self.polyorder < self.window:
                raise ValueError("savgol polyorder must satisfy 1 <= polyorder < window")


def _centered(values, dt):
    out = np.empty_like(values)
    out[1:-1] = (values[2:] - values[:-2]) / (2.0 * dt)
    # 2nd-order one-sided stencils at the ends
    out[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * dt)
    out[-1] = (3.0 * values[-1] - 4.0 * values[-2] + values[-3]) / (2.0 * dt)
    return out


def _fd4(values, dt):
    out = np.empty_like(values)
    out[2:-2] = (-values[4:] + 8.0 * values[3:-1]
                 - 8.0 * values[1:-3] + values[:-4]) / (12.0 * dt)
    # fall back to the 2nd-order stencils on the two-point margins
    edge = _centered(values[:5], dt)
    out[:2] = edge[:2]
    edge = _centered(values[-5:], dt)
    out[-2:] = edge[-2:]
    return out


def moving_average(values, window):
    """Symmetric moving average; the radius shrinks near the edges.

    Keeping the window symmetric everywhere preserves linear trends at the
    boundaries, which a clipped asymmetric window would bias.
    """
    n = values.shape[0]
    half = window // 2
    idx = np.arange(n)
    radius = np.minimum(half, np.minimum(idx, n - 1 - idx))
    csum = np.zeros((n + 1,) + values.shape[1:])
    np.cumsum(values, axis=0, out=csum[1:])
    lo = idx - radius
    hi = idx + radius + 1
    return (csum[hi] - csum[lo]) / (hi - lo).reshape(-1, *([1] * (values.ndim - 1)))


def differentiate(traj, diff=Differentiator()):
    """Estimate d(states)/dt on the trajectory grid. Returns (n, d)."""
    values = traj.states
    n = values.shape[0]
    if diff.method == "centered":
        if n < 3:
            raise TooFewSamples("centered differences need at least 3 samples")
        return _centered(values, traj.dt)
    if diff.method == "fd4":
        if n < 5:
            raise TooFewSamples("4th-order differences need at least 5 samples")
        return _fd4(values, traj.dt)
    if n < diff.window + 2:
        raise TooFewSamples(
            f"{diff.method} differences need at least window+2 = {diff.window + 2} samples")
    if diff.method == "savgol":
        return savgol_filter(values, diff.window, polyorder=diff.polyorder,
                             deriv=1, delta=traj.dt, axis=0)
    smooth = savgol_filter(values, diff.window, polyorder=3, axis=0)
    return _centered(smooth, traj.dt)
