"""Sand functional, separated configurations and plateaus of edge vectors.

An edge vector ``x = (x_1, ..., x_K)`` is read through its antiderivative
``l_0 = 0, l_k = l_{k-1} + x_k``. The sand ``S(x)`` is the volume needed to
fill ``l`` up to its maximum.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .discrete import Trajectory


class SeparationWarning(UserWarning):
    """Plateaus were requested for a configuration that is not separated."""


def antiderivative(x, l0: float = 0.0) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return l0 + np.concatenate([[0.0], np.cumsum(x)])


def sand(x) -> float:
    l = antiderivative(x)
    return float(np.sum(l.max() - l))


def lyapunov_w(x, chi: float) -> float:
    if not chi > 0:
        raise ValueError("chi must be positive")
    return float(np.exp(chi * sand(x)))


@dataclass(frozen=True)
class SeparationParams:
    t: float
    a: float
    A: float

    def __post_init__(self):
        if not (self.t > 0 and self.a > 0 and self.A > self.a):
            raise ValueError(f"need t > 0 and A > a > 0, got t={self.t}, a={self.a}, A={self.A}")

    @property
    def small(self) -> float:
        return self.a * self.t

    @property
    def large(self) -> float:
        return self.A * self.t


def is_separated(x, params: SeparationParams) -> bool:
    ax = np.abs(np.asarray(x, dtype=float))
    small = ax <= params.small
    large = ax > params.large
    return bool(np.all(small | large) and np.any(large))


def _is_plateau(x, l: int, r: int, params: SeparationParams) -> bool:
    """Check the defining conditions of the site interval ``{l, ..., r-1}``."""
    K = x.size
    inner = all(abs(x[j - 1]) < params.small for j in range(l + 1, r))
    left = l == 0 or x[l - 1] > params.large
    right = r == K + 1 or x[r - 1] < -params.large
    return inner and left and right


def plateaus(x, params: SeparationParams) -> list[range]:
    """Plateaus of a separated configuration, left to right, as site ranges.

    A non-separated ``x`` yields ``[]`` together with a
    :class:`SeparationWarning`.
    """
    x = np.asarray(x, dtype=float)
    if not is_separated(x, params):
        warnings.warn("configuration is not separated; no plateaus reported", SeparationWarning, stacklevel=2)
        return []
    K = x.size
    found = []
    starts = [0] + [j for j in range(1, K + 1) if x[j - 1] > params.large]
    for l in starts:
        r = l + 1
        while r <= K and abs(x[r - 1]) < params.small:
            r += 1
        if r == K + 1 or x[r - 1] < -params.large:
            found.append(range(l, r))
    return found


def plateaus_brute_force(x, params: SeparationParams) -> list[range]:
    """Every interval satisfying the plateau conditions (no separation check)."""
    x = np.asarray(x, dtype=float)
    K = x.size
    return [range(l, r) for l in range(K + 1) for r in range(l + 1, K + 2) if _is_plateau(x, l, r, params)]


@dataclass(frozen=True)
class SandDrift:
    """Sand along a logged trajectory against ``S(x_0) - t + (K + 1) M_t``."""

    times: np.ndarray
    sand: np.ndarray
    predicted: np.ndarray
    time_at_max: np.ndarray

    @property
    def max_residual(self) -> float:
        return float(np.max(np.abs(self.sand - self.predicted)))


def sand_drift_check(traj: Trajectory) -> SandDrift:
    """Track the time spent at the running maximum of the tilted profile.

    The tilted profile is ``L_t + l`` with ``l`` the antiderivative of the
    initial edge vector (divided by ``gamma``, which reduces any ``gamma`` to
    the unit case). While the walker's site holds the maximum the sand grows
    at rate ``K``; otherwise it shrinks at unit rate. Each sojourn is split at
    the instant the walker's column overtakes the current maximum.
    """
    if not traj.landscape.is_flat:
        raise ValueError("the sand identity holds for flat landscapes only")
    if not traj.log_complete:
        raise ValueError("trajectory has no complete event log")
    g = traj.gamma
    K = traj.landscape.K
    tilt = antiderivative(traj.init.x0 / g)
    t0 = traj.init.t
    m = 0.0
    times, sands, preds, ms = [], [], [], []
    s0 = sand(traj.init.x / g)
    for t_start, t_end, site, L_start in traj.segments():
        profile = L_start + tilt
        top = profile.max()
        d = t_end - t_start
        m += min(d, max(0.0, profile[site] + d - top))
        L_end = L_start.copy()
        L_end[site] += d
        x = traj.init.x0 / g + (L_end[1:] - L_end[:-1])
        times.append(t_end)
        sands.append(sand(x))
        preds.append(s0 - (t_end - t0) + (K + 1) * m)
        ms.append(m)
    return SandDrift(np.array(times), np.array(sands), np.array(preds), np.array(ms))
