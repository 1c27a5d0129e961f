"""Local-time profiles of the flat discrete walk and their spatial description.

On a flat landscape with ``gamma = 1`` the edge variable ``X(k)``, watched
only while the walker sits at ``k - 1``, is a Markov process ``eta_k^-`` in
its own clock ``L(k - 1)``: it decreases at unit speed and, at hazard
``exp(-beta * y)``, jumps up to a value drawn from the kernel ``q(y, .)``.
The same holds for ``-X(k)`` watched at ``k`` (``eta_k^+``). Stopping the
walk when the local time at ``j`` reaches ``r`` gives a profile ``Lambda``
that can equivalently be built site by site from independent ``eta``'s.

The kernel ``q(y, .)`` lives on ``[y, inf)`` with survival function
``exp(-(exp(beta * max(x, y)) - exp(beta * y)) / beta)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numba
import numpy as np

from .discrete import Landscape, PdmpState, SimParams, Trajectory, simulate
from .stats import adaptive_quadrature
from .streams import as_generator, derive_stream


class TargetNotReached(RuntimeError):
    """The local time at the anchor site never reached the requested level."""


# ---------------------------------------------------------------------------
# jump kernel q


def q_survival(y, x, beta: float):
    """``P(Z > x)`` for ``Z ~ q(y, .)``."""
    y = np.asarray(y, dtype=float)
    top = np.maximum(x, y)
    # (e^{b top} - e^{b y}) / b = e^{b y} expm1(b (top - y)) / b, kept in log space
    with np.errstate(over="ignore", divide="ignore"):
        log_mass = beta * y + np.log(np.expm1(beta * (top - y))) - np.log(beta)
        out = np.exp(-np.exp(log_mass))
    return np.where(top > y, out, 1.0)


@numba.njit(cache=True)
def _logaddexp(a, b):
    hi = max(a, b)
    return hi + np.log1p(np.exp(-abs(a - b)))


@numba.njit(cache=True)
def _q_from_exponential(y, beta, v):
    """Inverse transform with ``v = -log U``: ``log(e^{beta y} + beta v) / beta``."""
    return _logaddexp(beta * y, np.log(beta * v)) / beta


def q_sample_from_uniform(y, beta: float, u):
    y = np.asarray(y, dtype=float)
    v = -np.log(np.asarray(u, dtype=float))
    # u = 1 gives v = 0, a jump of size zero; log(0) = -inf is absorbed by logaddexp
    with np.errstate(divide="ignore"):
        return np.logaddexp(beta * y, np.log(beta * v)) / beta


def q_sample(y, beta: float, rng=None, size=None):
    """Draw from ``q(y, .)`` (vectorised over ``y`` or repeated ``size`` times)."""
    rng = as_generator(rng)
    y = np.asarray(y, dtype=float)
    shape = y.shape if size is None else size
    v = rng.standard_exponential(shape)
    return np.logaddexp(beta * y, np.log(beta * v)) / beta


# ---------------------------------------------------------------------------
# eta processes


@numba.njit(cache=True)
def _time_to_jump(y, beta, e):
    # integrated hazard e^{-beta y} (e^{beta u} - 1) / beta = e, solved for u
    z = np.log(beta * e) + beta * y
    if z > 0.0:
        return (z + np.log1p(np.exp(-z))) / beta
    return np.log1p(np.exp(z)) / beta


@numba.njit(cache=True)
def _eta_run(y, s_target, beta, rng):
    s = 0.0
    while True:
        u = _time_to_jump(y, beta, rng.standard_exponential())
        if s + u >= s_target:
            return y - (s_target - s)
        s += u
        y = _q_from_exponential(y - u, beta, rng.standard_exponential())


@numba.njit(cache=True)
def _eta_grid(y, horizon, dt, beta, rng, out):
    """Values of eta at the times ``dt, 2 dt, ...`` (``out`` sized by the caller)."""
    s = 0.0
    n = 0
    while n < out.shape[0]:
        u = _time_to_jump(y, beta, rng.standard_exponential())
        while n < out.shape[0] and (n + 1) * dt < s + u:
            out[n] = y - ((n + 1) * dt - s)
            n += 1
        s += u
        y = _q_from_exponential(y - u, beta, rng.standard_exponential())
    return n


@dataclass(frozen=True)
class EtaStart:
    """Initial law of an eta process: a point mass or the kernel ``q(value, .)``."""

    value: float
    kernel: bool = False

    def draw(self, beta: float, rng) -> float:
        if self.kernel:
            return float(_q_from_exponential(self.value, beta, rng.standard_exponential()))
        return float(self.value)


def eta_initial(k: int, sign: str, i0: int, x0k: float) -> EtaStart:
    """Initial law of ``eta_k^-`` (``sign='-'``) or ``eta_k^+`` for a walk from ``i0``.

    ``eta_k^-`` starts at ``x0(k)`` if the walker starts left of ``k`` and
    from ``q(x0(k), .)`` otherwise; ``eta_k^+`` starts from ``q(-x0(k), .)``
    if the walker starts left of ``k`` and at ``-x0(k)`` otherwise.
    """
    left = i0 < k
    if sign == "-":
        return EtaStart(x0k, kernel=not left)
    if sign == "+":
        return EtaStart(-x0k, kernel=left)
    raise ValueError(f"sign must be '-' or '+', got {sign!r}")


def eta_simulate(start, s_target: float, beta: float, rng=None) -> float:
    """Value of an eta process at its own time ``s_target``.

    ``start`` is a number (point mass) or an :class:`EtaStart`.
    """
    if s_target < 0:
        raise ValueError(f"s_target must be non-negative, got {s_target}")
    rng = as_generator(rng)
    if not isinstance(start, EtaStart):
        start = EtaStart(float(start))
    y0 = start.draw(beta, rng)
    if s_target == 0:
        return y0
    return float(_eta_run(y0, float(s_target), beta, rng))


def eta_time_to_first_jump(y0: float, beta: float, e: float) -> float:
    """Time until the first jump from ``y0`` for an ``Exp(1)`` level ``e``."""
    return float(_time_to_jump(y0, beta, e))


def eta_grid_samples(start, horizon: float, dt: float, beta: float, rng=None) -> np.ndarray:
    """Eta observed on the grid ``dt, 2 dt, ..., horizon`` along one path."""
    rng = as_generator(rng)
    if not isinstance(start, EtaStart):
        start = EtaStart(float(start))
    out = np.empty(int(np.floor(horizon / dt + 1e-9)))
    _eta_grid(start.draw(beta, rng), horizon, dt, beta, rng, out)
    return out


def stationary_log_density(x, beta: float):
    """Unnormalised log density of the eta limit law, ``-(2/beta) cosh(beta x)``."""
    return -(2.0 / beta) * np.cosh(beta * np.asarray(x, dtype=float))


def stationary_cdf(beta: float) -> Callable:
    """Vectorised CDF of the eta limit law, tabulated on a fine grid."""
    c = 2.0 / beta
    half = (np.arccosh(1.0 + 60.0 / c) + 1.0) / beta
    u = np.linspace(-half, half, 400_001)
    dens = np.exp(-c * (np.cosh(beta * u) - 1.0))
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(u))])
    cum /= cum[-1]
    return lambda x: np.interp(np.asarray(x, dtype=float), u, cum, left=0.0, right=1.0)


# ---------------------------------------------------------------------------
# extraction from direct trajectories


@dataclass(frozen=True)
class EtaPath:
    """Piecewise-linear path of ``eta_k^-`` in its own clock.

    Piece ``n`` runs over ``[s0[n], s1[n]]`` starting at ``y0[n]`` with slope
    ``-1``; values jump upward between pieces.
    """

    s0: np.ndarray
    s1: np.ndarray
    y0: np.ndarray

    @property
    def duration(self) -> float:
        return float(self.s1[-1] - self.s0[0]) if self.s0.size else 0.0

    def knots(self) -> tuple[np.ndarray, np.ndarray]:
        """``(s, value)`` at the start and end of every piece."""
        s = np.column_stack([self.s0, self.s1]).ravel()
        y = np.column_stack([self.y0, self.y0 - (self.s1 - self.s0)]).ravel()
        return s, y

    def value_at(self, s: float) -> float:
        """Right-continuous value at clock ``s``."""
        if not self.s0.size or s < self.s0[0] or s > self.s1[-1]:
            raise ValueError(f"clock {s} outside the extracted range")
        n = int(np.searchsorted(self.s0, s, side="right")) - 1
        return float(self.y0[n] - (s - self.s0[n]))


def _require_flat_unit(traj: Trajectory):
    if not traj.log_complete:
        raise ValueError("extraction needs a trajectory with a complete event log")
    if not traj.landscape.is_flat or traj.gamma != 1.0:
        raise ValueError("extraction needs a flat landscape with gamma = 1")


def extract_eta_minus(traj: Trajectory, k: int) -> EtaPath:
    """Time-change ``X(k)`` by the local time at ``k - 1``.

    Only the sojourns at ``k - 1`` are kept; the rise of ``X(k)`` during visits
    to ``k`` shows up as an upward jump between consecutive pieces.
    """
    _require_flat_unit(traj)
    K = traj.landscape.K
    if not 1 <= k <= K:
        raise ValueError(f"edge index {k} outside 1..{K}")
    x0 = traj.init.x0
    s0, s1, y0 = [], [], []
    for t_start, t_end, site, L in traj.segments():
        if site != k - 1 or t_end <= t_start:
            continue
        start = L[k - 1]
        s0.append(start)
        s1.append(start + (t_end - t_start))
        y0.append(x0[k - 1] + (L[k] - L[k - 1]))
    return EtaPath(np.array(s0), np.array(s1), np.array(y0))


def extract_eta_plus(traj: Trajectory, k: int) -> EtaPath:
    """Time-change ``-X(k)`` by the local time at ``k``."""
    _require_flat_unit(traj)
    K = traj.landscape.K
    if not 1 <= k <= K:
        raise ValueError(f"edge index {k} outside 1..{K}")
    x0 = traj.init.x0
    s0, s1, y0 = [], [], []
    for t_start, t_end, site, L in traj.segments():
        if site != k or t_end <= t_start:
            continue
        s0.append(L[k])
        s1.append(L[k] + (t_end - t_start))
        y0.append(-(x0[k - 1] + (L[k] - L[k - 1])))
    return EtaPath(np.array(s0), np.array(s1), np.array(y0))


# ---------------------------------------------------------------------------
# local-time profiles


@dataclass(frozen=True)
class LocalTimeProfile:
    j: int
    r: float
    values: np.ndarray
    stop_time: Optional[float] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if np.any(values < 0):
            raise ValueError("local times must be non-negative")
        object.__setattr__(self, "values", values)


def direct_profile(traj: Trajectory, j: int, r: float) -> LocalTimeProfile:
    """Local times at the first instant ``L(j)`` reaches ``r``, read off a logged path."""
    if not r > 0:
        raise ValueError("target local time r must be positive")
    if not traj.log_complete:
        raise ValueError("replaying needs a trajectory with a complete event log")
    for t_start, t_end, site, L in traj.segments():
        if site == j and L[j] + (t_end - t_start) >= r:
            d = r - L[j]
            values = L.copy()
            values[j] = r
            return LocalTimeProfile(j, r, values, stop_time=t_start + d)
    raise TargetNotReached(f"local time at site {j} stayed below {r} up to t = {traj.t}")


def simulate_direct_profile(K: int, x0, i0: int, j: int, r: float, beta: float, rng) -> LocalTimeProfile:
    """Run the flat walk from ``(x0, i0)`` until ``L(j) = r`` and return its local times."""
    params = SimParams(inv_temp=beta, gamma=1.0, horizon=np.finfo(float).max)
    traj = simulate(
        Landscape.flat(K), PdmpState.start(x0, i0), params, rng, checkpoints=0, stop_at=(j, r)
    )
    if not traj.stopped:
        raise TargetNotReached(f"local time at site {j} stayed below {r}")
    values = traj.local_times.copy()
    values[j] = r
    return LocalTimeProfile(j, r, values, stop_time=traj.t)


def rk_walk_profile(x0, i0: int, j: int, r: float, beta: float, rng=None) -> LocalTimeProfile:
    """Build the profile site by site from independent eta processes."""
    if not r > 0:
        raise ValueError("target local time r must be positive")
    rng = as_generator(rng)
    x0 = np.asarray(x0, dtype=float)
    K = x0.size
    lam = np.zeros(K + 1)
    lam[j] = r
    for k in range(j + 1, K + 1):
        eta = eta_simulate(eta_initial(k, "-", i0, x0[k - 1]), lam[k - 1], beta, rng)
        lam[k] = _nonnegative(lam[k - 1] + eta - x0[k - 1], k)
    for k in range(j, 0, -1):
        eta = eta_simulate(eta_initial(k, "+", i0, x0[k - 1]), lam[k], beta, rng)
        lam[k - 1] = _nonnegative(lam[k] + eta + x0[k - 1], k - 1)
    return LocalTimeProfile(j, r, lam)


def _nonnegative(value: float, site: int) -> float:
    if value < 0:
        # the recursion is non-negative pathwise; only rounding can undershoot
        if value > -1e-9:
            return 0.0
        raise ArithmeticError(f"negative local time {value} at site {site}")
    return value


def sample_profiles(source: str, K: int, x0, i0: int, j: int, r: float, beta: float, replicas: int, seed: int):
    """``replicas`` profiles (rows) from the ``'direct'`` or ``'walk'`` construction."""
    if source not in ("direct", "walk"):
        raise ValueError(f"unknown profile source {source!r}")
    x0 = np.zeros(K) if x0 is None else np.asarray(x0, dtype=float)
    out = np.empty((replicas, K + 1))
    for n in range(replicas):
        rng = derive_stream(seed, n)
        if source == "direct":
            out[n] = simulate_direct_profile(K, x0, i0, j, r, beta, rng).values
        else:
            out[n] = rk_walk_profile(x0, i0, j, r, beta, rng).values
    return out


# ---------------------------------------------------------------------------
# Lyapunov function of the eta generator


def wh_lyapunov(x, s: float):
    """``2`` below ``-s-1``, smoothstep bridge down to ``1`` on ``[-s-1, -s]``,
    ``1`` on ``[-s, s]`` and ``exp(2(x - s))`` above ``s``."""
    if not s > 0:
        raise ValueError("s must be positive")
    x = np.asarray(x, dtype=float)
    u = np.clip(x + s + 1.0, 0.0, 1.0)
    bridge = 2.0 - u * u * (3.0 - 2.0 * u)
    with np.errstate(over="ignore"):
        upper = np.exp(2.0 * (x - s))
    return np.where(x >= s, upper, bridge)


def wh_lyapunov_grad(x, s: float):
    x = np.asarray(x, dtype=float)
    u = np.clip(x + s + 1.0, 0.0, 1.0)
    inside = (x > -s - 1.0) & (x < -s)
    bridge = np.where(inside, -6.0 * u * (1.0 - u), 0.0)
    with np.errstate(over="ignore"):
        upper = 2.0 * np.exp(2.0 * (x - s))
    return np.where(x >= s, upper, bridge)


def wh_increment(x: float, dz: float, s: float) -> float:
    """``W^H_s(x + dz) - W^H_s(x)`` without cancellation on the exponential branch."""
    if x >= s:
        return float(np.exp(2.0 * (x - s)) * np.expm1(2.0 * dz))
    return float(wh_lyapunov(x + dz, s) - wh_lyapunov(x, s))


def jump_expectation(increment: Callable[[float, float], float], y: float, beta: float, breaks=()) -> float:
    """``E[increment(y, Z - y)]`` for ``Z ~ q(y, .)`` by quadrature.

    With ``V ~ Exp(1)`` the jump is ``Z - y = log1p(beta V e^{-beta y}) / beta``,
    so the expectation is ``int_0^inf e^{-v} increment(y, dz(v)) dv``. ``breaks``
    are values of ``Z`` where the integrand has kinks; the ``v`` range is split
    there.
    """
    dz = lambda v: np.logaddexp(0.0, np.log(beta * v) - beta * y) / beta if v > 0 else 0.0
    integrand = lambda v: np.exp(-v) * increment(y, dz(v))
    cuts = []
    for b in sorted(breaks):
        if b > y:
            # V for which Z = b
            cut = float(np.exp(beta * y + np.log(np.expm1(beta * (b - y))) - np.log(beta)))
            if cut < 700.0:
                cuts.append(cut)
    edges = [0.0] + cuts
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi > lo:
            total += adaptive_quadrature(integrand, lo, hi, rel_tol=1e-10, abs_tol=1e-300)
    return total + adaptive_quadrature(integrand, edges[-1], np.inf, rel_tol=1e-10, abs_tol=1e-300)


def apply_H(f: Callable, grad_f: Callable, x: float, beta: float, breaks=(), increment=None) -> float:
    """Generator of the eta processes applied to ``f`` at ``x``:
    ``-f'(x) + e^{-beta x} E[f(Z) - f(x)]`` with ``Z ~ q(x, .)``.

    ``increment(x, dz)`` may supply an accurate ``f(x + dz) - f(x)``.
    """
    if increment is None:
        increment = lambda y, d: float(f(y + d)) - float(f(y))
    jumps = jump_expectation(increment, x, beta, breaks)
    # e^{-beta x} * jumps in log space, for large |x|
    scaled = float(np.sign(jumps) * np.exp(np.log(abs(jumps)) - beta * x)) if jumps != 0 else 0.0
    return float(-grad_f(x) + scaled)


def gumbel_expectation(f: Callable, beta: float, breaks=()) -> float:
    """``E f(G)`` for ``G = log(beta E) / beta`` with ``E ~ Exp(1)`` (the kernel from ``-inf``)."""
    integrand = lambda v: np.exp(-v) * f(np.log(beta * v) / beta)
    cuts = sorted(float(np.exp(beta * b) / beta) for b in breaks)
    edges = [0.0] + cuts
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        total += adaptive_quadrature(integrand, a, b, rel_tol=1e-10, abs_tol=1e-300)
    return total + adaptive_quadrature(integrand, edges[-1], np.inf, rel_tol=1e-10, abs_tol=1e-300)


def choose_lyapunov_scale(beta: float = 1.0, bound: float = 4.0 / 3.0, step: float = 0.5, s_max: float = 20.0) -> float:
    """Smallest ``s`` on a ``step`` grid with ``E[W^H_s(G)] <= bound``."""
    s = step
    while s <= s_max:
        f = lambda z, s=s: float(wh_lyapunov(z, s))
        if gumbel_expectation(f, beta, breaks=(-s - 1.0, -s, s)) <= bound:
            return s
        s += step
    raise ValueError(f"no s up to {s_max} satisfies the bound {bound}")


@dataclass(frozen=True)
class DriftCheck:
    s: float
    c: float
    grid: np.ndarray
    HW: np.ndarray
    W: np.ndarray

    @property
    def holds_outside(self) -> bool:
        mask = np.abs(self.grid) >= self.c
        return bool(np.all(self.HW[mask] <= -self.W[mask]))


def lyapunov_drift_check(s: Optional[float] = None, beta: float = 1.0, grid=None) -> DriftCheck:
    """Evaluate ``H W^H_s + W^H_s`` on a grid and report the smallest ``c``
    such that the drift inequality holds at every grid point with ``|x| >= c``."""
    if s is None:
        s = choose_lyapunov_scale(beta)
    grid = np.linspace(-50.0, 50.0, 2001) if grid is None else np.asarray(grid, dtype=float)
    f = lambda z: float(wh_lyapunov(z, s))
    g = lambda z: float(wh_lyapunov_grad(z, s))
    breaks = (-s - 1.0, -s, s)
    inc = lambda y, d: wh_increment(y, d, s)
    HW = np.array([apply_H(f, g, x, beta, breaks, increment=inc) for x in grid])
    W = wh_lyapunov(grid, s)
    bad = np.abs(grid[HW > -W])
    c = float(bad.max()) if bad.size else 0.0
    # smallest grid radius strictly beyond every violation
    beyond = np.abs(grid)[np.abs(grid) > c]
    c = float(beyond.min()) if bad.size and beyond.size else c
    return DriftCheck(s=float(s), c=c, grid=grid, HW=HW, W=W)
