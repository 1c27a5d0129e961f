"""Discrete-state adiabatic metadynamics on the segment {0, ..., K}.

The walker ``I_t`` sits on sites ``0..K``; the edge variables
``X_t(k) = x_0(k) + gamma * (L_t(k) - L_t(k-1))`` record (scaled) differences
of local times. While the walker is at ``i``, ``X(i)`` grows and ``X(i+1)``
shrinks at speed ``gamma``; it jumps left at rate ``exp(beta (x_i + A'_i))``
and right at rate ``exp(-beta (x_{i+1} + A'_{i+1}))``.

Both active hazards carry the same ``exp(beta * gamma * s)`` envelope during a
sojourn, so event times are drawn exactly by inverting the integrated total
hazard and the direction from the (constant) ratio of the two rates. Each
event consumes one ``Exp(1)`` draw followed by one ``Unif(0, 1)`` draw, which
is what makes common-random-number couplings pathwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numba
import numpy as np

from .stats import (
    BatchMeansResult,
    InsufficientDataError,
    adaptive_quadrature,
    batch_means,
    batch_means_from_integrals,
)
from .streams import as_generator

LOG_CAP = 10**6


# ---------------------------------------------------------------------------
# numeric core (shared by the Python-level operations and the event loop)


@numba.njit(cache=True)
def _softplus(z):
    if z > 0.0:
        return z + np.log1p(np.exp(-z))
    return np.log1p(np.exp(z))


@numba.njit(cache=True)
def _edge_value(x0, L, gamma, k):
    return x0[k - 1] + gamma * (L[k] - L[k - 1])


@numba.njit(cache=True)
def _log_rates(x0, L, aprime, beta, gamma, i, K):
    has_left = i > 0
    has_right = i < K
    log_left = 0.0
    log_right = 0.0
    if has_left:
        log_left = beta * (_edge_value(x0, L, gamma, i) + aprime[i - 1])
    if has_right:
        log_right = -(beta * (_edge_value(x0, L, gamma, i + 1) + aprime[i]))
    return has_left, log_left, has_right, log_right


@numba.njit(cache=True)
def _same_envelope_event(has_left, log_left, has_right, log_right, kappa, e, u):
    """Exact (dt, go_left) when both hazards scale as exp(kappa * s)."""
    if has_left and has_right:
        hi = max(log_left, log_right)
        log_r0 = hi + np.log(np.exp(log_left - hi) + np.exp(log_right - hi))
        p_left = 1.0 / (1.0 + np.exp(log_right - log_left))
    elif has_left:
        log_r0 = log_left
        p_left = 1.0
    else:
        log_r0 = log_right
        p_left = 0.0
    if kappa > 0.0:
        dt = _softplus(np.log(kappa * e) - log_r0) / kappa
    else:
        dt = np.exp(np.log(e) - log_r0)
    return dt, u < p_left


@numba.njit(cache=True)
def _segment_integral(x0, L, gamma, i, K, d, out):
    """Add the exact integral of each X(k) over a sojourn of length d at site i."""
    for k in range(1, K + 1):
        xk = _edge_value(x0, L, gamma, k)
        if k == i:
            slope = gamma
        elif k == i + 1:
            slope = -gamma
        else:
            slope = 0.0
        out[k - 1] += d * (xk + 0.5 * slope * d)


@numba.njit(cache=True)
def _run(
    x0, aprime, beta, gamma, L, i, t, t_end, rng, integral,
    ckpt_times, ckpt_int, ckpt_L, ckpt_pos,
    log_on, log_t, log_site, log_L,
    sample_dt, sample_next, samp_x, samp_i,
    stop_site, stop_level,
):
    K = L.shape[0] - 1
    kappa = beta * gamma
    n_events = 0
    n_log = 0
    n_samp = 0
    stopped = False
    tmp = np.zeros(K)
    if stop_site >= 0 and L[stop_site] >= stop_level:
        return i, t, n_events, n_log, n_samp, ckpt_pos, sample_next, True
    while t < t_end:
        has_l, log_l, has_r, log_r = _log_rates(x0, L, aprime, beta, gamma, i, K)
        e = rng.standard_exponential()
        u = rng.random()
        dt, go_left = _same_envelope_event(has_l, log_l, has_r, log_r, kappa, e, u)
        jump = True
        if stop_site == i and L[i] + dt >= stop_level:
            dt = stop_level - L[i]
            jump = False
            stopped = True
        if t + dt >= t_end:
            dt = t_end - t
            jump = False
            stopped = False
        seg_end = t + dt
        # checkpoints inside (t, seg_end]
        while ckpt_pos < ckpt_times.shape[0] and ckpt_times[ckpt_pos] <= seg_end:
            d = ckpt_times[ckpt_pos] - t
            for k in range(K):
                tmp[k] = integral[k]
            _segment_integral(x0, L, gamma, i, K, d, tmp)
            for k in range(K):
                ckpt_int[ckpt_pos, k] = tmp[k]
            for k in range(K + 1):
                ckpt_L[ckpt_pos, k] = L[k]
            ckpt_L[ckpt_pos, i] += d
            ckpt_pos += 1
        # regular-grid samples inside (t, seg_end]
        if sample_dt > 0.0:
            while n_samp < samp_i.shape[0] and sample_next * sample_dt <= seg_end:
                d = sample_next * sample_dt - t
                for k in range(1, K + 1):
                    xk = _edge_value(x0, L, gamma, k)
                    if k == i:
                        xk += gamma * d
                    elif k == i + 1:
                        xk -= gamma * d
                    samp_x[n_samp, k - 1] = xk
                samp_i[n_samp] = i
                n_samp += 1
                sample_next += 1
        _segment_integral(x0, L, gamma, i, K, dt, integral)
        L[i] += dt
        t = seg_end
        if jump:
            if go_left:
                i -= 1
            else:
                i += 1
            n_events += 1
            if log_on:
                log_t[n_log] = t
                log_site[n_log] = i
                for k in range(K + 1):
                    log_L[n_log, k] = L[k]
                n_log += 1
                if n_log == log_t.shape[0]:
                    break  # buffer full; the caller resumes with a new one
        if stopped:
            break
    return i, t, n_events, n_log, n_samp, ckpt_pos, sample_next, stopped


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class Landscape:
    """Free-energy profile ``A_0..A_K`` on the sites of the segment."""

    A: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float).ravel()
        if A.size < 2:
            raise ValueError("a landscape needs at least two sites (K >= 1)")
        if not np.isfinite(A).all():
            raise ValueError("landscape values must be finite")
        object.__setattr__(self, "A", A)

    @classmethod
    def flat(cls, K: int) -> "Landscape":
        return cls(np.zeros(K + 1))

    @property
    def K(self) -> int:
        return self.A.size - 1

    @property
    def increments(self) -> np.ndarray:
        """``A'_k = A_k - A_{k-1}`` for ``k = 1..K``."""
        return np.diff(self.A)

    @property
    def is_flat(self) -> bool:
        return bool(np.all(self.increments == 0.0))


@dataclass(frozen=True)
class SimParams:
    inv_temp: float = 1.0
    gamma: float = 1.0
    horizon: float = 1e4
    seed: int = 0

    def __post_init__(self):
        for name in ("inv_temp", "gamma", "horizon"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")

    @property
    def beta(self) -> float:
        return self.inv_temp


@dataclass
class PdmpState:
    """Walker position, local times and running integrals of the edge variables.

    The edge variables are not stored; they are recomputed from the initial
    values and the local times, so the bookkeeping identity holds exactly.
    """

    x0: np.ndarray
    local_times: np.ndarray
    i: int
    t: float = 0.0
    gamma: float = 1.0
    integral_x: np.ndarray = field(default=None)

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float).copy()
        self.local_times = np.asarray(self.local_times, dtype=float).copy()
        if self.local_times.size != self.x0.size + 1:
            raise ValueError("need K edge values and K+1 local times")
        if not 0 <= self.i <= self.K:
            raise ValueError(f"site {self.i} outside 0..{self.K}")
        if self.integral_x is None:
            self.integral_x = np.zeros(self.K)
        else:
            self.integral_x = np.asarray(self.integral_x, dtype=float).copy()

    @classmethod
    def start(cls, x0, i0: int, gamma: float = 1.0) -> "PdmpState":
        x0 = np.asarray(x0, dtype=float)
        return cls(x0=x0, local_times=np.zeros(x0.size + 1), i=int(i0), gamma=gamma)

    @property
    def K(self) -> int:
        return self.x0.size

    @property
    def x(self) -> np.ndarray:
        L = self.local_times
        return self.x0 + self.gamma * (L[1:] - L[:-1])

    def copy(self) -> "PdmpState":
        return PdmpState(self.x0, self.local_times, self.i, self.t, self.gamma, self.integral_x)


@dataclass
class Trajectory:
    """Result of :func:`simulate`.

    ``event_t``, ``event_site`` and ``event_L`` hold the jump times, the site
    entered at each jump and the local times at that instant; they are only
    filled when the run was logged (and at most ``log_cap`` of them).
    """

    landscape: Landscape
    beta: float
    gamma: float
    init: PdmpState
    final: PdmpState
    n_events: int
    stopped: bool = False
    event_t: Optional[np.ndarray] = None
    event_site: Optional[np.ndarray] = None
    event_L: Optional[np.ndarray] = None
    log_complete: bool = False
    checkpoint_times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    checkpoint_integral_x: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    checkpoint_L: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    sample_dt: float = 0.0
    sample_x: Optional[np.ndarray] = None
    sample_i: Optional[np.ndarray] = None

    @property
    def t(self) -> float:
        return self.final.t

    @property
    def local_times(self) -> np.ndarray:
        return self.final.local_times

    @property
    def integral_x(self) -> np.ndarray:
        return self.final.integral_x

    def segments(self):
        """Iterate over sojourns as ``(t_start, t_end, site, L_at_start)``.

        Requires a complete event log.
        """
        if not self.log_complete:
            raise ValueError("trajectory has no complete event log")
        t_prev, site, L_prev = self.init.t, self.init.i, self.init.local_times
        for n in range(self.event_t.size):
            yield t_prev, self.event_t[n], site, L_prev
            t_prev, site, L_prev = self.event_t[n], int(self.event_site[n]), self.event_L[n]
        if self.final.t > t_prev:
            yield t_prev, self.final.t, site, L_prev

    def x_at_events(self) -> np.ndarray:
        """Edge variables at every logged jump time (rows) including ``t=0``."""
        if not self.log_complete:
            raise ValueError("trajectory has no complete event log")
        L = np.vstack([self.init.local_times, self.event_L])
        return self.init.x0 + self.gamma * (L[:, 1:] - L[:, :-1])


# ---------------------------------------------------------------------------
# single-step operations


def _check_compatible(state: PdmpState, landscape: Landscape):
    if state.K != landscape.K:
        raise ValueError(f"state has K={state.K} but landscape has K={landscape.K}")


def jump_rates(state: PdmpState, landscape: Landscape, params: SimParams):
    """Current ``(rate_left, rate_right)``; ``None`` for a missing neighbour."""
    _check_compatible(state, landscape)
    has_l, log_l, has_r, log_r = _log_rates(
        state.x0, state.local_times, landscape.increments, params.beta, params.gamma, state.i, state.K
    )
    return (float(np.exp(log_l)) if has_l else None, float(np.exp(log_r)) if has_r else None)


def sample_next_event(state: PdmpState, landscape: Landscape, params: SimParams, rng=None, draws=None):
    """Exact time to the next jump and its direction.

    ``draws`` may supply ``(E, U)`` directly; otherwise they are taken from
    ``rng`` in that order (exponential first).
    """
    _check_compatible(state, landscape)
    if draws is None:
        rng = as_generator(rng)
        e = rng.standard_exponential()
        u = rng.random()
    else:
        e, u = draws
    has_l, log_l, has_r, log_r = _log_rates(
        state.x0, state.local_times, landscape.increments, params.beta, params.gamma, state.i, state.K
    )
    dt, go_left = _same_envelope_event(has_l, log_l, has_r, log_r, params.beta * params.gamma, e, u)
    return float(dt), "left" if go_left else "right"


def advance(state: PdmpState, dt: float, params: SimParams = None) -> PdmpState:
    """Flow the state for ``dt`` without jumping."""
    if dt < 0:
        raise ValueError(f"cannot advance by a negative time {dt}")
    new = state.copy()
    if dt == 0:
        return new
    if params is not None and params.gamma != state.gamma:
        raise ValueError("state and params disagree on gamma")
    _segment_integral(new.x0, new.local_times, new.gamma, new.i, new.K, dt, new.integral_x)
    new.local_times[new.i] += dt
    new.t += dt
    return new


def jump(state: PdmpState, direction: str) -> PdmpState:
    new = state.copy()
    step = {"left": -1, "right": 1}[direction]
    if not 0 <= new.i + step <= new.K:
        raise ValueError(f"cannot jump {direction} from site {new.i}")
    new.i += step
    return new


# ---------------------------------------------------------------------------
# trajectories


def simulate(
    landscape: Landscape,
    init: PdmpState,
    params: SimParams,
    rng=None,
    *,
    horizon: Optional[float] = None,
    log_events: bool = False,
    log_cap: int = LOG_CAP,
    checkpoints=64,
    sample_dt: float = 0.0,
    stop_at: Optional[tuple[int, float]] = None,
) -> Trajectory:
    """Run the event-driven simulation until absolute time ``horizon``.

    ``horizon`` defaults to ``params.horizon``; a state with ``t > 0``
    continues from where it stopped. ``checkpoints`` is either a count of
    equally spaced times in ``(init.t, horizon]`` or an explicit array.
    ``stop_at=(j, r)`` stops at the first time the local time at ``j`` reaches
    ``r`` (inverse local time).
    """
    _check_compatible(init, landscape)
    if init.gamma != params.gamma:
        init = replace(init.copy(), gamma=params.gamma)
    rng = as_generator(params.seed if rng is None else rng)
    t_end = params.horizon if horizon is None else float(horizon)
    if not t_end > init.t:
        raise ValueError(f"horizon {t_end} must exceed the current time {init.t}")
    K = landscape.K
    state = init.copy()

    if np.ndim(checkpoints) == 0:
        n = int(checkpoints)
        ckpt_times = init.t + (t_end - init.t) * np.arange(1, n + 1) / n if n > 0 else np.zeros(0)
        if n > 0:
            ckpt_times[-1] = t_end
    else:
        ckpt_times = np.asarray(checkpoints, dtype=float)
    ckpt_int = np.zeros((ckpt_times.size, K))
    ckpt_L = np.zeros((ckpt_times.size, K + 1))

    cap = int(log_cap) if log_events else 0

    if sample_dt > 0:
        first = int(np.floor(init.t / sample_dt)) + 1
        n_s = max(int(np.floor(t_end / sample_dt)) - first + 1, 0)
    else:
        first, n_s = 0, 0
    samp_x = np.zeros((n_s, K))
    samp_i = np.zeros(n_s, dtype=np.int64)

    stop_site, stop_level = (-1, 0.0) if stop_at is None else (int(stop_at[0]), float(stop_at[1]))

    aprime = landscape.increments
    n_events = 0
    n_log_total = 0
    ckpt_pos = 0
    sample_next = first
    n_samp_total = 0
    chunks_t, chunks_site, chunks_L = [], [], []
    i, t = state.i, state.t
    stopped = False
    size = 1024
    while True:
        remaining = cap - n_log_total if log_events else 0
        log_on = remaining > 0
        size = min(size, remaining) if log_on else 1
        log_t = np.zeros(size)
        log_site = np.zeros(size, dtype=np.int64)
        log_L = np.zeros((size, K + 1))
        i, t, n_ev, n_log, n_samp, ckpt_pos, sample_next, stopped = _run(
            state.x0, aprime, params.beta, params.gamma, state.local_times, i, t, t_end, rng,
            state.integral_x, ckpt_times, ckpt_int, ckpt_L, ckpt_pos,
            log_on, log_t, log_site, log_L,
            float(sample_dt), sample_next, samp_x[n_samp_total:], samp_i[n_samp_total:],
            stop_site, stop_level,
        )
        n_events += n_ev
        n_samp_total += n_samp
        if n_log:
            chunks_t.append(log_t[:n_log])
            chunks_site.append(log_site[:n_log])
            chunks_L.append(log_L[:n_log])
            n_log_total += n_log
        if stopped or t >= t_end:
            break
        size *= 4

    state.i, state.t = int(i), float(t)
    traj = Trajectory(
        landscape=landscape,
        beta=params.beta,
        gamma=params.gamma,
        init=init.copy(),
        final=state,
        n_events=n_events,
        stopped=bool(stopped),
        checkpoint_times=ckpt_times[:ckpt_pos],
        checkpoint_integral_x=ckpt_int[:ckpt_pos],
        checkpoint_L=ckpt_L[:ckpt_pos],
        sample_dt=float(sample_dt),
        sample_x=samp_x[:n_samp_total] if sample_dt > 0 else None,
        sample_i=samp_i[:n_samp_total] if sample_dt > 0 else None,
    )
    if log_events:
        traj.event_t = np.concatenate(chunks_t) if chunks_t else np.zeros(0)
        traj.event_site = np.concatenate(chunks_site) if chunks_site else np.zeros(0, dtype=np.int64)
        traj.event_L = np.concatenate(chunks_L) if chunks_L else np.zeros((0, K + 1))
        traj.log_complete = traj.event_t.size == n_events
    return traj


# ---------------------------------------------------------------------------
# estimators


def ergodic_mean_x(traj: Trajectory, k: int) -> float:
    """Time average ``M_t(k) = (1/t) * int_0^t X_s(k) ds`` (from ``t=0``)."""
    if not 1 <= k <= traj.landscape.K:
        raise ValueError(f"edge index {k} outside 1..{traj.landscape.K}")
    if traj.init.t != 0.0:
        raise ValueError("ergodic means need a trajectory started at t = 0")
    if traj.t <= 0:
        raise ValueError("ergodic mean undefined at t = 0")
    return float(traj.integral_x[k - 1] / traj.t)


def clt_variance(
    traj: Trajectory,
    k: Optional[int] = None,
    f: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None,
    batches: int = 32,
    min_batches: int = 16,
) -> BatchMeansResult:
    """Batch-means estimate of the asymptotic variance of a time average.

    With ``k`` the exact checkpoint integrals of ``X(k)`` are used (the run
    must carry equally spaced checkpoints). With ``f`` the function is
    evaluated on the regular-grid samples, ``f(x_samples, site_samples)``,
    and centred by its sample mean.
    """
    if batches < min_batches:
        raise InsufficientDataError(f"{batches} batches requested; at least {min_batches} required")
    if k is not None:
        n = traj.checkpoint_times.size
        if n < min_batches or n % batches:
            raise InsufficientDataError(
                f"{n} checkpoints cannot form {batches} batches (need a multiple, at least {min_batches})"
            )
        step = n // batches
        cum = traj.checkpoint_integral_x[step - 1 :: step, k - 1]
        times = traj.checkpoint_times[step - 1 :: step] - traj.init.t
        return batch_means_from_integrals(cum, times)
    if f is None:
        raise ValueError("give either an edge index k or a function f")
    if traj.sample_x is None:
        raise ValueError("trajectory has no regular-grid samples")
    values = np.asarray(f(traj.sample_x, traj.sample_i), dtype=float)
    if values.size < 4 * batches:
        raise InsufficientDataError("too few samples for the requested batches")
    return batch_means(values - values.mean(), batches=batches)


def invariant_marginal_density(k: int, y, landscape: Landscape, params: SimParams):
    """Normalised invariant density of ``X(k)``, ``c * exp(-g_k(y))``.

    ``g_k(y) = 2 / (beta * gamma) * cosh(beta * (y + A'_k))``.
    """
    a = landscape.increments[k - 1]
    beta, gamma = params.beta, params.gamma
    c = 2.0 / (beta * gamma)
    # exp(-c cosh(u)) = exp(-c) * exp(-c (cosh u - 1)); the e^{-c} cancels on normalising
    def shape(u):
        with np.errstate(over="ignore"):
            return np.exp(-c * (np.cosh(u) - 1.0))

    z = adaptive_quadrature(shape, -np.inf, np.inf, rel_tol=1e-12) / beta
    y = np.asarray(y, dtype=float)
    return shape(beta * (y + a)) / z


def invariant_marginal_cdf(k: int, landscape: Landscape, params: SimParams, grid_halfwidth: float = None):
    """Vectorised CDF of the ``X(k)`` marginal, tabulated on a fine grid."""
    a = landscape.increments[k - 1]
    beta = params.beta
    c = 2.0 / (beta * params.gamma)
    half = grid_halfwidth or (np.arccosh(1.0 + 50.0 / c) + 1.0) / beta
    u = np.linspace(-half, half, 200_001)
    dens = np.exp(-c * (np.cosh(beta * u) - 1.0))
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(u))])
    cum /= cum[-1]
    return lambda y: np.interp(np.asarray(y) + a, u, cum, left=0.0, right=1.0)


def generator_apply(f, grad_f, x, k: int, landscape: Landscape, params: SimParams) -> float:
    """Evaluate ``Lf(x, k)`` for a test function with gradient.

    ``f(x, k)`` returns a scalar and ``grad_f(x, k)`` the gradient with
    respect to the ``K`` edge variables.
    """
    x = np.asarray(x, dtype=float)
    K = landscape.K
    ap = landscape.increments
    beta, gamma = params.beta, params.gamma
    g = np.asarray(grad_f(x, k), dtype=float)
    fx = f(x, k)
    out = 0.0
    if k > 0:
        out += gamma * g[k - 1] + np.exp(beta * (x[k - 1] + ap[k - 1])) * (f(x, k - 1) - fx)
    if k < K:
        out += -gamma * g[k] + np.exp(-beta * (x[k] + ap[k])) * (f(x, k + 1) - fx)
    return float(out)


# ---------------------------------------------------------------------------
# distributional identities as pathwise couplings


def flatten_equivalence(landscape: Landscape, i0: int, params: SimParams, seed: int = None, **kwargs):
    """Coupled runs: landscape ``A`` from ``x=0`` and flat from ``y=A'``.

    Both runs draw from identical streams; their logged paths satisfy
    ``X_t + A' = Y_t`` and ``I_t = J_t`` at every event.
    """
    from .streams import derive_stream

    seed = params.seed if seed is None else seed
    K = landscape.K
    traj_a = simulate(
        landscape, PdmpState.start(np.zeros(K), i0, params.gamma), params, derive_stream(seed), log_events=True, **kwargs
    )
    traj_flat = simulate(
        Landscape.flat(K),
        PdmpState.start(landscape.increments, i0, params.gamma),
        params,
        derive_stream(seed),
        log_events=True,
        **kwargs,
    )
    return traj_a, traj_flat


def gamma_rescale_equivalence(landscape: Landscape, params: SimParams, i0: int = 0, x0=None, seed: int = None, **kwargs):
    """Coupled runs at ``(A, beta, gamma)`` and ``(A / gamma, beta * gamma, 1)``.

    Under common random numbers ``X_t / gamma`` equals the unit-rate path. The
    identity is bitwise when ``gamma`` is a power of two and holds to
    rounding otherwise.
    """
    from .streams import derive_stream

    seed = params.seed if seed is None else seed
    K = landscape.K
    x0 = np.zeros(K) if x0 is None else np.asarray(x0, dtype=float)
    g = params.gamma
    traj = simulate(landscape, PdmpState.start(x0, i0, g), params, derive_stream(seed), log_events=True, **kwargs)
    rescaled_params = replace(params, inv_temp=params.beta * g, gamma=1.0)
    traj_unit = simulate(
        Landscape(landscape.A / g),
        PdmpState.start(x0 / g, i0, 1.0),
        rescaled_params,
        derive_stream(seed),
        log_events=True,
        **kwargs,
    )
    return traj, traj_unit


def invariance_defect(f, grad_f, landscape: Landscape, params: SimParams, box, nodes: int = 64) -> float:
    """``int L f d mu`` by tensor Gauss-Legendre quadrature.

    The invariant law is uniform over the sites and, given the site, a
    product of the edge marginals. ``f`` must vanish outside
    ``box = [(lo_1, hi_1), ..., (lo_K, hi_K)]``, so the truncated integral
    is the full one.
    """
    K = landscape.K
    if len(box) != K:
        raise ValueError(f"need one interval per edge ({K})")
    u, w = np.polynomial.legendre.leggauss(nodes)
    axes, weights = [], []
    for k, (lo, hi) in enumerate(box, start=1):
        x = 0.5 * (hi - lo) * u + 0.5 * (hi + lo)
        axes.append(x)
        weights.append(0.5 * (hi - lo) * w * invariant_marginal_density(k, x, landscape, params))
    total = 0.0
    for idx in np.ndindex(*(nodes,) * K):
        point = np.array([axes[k][idx[k]] for k in range(K)])
        weight = np.prod([weights[k][idx[k]] for k in range(K)])
        total += weight * sum(generator_apply(f, grad_f, point, i, landscape, params) for i in range(K + 1))
    return float(total / (K + 1))
