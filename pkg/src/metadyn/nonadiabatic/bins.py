"""Metadynamics on a segment of sites where bias is shared within bins.

Sites ``0..K`` are grouped by a surjective map ``xi`` onto bins ``0..B``;
while the walker sits at site ``k`` the bin local time ``l(xi(k))`` grows at
unit rate. Jump rates are

    right:  exp(-beta * (gamma * (l[xi(k+1)] - l[xi(k)]) + V'_{k+1}))
    left:   exp( beta * (gamma * (l[xi(k)] - l[xi(k-1)]) + V'_k))

so a hazard grows like ``exp(beta * gamma * s)`` when its neighbour lies in
another bin and is constant otherwise. Event times are drawn exactly; when
the two hazards have different envelopes the total integrated hazard is
inverted by a safeguarded Newton iteration.

The edge variables reported are ``X(b) = gamma * (l(b) - l(b-1))`` for
``b = 1..B``; with two bins, ``X(1)`` is the bias difference between them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np

from ..discrete import _same_envelope_event
from ..stats import BatchMeansResult, batch_means_from_integrals
from ..streams import as_generator


@numba.njit(cache=True)
def _log_rates(l, xi, vprime, beta, gamma, i, K):
    has_left = i > 0
    has_right = i < K
    log_left = 0.0
    log_right = 0.0
    if has_left:
        log_left = beta * (gamma * (l[xi[i]] - l[xi[i - 1]]) + vprime[i - 1])
    if has_right:
        log_right = -(beta * (gamma * (l[xi[i + 1]] - l[xi[i]]) + vprime[i]))
    return has_left, log_left, has_right, log_right


@numba.njit(cache=True)
def _mixed_event(log_const, log_grow, kappa, e, u, const_is_left):
    """Exact event for one constant hazard ``a`` and one ``b * exp(kappa s)``.

    Solves ``a T + b (exp(kappa T) - 1) / kappa = e``. The left-hand side is
    convex and increasing, so Newton started above the root decreases
    monotonically onto it.
    """
    a = np.exp(log_const)
    b = np.exp(log_grow)
    t_hi = min(e / a, np.log1p(kappa * e / b) / kappa)
    t = t_hi
    for _ in range(100):
        g = a * t + b * np.expm1(kappa * t) / kappa - e
        dg = a + b * np.exp(kappa * t)
        step = g / dg
        t_new = t - step
        if t_new < 0.0:
            t_new = 0.5 * t
        if abs(t_new - t) <= 1e-15 * max(t, 1e-300):
            t = t_new
            break
        t = t_new
    grow_now = b * np.exp(kappa * t)
    p_const = a / (a + grow_now)
    take_const = u < p_const
    go_left = take_const if const_is_left else not take_const
    return t, go_left


@numba.njit(cache=True)
def _next_event(l, xi, vprime, beta, gamma, i, K, e, u):
    has_l, log_l, has_r, log_r = _log_rates(l, xi, vprime, beta, gamma, i, K)
    kappa = beta * gamma
    grow_l = has_l and xi[i - 1] != xi[i]
    grow_r = has_r and xi[i + 1] != xi[i]
    if has_l and has_r and grow_l != grow_r:
        if grow_l:
            return _mixed_event(log_r, log_l, kappa, e, u, False)
        return _mixed_event(log_l, log_r, kappa, e, u, True)
    # both hazards (or the only one) share an envelope
    grows = grow_l if has_l else grow_r
    return _same_envelope_event(has_l, log_l, has_r, log_r, kappa if grows else 0.0, e, u)


@numba.njit(cache=True)
def _run(xi, vprime, beta, gamma, l, i, t, t_end, rng, integral, ckpt_times, ckpt_int, ckpt_l,
         log_on, log_t, log_site, log_l):
    K = xi.shape[0] - 1
    B = l.shape[0] - 1
    n_events = 0
    n_log = 0
    pos = 0
    while t < t_end:
        e = rng.standard_exponential()
        u = rng.random()
        dt, go_left = _next_event(l, xi, vprime, beta, gamma, i, K, e, u)
        jump = True
        if t + dt >= t_end:
            dt = t_end - t
            jump = False
        c = xi[i]
        while pos < ckpt_times.shape[0] and ckpt_times[pos] <= t + dt:
            d = ckpt_times[pos] - t
            for b in range(1, B + 1):
                xb = gamma * (l[b] - l[b - 1])
                slope = gamma if b == c else (-gamma if b == c + 1 else 0.0)
                ckpt_int[pos, b - 1] = integral[b - 1] + d * (xb + 0.5 * slope * d)
            for b in range(B + 1):
                ckpt_l[pos, b] = l[b]
            ckpt_l[pos, c] += d
            pos += 1
        for b in range(1, B + 1):
            xb = gamma * (l[b] - l[b - 1])
            slope = gamma if b == c else (-gamma if b == c + 1 else 0.0)
            integral[b - 1] += dt * (xb + 0.5 * slope * dt)
        l[c] += dt
        t = t + dt
        if jump:
            i = i - 1 if go_left else i + 1
            n_events += 1
            if log_on and n_log < log_t.shape[0]:
                log_t[n_log] = t
                log_site[n_log] = i
                for b in range(B + 1):
                    log_l[n_log, b] = l[b]
                n_log += 1
    return i, t, n_events, n_log, pos


@dataclass(frozen=True)
class BinnedModel:
    """Potential ``V_0..V_K`` and bin map ``xi`` (surjective onto ``0..B``)."""

    V: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        V = np.asarray(self.V, dtype=float).ravel()
        xi = np.asarray(self.xi, dtype=np.int64).ravel()
        if V.size != xi.size or V.size < 2:
            raise ValueError("need one bin index per site and at least two sites")
        B = int(xi.max())
        if xi.min() != 0 or set(xi.tolist()) != set(range(B + 1)):
            raise ValueError("bin map must be onto 0..B")
        if np.any(np.diff(xi) < 0):
            raise ValueError("bins must be contiguous and ordered along the segment")
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "xi", xi)

    @property
    def K(self) -> int:
        return self.V.size - 1

    @property
    def B(self) -> int:
        return int(self.xi.max())

    @classmethod
    def four_state(cls) -> "BinnedModel":
        """Two deep states and two barrier states split into two bins."""
        return cls(V=np.array([0.0, 2.0, 2.0, 0.5]), xi=np.array([0, 0, 1, 1]))


@dataclass
class BinnedRun:
    model: BinnedModel
    beta: float
    gamma: float
    t: float
    site: int
    bin_local_times: np.ndarray
    integral_x: np.ndarray
    n_events: int
    checkpoint_times: np.ndarray
    checkpoint_integral_x: np.ndarray
    checkpoint_x: np.ndarray = None
    event_t: Optional[np.ndarray] = None
    event_site: Optional[np.ndarray] = None
    event_l: Optional[np.ndarray] = None

    @property
    def x(self) -> np.ndarray:
        return self.gamma * np.diff(self.bin_local_times)

    def ergodic_mean(self, b: int = 1) -> float:
        return float(self.integral_x[b - 1] / self.t)

    def batch_means(self, b: int = 1) -> BatchMeansResult:
        return batch_means_from_integrals(self.checkpoint_integral_x[:, b - 1], self.checkpoint_times)


def binned_simulate(
    model: BinnedModel,
    beta: float,
    gamma: float,
    horizon: float,
    rng=None,
    i0: int = 0,
    checkpoints: int = 64,
    log_events: bool = False,
    log_cap: int = 10**6,
) -> BinnedRun:
    """Exact event-driven run from empty bias at site ``i0``."""
    if not (beta > 0 and gamma > 0 and horizon > 0):
        raise ValueError("beta, gamma and horizon must be positive")
    if not 0 <= i0 <= model.K:
        raise ValueError(f"start site {i0} outside 0..{model.K}")
    rng = as_generator(rng)
    l = np.zeros(model.B + 1)
    integral = np.zeros(model.B)
    ckpt_times = horizon * np.arange(1, checkpoints + 1) / checkpoints if checkpoints else np.zeros(0)
    ckpt_int = np.zeros((ckpt_times.size, model.B))
    ckpt_l = np.zeros((ckpt_times.size, model.B + 1))
    cap = log_cap if log_events else 0
    log_t = np.zeros(cap)
    log_site = np.zeros(cap, dtype=np.int64)
    log_l = np.zeros((cap, model.B + 1))
    i, t, n_events, n_log, pos = _run(
        model.xi, np.diff(model.V), float(beta), float(gamma), l, int(i0), 0.0, float(horizon), rng,
        integral, ckpt_times, ckpt_int, ckpt_l, log_events, log_t, log_site, log_l,
    )
    run = BinnedRun(
        model=model, beta=beta, gamma=gamma, t=t, site=int(i), bin_local_times=l, integral_x=integral,
        n_events=int(n_events), checkpoint_times=ckpt_times[:pos], checkpoint_integral_x=ckpt_int[:pos],
        checkpoint_x=gamma * np.diff(ckpt_l[:pos], axis=1),
    )
    if log_events:
        run.event_t, run.event_site, run.event_l = log_t[:n_log], log_site[:n_log], log_l[:n_log]
    return run


def cycle_heuristic(model: BinnedModel, beta: float, gamma: float) -> float:
    """``gamma (1/lambda_+ - 1/lambda_-)`` for a two-bin well/barrier model.

    ``lambda_-`` is the rate of climbing from the left well to its barrier
    and ``lambda_+`` the rate from the right well to its barrier.
    """
    V = model.V
    d_minus = V[1] - V[0]
    d_plus = V[-2] - V[-1]
    return float(gamma * (np.exp(beta * d_plus) - np.exp(beta * d_minus)))


def free_energy_difference(model: BinnedModel, beta: float) -> float:
    """Free-energy gap ``A_- - A_+ = log(pi(B_+) / pi(B_-)) / (2 beta)`` of a two-bin model.

    ``pi`` is the target law on sites, proportional to ``exp(-2 beta V)``. For
    the four-state model this is ``0.5 * log((1 + e^3) / (1 + e^4))``.
    """
    if model.B != 1:
        raise ValueError("defined for two bins")
    V, xi = model.V, model.xi
    w = np.exp(-2.0 * beta * (V - V.min()))
    return float(np.log(w[xi == 1].sum() / w[xi == 0].sum()) / (2.0 * beta))
