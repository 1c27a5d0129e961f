"""Adiabatic metadynamics on the circle in a truncated Fourier basis.

The penalty is ``Phi(z) = sum_k alpha_k cos(kz) + beta_k sin(kz)`` with no
constant mode. The reaction coordinate diffuses in the biased potential and
the coefficients grow at the rate the walker deposits bias::

    dZ       = sum_k k (alpha_k sin kZ - beta_k cos kZ) dt + sqrt(2/beta) dB
    dalpha_k = gamma cos(kZ) dt
    dbeta_k  = gamma sin(kZ) dt

The coefficients start at those of ``F - mean(F)``; ``Psi = Phi - (F - mean F)``
is the accumulated penalty, whose time average approaches ``-F + mean F``.

When ``F`` has no modes above ``N`` the invariant law has ``Z`` uniform and
independent centred Gaussian coefficients with ``Var alpha_k = Var beta_k =
gamma / k**2``, whatever the temperature.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numba
import numpy as np

from .streams import as_generator

TWO_PI = 2.0 * np.pi


def wrap_angle(z):
    """Reduce angles to ``[-pi, pi)``."""
    return (np.asarray(z) + np.pi) % TWO_PI - np.pi


@dataclass(frozen=True)
class TrigPotential:
    """Trigonometric polynomial ``offset + sum_k a_k cos kz + b_k sin kz``."""

    cos_coeffs: np.ndarray
    sin_coeffs: np.ndarray
    offset: float = 0.0

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.cos_coeffs, dtype=float))
        b = np.atleast_1d(np.asarray(self.sin_coeffs, dtype=float))
        n = max(a.size, b.size)
        a = np.pad(a, (0, n - a.size))
        b = np.pad(b, (0, n - b.size))
        if not (np.isfinite(a).all() and np.isfinite(b).all() and np.isfinite(self.offset)):
            raise ValueError("potential coefficients must be finite")
        object.__setattr__(self, "cos_coeffs", a)
        object.__setattr__(self, "sin_coeffs", b)

    @classmethod
    def zero(cls) -> "TrigPotential":
        return cls(np.zeros(0), np.zeros(0))

    @property
    def degree(self) -> int:
        nz = np.flatnonzero((self.cos_coeffs != 0) | (self.sin_coeffs != 0))
        return int(nz[-1]) + 1 if nz.size else 0

    @property
    def mean(self) -> float:
        return float(self.offset)

    def _modes(self, z):
        z = np.asarray(z, dtype=float)
        k = np.arange(1, self.cos_coeffs.size + 1)
        return z, k, np.multiply.outer(z, k)

    def value(self, z):
        z, k, kz = self._modes(z)
        return self.offset + np.cos(kz) @ self.cos_coeffs + np.sin(kz) @ self.sin_coeffs

    def derivative(self, z):
        z, k, kz = self._modes(z)
        return np.sin(kz) @ (-k * self.cos_coeffs) + np.cos(kz) @ (k * self.sin_coeffs)

    def truncated(self, N: int) -> "TrigPotential":
        return TrigPotential(self.cos_coeffs[:N], self.sin_coeffs[:N], self.offset)


@dataclass(frozen=True)
class FourierBias:
    N: int
    alpha: np.ndarray
    beta_coef: np.ndarray
    gamma: float
    inv_temp: float

    def __post_init__(self):
        if int(self.N) < 1:
            raise ValueError("truncation order N must be at least 1")
        alpha = np.asarray(self.alpha, dtype=float).ravel().copy()
        beta_coef = np.asarray(self.beta_coef, dtype=float).ravel().copy()
        if alpha.size != self.N or beta_coef.size != self.N:
            raise ValueError(f"need {self.N} cosine and {self.N} sine coefficients")
        if self.gamma < 0 or not np.isfinite(self.gamma):
            raise ValueError("gamma must be finite and non-negative")
        if not self.inv_temp > 0:
            raise ValueError("inverse temperature must be positive (inf allowed)")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta_coef", beta_coef)

    @property
    def noise_scale(self) -> float:
        """``sqrt(2 / beta)``; zero in the zero-temperature limit."""
        return 0.0 if np.isinf(self.inv_temp) else float(np.sqrt(2.0 / self.inv_temp))


def bias_value(bias: FourierBias, z):
    kz = np.multiply.outer(np.asarray(z, dtype=float), np.arange(1, bias.N + 1))
    return np.cos(kz) @ bias.alpha + np.sin(kz) @ bias.beta_coef


def bias_grad(bias: FourierBias, z):
    k = np.arange(1, bias.N + 1)
    kz = np.multiply.outer(np.asarray(z, dtype=float), k)
    return np.sin(kz) @ (-k * bias.alpha) + np.cos(kz) @ (k * bias.beta_coef)


@dataclass(frozen=True)
class TorusState:
    """Angle, bias coefficients, clock and time-averaged coefficients.

    ``potential`` is the free energy the run was initialised from; it is needed
    to turn averaged coefficients into an averaged penalty. ``residual`` holds
    the modes of ``F`` above the truncation order when the truncation
    hypothesis was deliberately violated (it then adds a fixed force).
    """

    z: float
    bias: FourierBias
    t: float = 0.0
    running_avg_alpha: np.ndarray = None
    running_avg_beta: np.ndarray = None
    potential: TrigPotential = field(default_factory=TrigPotential.zero)
    residual: Optional[TrigPotential] = None

    def __post_init__(self):
        object.__setattr__(self, "z", float(wrap_angle(self.z)))
        if self.t < 0:
            raise ValueError("time must be non-negative")
        for name in ("running_avg_alpha", "running_avg_beta"):
            value = getattr(self, name)
            value = np.zeros(self.bias.N) if value is None else np.asarray(value, dtype=float).copy()
            object.__setattr__(self, name, value)


def init_from_potential(
    F: TrigPotential,
    N: Optional[int] = None,
    gamma: float = 1.0,
    inv_temp: float = 1.0,
    z0=0.0,
    allow_violation: bool = False,
) -> TorusState:
    """Start from ``Phi_0 = F - mean(F)``.

    ``z0`` is either a fixed angle or a random generator, in which case the
    starting angle is drawn uniformly on the circle. ``N`` defaults to the
    degree of ``F``; a smaller ``N`` is refused unless ``allow_violation``.
    """
    N = max(F.degree, 1) if N is None else int(N)
    residual = None
    if N < F.degree:
        if not allow_violation:
            raise ValueError(
                f"truncation order N={N} is below the degree {F.degree} of F; "
                "pass allow_violation=True to run anyway"
            )
        residual = TrigPotential(
            np.concatenate([np.zeros(N), F.cos_coeffs[N:]]), np.concatenate([np.zeros(N), F.sin_coeffs[N:]])
        )
    alpha = np.zeros(N)
    beta_coef = np.zeros(N)
    m = min(N, F.cos_coeffs.size)
    alpha[:m] = F.cos_coeffs[:m]
    beta_coef[:m] = F.sin_coeffs[:m]
    if isinstance(z0, np.random.Generator):
        z0 = z0.uniform(-np.pi, np.pi)
    bias = FourierBias(N, alpha, beta_coef, gamma, inv_temp)
    return TorusState(z=z0, bias=bias, potential=F, residual=residual)


@numba.njit(cache=True)
def _residual_drift(z, res_cos, res_sin):
    d = 0.0
    for k in range(res_cos.shape[0]):
        kk = k + 1.0
        d += kk * (res_cos[k] * np.sin(kk * z) - res_sin[k] * np.cos(kk * z))
    return d


@numba.njit(cache=True)
def _wrap(z):
    z = (z + np.pi) % (2.0 * np.pi) - np.pi
    # the modulo can round up to exactly pi
    if z >= np.pi:
        z -= 2.0 * np.pi
    return z


@numba.njit(cache=True)
def _em_step(z, alpha, beta_coef, res_cos, res_sin, gamma, noise_scale, dt, noise):
    # sin(kz), cos(kz) by the angle-addition recurrence: two transcendental calls per step
    s1 = np.sin(z)
    c1 = np.cos(z)
    sk, ck = s1, c1
    drift = _residual_drift(z, res_cos, res_sin) if res_cos.shape[0] else 0.0
    for k in range(alpha.shape[0]):
        kk = k + 1.0
        drift += kk * (alpha[k] * sk - beta_coef[k] * ck)
        alpha[k] += gamma * ck * dt
        beta_coef[k] += gamma * sk * dt
        sk, ck = sk * c1 + ck * s1, ck * c1 - sk * s1
    return _wrap(z + drift * dt + noise_scale * np.sqrt(dt) * noise)


@numba.njit(cache=True)
def _run(z, alpha, beta_coef, res_cos, res_sin, gamma, noise_scale, dt, n_steps, rng,
         sum_alpha, sum_beta, trace_every, tr_z, tr_alpha, tr_beta):
    n_tr = 0
    N = alpha.shape[0]
    for n in range(n_steps):
        z = _em_step(z, alpha, beta_coef, res_cos, res_sin, gamma, noise_scale, dt, rng.standard_normal())
        for k in range(N):
            sum_alpha[k] += alpha[k] * dt
            sum_beta[k] += beta_coef[k] * dt
        if trace_every > 0 and (n + 1) % trace_every == 0 and n_tr < tr_z.shape[0]:
            tr_z[n_tr] = z
            for k in range(N):
                tr_alpha[n_tr, k] = alpha[k]
                tr_beta[n_tr, k] = beta_coef[k]
            n_tr += 1
    return z, n_tr


def _residual_arrays(state: TorusState):
    if state.residual is None:
        return np.zeros(0), np.zeros(0)
    return state.residual.cos_coeffs, state.residual.sin_coeffs


def step_em(state: TorusState, dt: float, noise: float) -> TorusState:
    """One Euler-Maruyama step driven by the given standard normal draw."""
    if not dt > 0:
        raise ValueError(f"time step must be positive, got {dt}")
    b = state.bias
    alpha, beta_coef = b.alpha.copy(), b.beta_coef.copy()
    res_cos, res_sin = _residual_arrays(state)
    z = _em_step(state.z, alpha, beta_coef, res_cos, res_sin, b.gamma, b.noise_scale, dt, float(noise))
    t = state.t + dt
    avg_a = (state.running_avg_alpha * state.t + alpha * dt) / t
    avg_b = (state.running_avg_beta * state.t + beta_coef * dt) / t
    return replace(
        state,
        z=z,
        bias=replace(b, alpha=alpha, beta_coef=beta_coef),
        t=t,
        running_avg_alpha=avg_a,
        running_avg_beta=avg_b,
    )


@dataclass(frozen=True)
class Trace:
    """Thinned samples of a torus run, one row every ``spacing`` time units."""

    spacing: float
    z: np.ndarray
    alpha: np.ndarray
    beta_coef: np.ndarray


def run(state: TorusState, horizon: float, dt: float = 1e-3, rng=None, trace_spacing: float = 0.0):
    """Advance ``state`` by ``horizon`` time units with fixed-step Euler-Maruyama.

    Returns the final state and a :class:`Trace` recorded every
    ``trace_spacing`` (rounded to a whole number of steps; 0 disables it).
    """
    if not dt > 0 or not horizon > 0:
        raise ValueError("dt and horizon must be positive")
    rng = as_generator(rng)
    n_steps = int(round(horizon / dt))
    every = int(round(trace_spacing / dt)) if trace_spacing > 0 else 0
    n_tr = n_steps // every if every else 0
    b = state.bias
    alpha, beta_coef = b.alpha.copy(), b.beta_coef.copy()
    sum_a = state.running_avg_alpha * state.t
    sum_b = state.running_avg_beta * state.t
    tr_z = np.zeros(n_tr)
    tr_a = np.zeros((n_tr, b.N))
    tr_b = np.zeros((n_tr, b.N))
    res_cos, res_sin = _residual_arrays(state)
    z, filled = _run(state.z, alpha, beta_coef, res_cos, res_sin, b.gamma, b.noise_scale, dt, n_steps, rng,
                     sum_a, sum_b, every, tr_z, tr_a, tr_b)
    t = state.t + n_steps * dt
    final = replace(
        state,
        z=z,
        bias=replace(b, alpha=alpha, beta_coef=beta_coef),
        t=t,
        running_avg_alpha=sum_a / t,
        running_avg_beta=sum_b / t,
    )
    return final, Trace(every * dt, tr_z[:filled], tr_a[:filled], tr_b[:filled])


def averaged_penalty(state: TorusState, grid) -> np.ndarray:
    """Time-averaged penalty ``(1/t) int_0^t Psi_s ds`` on ``grid``."""
    if state.t <= 0:
        raise ValueError("the averaged penalty needs t > 0")
    avg = replace(state.bias, alpha=state.running_avg_alpha, beta_coef=state.running_avg_beta)
    grid = np.asarray(grid, dtype=float)
    F = state.potential
    out = bias_value(avg, grid) - (F.value(grid) - F.mean)
    if state.residual is not None:
        out = out + state.residual.value(grid)
    return out


@dataclass(frozen=True)
class InvariantMoments:
    mean_alpha: np.ndarray
    var_alpha: np.ndarray
    mean_beta: np.ndarray
    var_beta: np.ndarray
    z_counts: np.ndarray
    z_edges: np.ndarray


def invariant_moments(trace: Trace, bins: int = 32) -> InvariantMoments:
    """Per-mode sample mean and variance of the coefficients and a Z histogram."""
    if trace.z.size < 2:
        raise ValueError("need at least two trace samples")
    counts, edges = np.histogram(trace.z, bins=bins, range=(-np.pi, np.pi))
    return InvariantMoments(
        mean_alpha=trace.alpha.mean(axis=0),
        var_alpha=trace.alpha.var(axis=0, ddof=1),
        mean_beta=trace.beta_coef.mean(axis=0),
        var_beta=trace.beta_coef.var(axis=0, ddof=1),
        z_counts=counts,
        z_edges=edges,
    )
