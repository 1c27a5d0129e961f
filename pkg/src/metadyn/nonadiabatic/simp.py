"""Three-state caricature of the binned model, solvable in closed form.

The walker is in a state ``i`` in ``{-1, 0, +1}`` and carries a bias difference
``x``. In ``+`` (resp. ``-``) it drifts at speed ``+gamma`` (resp. ``-gamma``)
and falls back to ``0`` at rate ``lambda_+`` (resp. ``lambda_-``); in ``0``
it is frozen and leaves to ``-`` at rate ``e^{beta x} / lambda_-`` and to
``+`` at rate ``e^{-beta x} / lambda_+``. Here ``lambda_pm = exp(-beta D_pm)``.

The invariant law has ``mu_- = mu_+ = mu`` with

    mu(x)  ∝ exp(lambda_- x / gamma) (lambda_+ e^{2 beta x} + lambda_-)^{-(lambda_+ + lambda_-) / (2 beta gamma)}
    mu_0(x) = lambda_+ lambda_- (lambda_+ + lambda_-) mu(x) / (lambda_+ e^{beta x} + lambda_- e^{-beta x})
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np
from scipy.optimize import brentq

from ..stats import BatchMeansResult, QuadratureError, adaptive_quadrature, batch_means_from_integrals
from ..streams import as_generator


@dataclass(frozen=True)
class SimpParams:
    inv_temp: float = 1.0
    gamma: float = 1.0
    d_plus: float = 1.5
    d_minus: float = 2.0

    def __post_init__(self):
        for name in ("inv_temp", "gamma", "d_plus", "d_minus"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")

    @property
    def beta(self) -> float:
        return self.inv_temp

    @property
    def lam_plus(self) -> float:
        return float(np.exp(-self.inv_temp * self.d_plus))

    @property
    def lam_minus(self) -> float:
        return float(np.exp(-self.inv_temp * self.d_minus))


# ---------------------------------------------------------------------------
# invariant law


def _log_mu(x, p: SimpParams):
    lp, lm, b, g = p.lam_plus, p.lam_minus, p.beta, p.gamma
    # log(lp e^{2bx} + lm) without overflow
    log_den = np.logaddexp(np.log(lp) + 2 * b * x, np.log(lm))
    return lm * x / g - (lp + lm) / (2 * b * g) * log_den


def _log_mu0_ratio(x, p: SimpParams):
    """``log(mu_0 / mu)``."""
    lp, lm, b = p.lam_plus, p.lam_minus, p.beta
    return np.log(lp * lm * (lp + lm)) - np.logaddexp(np.log(lp) + b * x, np.log(lm) - b * x)


def _log_marginal(x, p: SimpParams):
    """``log(2 mu + mu_0)`` up to the normalising constant."""
    return _log_mu(x, p) + np.logaddexp(np.log(2.0), _log_mu0_ratio(x, p))


@dataclass(frozen=True)
class _Support:
    lo: float
    hi: float
    peak: float
    log_peak: float


def _support(p: SimpParams, rel_cut: float = 1e-16) -> _Support:
    """Interval outside which the marginal density is below ``rel_cut`` of its peak."""
    lp, lm, b = p.lam_plus, p.lam_minus, p.beta
    # stationary point of log mu: lm = (lp + lm) lp w / (lp w + lm), w = e^{2 b x}
    peak = float(np.log(lm * lm / (lp * lp)) / (2 * b))
    log_peak = float(_log_marginal(peak, p))
    target = log_peak + np.log(rel_cut)
    f = lambda x: float(_log_marginal(x, p)) - target
    step = max(1.0, p.gamma)
    lo = peak - step
    while f(lo) > 0:
        lo = peak - 2 * (peak - lo)
    hi = peak + step
    while f(hi) > 0:
        hi = peak + 2 * (hi - peak)
    return _Support(brentq(f, lo, peak), brentq(f, peak, hi), peak, log_peak)


def _integrate(g, p: SimpParams, abs_tol: float = 0.0) -> float:
    s = _support(p)
    return adaptive_quadrature(g, s.lo, s.hi, rel_tol=1e-12, abs_tol=abs_tol, points=[s.peak], limit=2000)


def simp_normaliser(p: SimpParams) -> float:
    """``log`` of the constant ``C`` making ``2 mu + mu_0`` a probability density."""
    s = _support(p)
    mass = _integrate(lambda x: np.exp(_log_marginal(x, p) - s.log_peak), p)
    return float(-(np.log(mass) + s.log_peak))


def simp_invariant_density(x, p: SimpParams):
    """Normalised ``(mu_-(x), mu_0(x), mu_+(x))``."""
    x = np.asarray(x, dtype=float)
    log_c = simp_normaliser(p)
    mu = np.exp(_log_mu(x, p) + log_c)
    mu0 = np.exp(_log_mu(x, p) + _log_mu0_ratio(x, p) + log_c)
    return mu, mu0, mu


def simp_ode_residual(x, p: SimpParams, h: float = 1e-5):
    """Relative residual of ``gamma mu' = (lm^2 e^{-bx} - lp^2 e^{bx}) / (lp e^{bx} + lm e^{-bx}) mu``.

    The derivative is a central difference of ``log mu``, so the residual is
    relative to ``mu`` itself.
    """
    x = np.asarray(x, dtype=float)
    lp, lm, b = p.lam_plus, p.lam_minus, p.beta
    dlog = (_log_mu(x + h, p) - _log_mu(x - h, p)) / (2 * h)
    # the coefficient computed in a form that is stable for large |x|
    coef = (lm * lm * np.exp(-2 * b * x.clip(-350, 350)) - lp * lp) / (lp + lm * np.exp(-2 * b * x.clip(-350, 350)))
    return np.abs(p.gamma * dlog - coef) / np.maximum(1.0, np.abs(coef))


def simp_marginal_cdf(p: SimpParams):
    """Vectorised CDF of the ``x``-marginal, tabulated on its effective support."""
    s = _support(p)
    grid = np.linspace(s.lo, s.hi, 200_001)
    dens = np.exp(_log_marginal(grid, p) - s.log_peak)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))])
    cum /= cum[-1]
    return lambda x: np.interp(np.asarray(x, dtype=float), grid, cum, left=0.0, right=1.0)


def simp_mean_quadrature(p: SimpParams) -> float:
    """Mean of ``x`` under the invariant law, by adaptive quadrature."""
    s = _support(p)
    dens = lambda x: np.exp(_log_marginal(x, p) - s.log_peak)
    try:
        mass = _integrate(dens, p)
        # the centred moment can vanish, so its tolerance is absolute (scaled to the law)
        first = _integrate(lambda x: (x - s.peak) * dens(x), p, abs_tol=1e-14 * mass * (s.hi - s.lo))
    except QuadratureError as exc:
        raise QuadratureError(f"mean of the three-state law did not converge: {exc}") from exc
    return float(s.peak + first / mass)


def asymptotic_mean(p: SimpParams) -> float:
    """``gamma (e^{beta D_+} - e^{beta D_-})``, the large-parameter equivalent of the mean."""
    return float(p.gamma * (np.exp(p.beta * p.d_plus) - np.exp(p.beta * p.d_minus)))


# ---------------------------------------------------------------------------
# exact simulation


@numba.njit(cache=True)
def _run(x, i, t, t_end, lp, lm, beta, gamma, rng, integral, ckpt_times, ckpt_int, ckpt_pos,
         sample_dt, sample_next, samples, hold_plus, n_hold):
    n_samp = 0
    while t < t_end:
        e = rng.standard_exponential()
        u = rng.random()
        if i == 0:
            r_minus = np.exp(beta * x) / lm
            r_plus = np.exp(-beta * x) / lp
            dt = e / (r_minus + r_plus)
            target = -1 if u * (r_minus + r_plus) < r_minus else 1
            slope = 0.0
        elif i == 1:
            dt = e / lp
            target = 0
            slope = gamma
        else:
            dt = e / lm
            target = 0
            slope = -gamma
        jump = True
        if t + dt >= t_end:
            dt = t_end - t
            jump = False
        while ckpt_pos < ckpt_times.shape[0] and ckpt_times[ckpt_pos] <= t + dt:
            d = ckpt_times[ckpt_pos] - t
            ckpt_int[ckpt_pos] = integral + d * (x + 0.5 * slope * d)
            ckpt_pos += 1
        if sample_dt > 0.0:
            while n_samp < samples.shape[0] and sample_next * sample_dt <= t + dt:
                samples[n_samp] = x + slope * (sample_next * sample_dt - t)
                n_samp += 1
                sample_next += 1
        if jump and i == 1 and n_hold < hold_plus.shape[0]:
            hold_plus[n_hold] = dt
            n_hold += 1
        integral += dt * (x + 0.5 * slope * dt)
        x += slope * dt
        t += dt
        if jump:
            i = target
    return x, i, t, integral, ckpt_pos, n_samp, n_hold


@dataclass
class SimpState:
    x: float = 0.0
    i: int = 0
    t: float = 0.0
    integral_x: float = 0.0

    def __post_init__(self):
        if self.i not in (-1, 0, 1):
            raise ValueError("state must be -1, 0 or +1")


@dataclass
class SimpRun:
    params: SimpParams
    final: SimpState
    checkpoint_times: np.ndarray
    checkpoint_integral: np.ndarray
    samples: Optional[np.ndarray]
    holding_plus: np.ndarray

    @property
    def mean(self) -> float:
        return self.final.integral_x / self.final.t

    def batch_means(self) -> BatchMeansResult:
        return batch_means_from_integrals(self.checkpoint_integral, self.checkpoint_times)


def simp_simulate(
    p: SimpParams,
    horizon: float,
    rng=None,
    start: Optional[SimpState] = None,
    checkpoints: int = 64,
    sample_dt: float = 0.0,
    max_holding: int = 10**5,
) -> SimpRun:
    """Exact event-driven run of the three-state model from ``start`` (default ``x=0, i=0``).

    Besides the exact running integral of ``x`` the run records checkpoint
    integrals, ``x`` on a regular time grid (if ``sample_dt > 0``) and up to
    ``max_holding`` completed holding times in state ``+``.
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    rng = as_generator(rng)
    s = SimpState() if start is None else SimpState(start.x, start.i, start.t, start.integral_x)
    t_end = s.t + horizon
    ckpt_times = s.t + horizon * np.arange(1, checkpoints + 1) / checkpoints if checkpoints else np.zeros(0)
    ckpt_int = np.zeros(ckpt_times.size)
    first = int(np.floor(s.t / sample_dt)) + 1 if sample_dt > 0 else 0
    n_s = max(int(np.floor(t_end / sample_dt)) - first + 1, 0) if sample_dt > 0 else 0
    samples = np.zeros(n_s)
    hold = np.zeros(max_holding)
    x, i, t, integral, pos, n_samp, n_hold = _run(
        s.x, s.i, s.t, t_end, p.lam_plus, p.lam_minus, p.beta, p.gamma, rng, s.integral_x,
        ckpt_times, ckpt_int, 0, float(sample_dt), first, samples, hold, 0,
    )
    return SimpRun(
        params=p,
        final=SimpState(float(x), int(i), float(t), float(integral)),
        checkpoint_times=ckpt_times[:pos],
        checkpoint_integral=ckpt_int[:pos],
        samples=samples[:n_samp] if sample_dt > 0 else None,
        holding_plus=hold[:n_hold],
    )
