"""Statistical and numerical helpers shared by the simulators.

Everything here is deterministic given its inputs. Time-weighted laws of
piecewise-deterministic paths are represented either as regularly sampled
values (equal weights) or as :class:`WeightedSample` objects whose weights are
segment durations.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, stats


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""


class InsufficientDataError(ValueError):
    """Not enough data for the requested estimator."""


@dataclass(frozen=True)
class WeightedSample:
    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        weights = np.asarray(self.weights, dtype=float).ravel()
        if values.shape != weights.shape:
            raise ValueError("values and weights must have equal lengths")
        if values.size == 0:
            raise ValueError("empty sample")
        if np.any(weights < 0) or not np.isfinite(weights).all():
            raise ValueError("weights must be finite and non-negative")
        if weights.sum() <= 0:
            raise ValueError("total weight must be positive")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def unweighted(cls, values) -> "WeightedSample":
        values = np.asarray(values, dtype=float).ravel()
        return cls(values, np.ones_like(values))

    @property
    def n_eff(self) -> float:
        """Kish effective sample size ``(sum w)^2 / sum w^2``."""
        w = self.weights
        return float(w.sum() ** 2 / np.dot(w, w))

    def ecdf(self, points: np.ndarray) -> np.ndarray:
        order = np.argsort(self.values, kind="mergesort")
        v = self.values[order]
        cw = np.cumsum(self.weights[order])
        cw /= cw[-1]
        idx = np.searchsorted(v, points, side="right")
        out = np.zeros(len(points))
        mask = idx > 0
        out[mask] = cw[idx[mask] - 1]
        return out


def _as_sample(a) -> WeightedSample:
    return a if isinstance(a, WeightedSample) else WeightedSample.unweighted(a)


def ks_two_sample(a, b) -> tuple[float, float]:
    """Two-sample Kolmogorov-Smirnov statistic for (weighted) samples.

    Plain arrays are treated as unweighted samples. The p-value uses the
    asymptotic Kolmogorov distribution with effective sample sizes, so it is
    only approximate for strongly unequal weights.
    """
    a, b = _as_sample(a), _as_sample(b)
    points = np.concatenate([a.values, b.values])
    d = float(np.max(np.abs(a.ecdf(points) - b.ecdf(points))))
    n, m = a.n_eff, b.n_eff
    en = np.sqrt(n * m / (n + m))
    return d, float(stats.kstwobign.sf(en * d))


def ks_one_sample(sample, cdf: Callable[[np.ndarray], np.ndarray]) -> tuple[float, float]:
    """KS distance between a (weighted) empirical law and a continuous CDF."""
    s = _as_sample(sample)
    order = np.argsort(s.values, kind="mergesort")
    v = s.values[order]
    cw = np.cumsum(s.weights[order])
    cw /= cw[-1]
    before = np.concatenate([[0.0], cw[:-1]])
    f = np.asarray(cdf(v), dtype=float)
    d = float(max(np.max(cw - f), np.max(f - before)))
    return d, float(stats.kstwobign.sf(np.sqrt(s.n_eff) * d))


def chi2_uniform(values, bins: int, low: float, high: float) -> tuple[float, float]:
    """Pearson chi-square test of uniformity on ``[low, high)``."""
    counts, _ = np.histogram(values, bins=bins, range=(low, high))
    res = stats.chisquare(counts)
    return float(res.statistic), float(res.pvalue)


def adaptive_quadrature(
    f: Callable[[float], float],
    a: float,
    b: float,
    rel_tol: float = 1e-10,
    abs_tol: float = 0.0,
    points=None,
    limit: int = 500,
) -> float:
    """Adaptive quadrature of ``f`` over ``[a, b]`` (infinite bounds allowed).

    Raises :class:`QuadratureError` when the subdivision limit is hit or the
    error estimate exceeds the requested tolerance.
    """
    kwargs = dict(epsabs=abs_tol, epsrel=rel_tol, limit=limit)
    if points is not None and np.isfinite(a) and np.isfinite(b):
        kwargs["points"] = points
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, err = integrate.quad(f, a, b, **kwargs)
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(str(exc)) from exc
    if err > max(abs_tol, rel_tol * abs(value)) * 10:
        raise QuadratureError(f"error estimate {err:.3g} above tolerance for value {value:.6g}")
    return value


@dataclass(frozen=True)
class BatchMeansResult:
    """Batch-means summary of a time average.

    ``variance`` estimates the asymptotic variance ``c`` in
    ``sqrt(t) * (mean_t - mean) -> N(0, c)``, i.e. ``t * Var(batch means) / batches``.
    """

    mean: float
    variance: float
    stderr: float
    batch_means: np.ndarray
    duration: float


def batch_means(values, durations=None, batches: int = 32) -> BatchMeansResult:
    """Batch-means estimator for the asymptotic variance of a time average.

    ``values`` are per-segment averages and ``durations`` the segment lengths
    (regular sampling when omitted). Segments are split across batch
    boundaries proportionally to their duration.
    """
    values = np.asarray(values, dtype=float).ravel()
    durations = np.ones_like(values) if durations is None else np.asarray(durations, dtype=float).ravel()
    if values.shape != durations.shape:
        raise ValueError("values and durations must have equal lengths")
    if batches < 2:
        raise ValueError("need at least two batches")
    if values.size < 4 * batches:
        raise InsufficientDataError(f"{values.size} segments for {batches} batches; need {4 * batches}")
    total = float(durations.sum())
    edges = np.concatenate([[0.0], np.cumsum(durations)])
    cum_int = np.concatenate([[0.0], np.cumsum(values * durations)])
    bounds = np.linspace(0.0, total, batches + 1)
    # cumulative integral at arbitrary times, linear inside each segment
    integral_at = np.interp(bounds, edges, cum_int)
    width = total / batches
    means = np.diff(integral_at) / width
    var = width * float(np.var(means, ddof=1))
    return BatchMeansResult(
        mean=float(cum_int[-1] / total),
        variance=var,
        stderr=float(np.sqrt(var / total)),
        batch_means=means,
        duration=total,
    )


def batch_means_from_integrals(cumulative, times) -> BatchMeansResult:
    """Batch means from exact cumulative integrals recorded at equally spaced times.

    ``cumulative[b]`` is the integral over ``[0, times[b]]``; ``times`` must
    start at a positive value and be equally spaced with step ``times[0]``.
    """
    cumulative = np.asarray(cumulative, dtype=float)
    times = np.asarray(times, dtype=float)
    if cumulative.size < 2:
        raise InsufficientDataError("need at least two batches")
    width = times[0]
    if not np.allclose(np.diff(times), width, rtol=1e-9, atol=0.0):
        raise ValueError("checkpoint times must be equally spaced from zero")
    means = np.diff(np.concatenate([[0.0], cumulative])) / width
    var = width * float(np.var(means, ddof=1))
    total = float(times[-1])
    return BatchMeansResult(
        mean=float(cumulative[-1] / total),
        variance=var,
        stderr=float(np.sqrt(var / total)),
        batch_means=means,
        duration=total,
    )


def max_fd_error(f: Callable, grad: Callable, points, h: float = 1e-4) -> float:
    """Largest gap between ``grad`` and central differences of ``f``.

    ``points`` has shape ``(n, d)``; ``grad`` returns a length-``d`` vector.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    worst = 0.0
    for p in points:
        g = np.atleast_1d(np.asarray(grad(*p), dtype=float))
        for j in range(p.size):
            e = np.zeros_like(p)
            e[j] = h
            fd = (f(*(p + e)) - f(*(p - e))) / (2 * h)
            worst = max(worst, abs(fd - g[j]))
    return worst
