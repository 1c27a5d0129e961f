"""Two-dimensional metadynamics with Gaussian deposits along ``x`` only.

The walker moves in ``V(x, y) = cos 2x + 0.05 (y - 3 cos 2x - 3)^2 + 0.5 sin x``
with ``x`` periodic. The bias ``Psi`` lives on a periodic mesh of ``I`` nodes
and is interpolated piecewise-affinely; each step adds a Gaussian of width
``eps = 2 pi / I`` centred at the current ``x``. Because ``y`` is not
adiabatically slaved to ``x``, the averaged bias slope differs from
``-F'`` with ``F(x) = cos 2x + 0.5 sin x``, and more so for larger ``gamma``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from ..streams import as_generator

TWO_PI = 2.0 * np.pi
# nodes farther than this many widths receive less than 1e-12 of the peak increment
CUTOFF_WIDTHS = float(np.sqrt(2.0 * np.log(1e12)))


def potential_v(x, y):
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    c2 = np.cos(2 * x)
    return c2 + 0.05 * (y - 3 * c2 - 3) ** 2 + 0.5 * np.sin(x)


def grad_v(x, y):
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    c2, s2 = np.cos(2 * x), np.sin(2 * x)
    r = y - 3 * c2 - 3
    return -2 * s2 + 0.6 * r * s2 + 0.5 * np.cos(x), 0.1 * r


def free_energy(x):
    x = np.asarray(x, dtype=float)
    return np.cos(2 * x) + 0.5 * np.sin(x)


def free_energy_grad(x):
    x = np.asarray(x, dtype=float)
    return -2 * np.sin(2 * x) + 0.5 * np.cos(x)


@dataclass
class BiasMesh:
    """Periodic piecewise-affine function with node values ``psi``.

    Node ``j`` sits at ``-pi + (j + 1) * eps``, so the nodes cover ``(-pi, pi]``.
    """

    psi: np.ndarray

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=float).copy()
        if self.psi.size < 3:
            raise ValueError("a bias mesh needs at least three nodes")

    @classmethod
    def zeros(cls, I: int = 40) -> "BiasMesh":
        return cls(np.zeros(I))

    @property
    def I(self) -> int:
        return self.psi.size

    @property
    def eps(self) -> float:
        return TWO_PI / self.I

    @property
    def nodes(self) -> np.ndarray:
        return -np.pi + self.eps * np.arange(1, self.I + 1)

    def _locate(self, x):
        u = (np.asarray(x, dtype=float) + np.pi) / self.eps - 1.0
        cell = np.floor(u).astype(int)
        return cell % self.I, u - cell

    def value(self, x):
        j, frac = self._locate(x)
        return (1 - frac) * self.psi[j] + frac * self.psi[(j + 1) % self.I]

    def slope(self, x):
        """Slope of the cell containing ``x`` (constant inside each cell)."""
        j, _ = self._locate(x)
        return (self.psi[(j + 1) % self.I] - self.psi[j]) / self.eps

    def node_slopes(self) -> np.ndarray:
        """Mean of the two cell slopes adjacent to each node."""
        return (np.roll(self.psi, -1) - np.roll(self.psi, 1)) / (2 * self.eps)


@numba.njit(cache=True)
def _wrap_signed(d):
    # nearest periodic image of a displacement
    return d - 2.0 * np.pi * np.floor(d / (2.0 * np.pi) + 0.5)


@numba.njit(cache=True)
def _deposit(psi, x, amount, eps, reach, out_idx, out_inc):
    """Add ``amount`` times the normalised Gaussian at ``x``; returns the touched nodes."""
    I = psi.shape[0]
    norm = amount / np.sqrt(2.0 * np.pi * eps * eps)
    centre = int(np.floor((x + np.pi) / eps - 1.0 + 0.5))
    n = 0
    for off in range(-reach, reach + 1):
        j = (centre + off) % I
        node = -np.pi + eps * (j + 1)
        d = _wrap_signed(node - x)
        inc = norm * np.exp(-d * d / (2.0 * eps * eps))
        psi[j] += inc
        out_idx[n] = j
        out_inc[n] = inc
        n += 1
    return n


def deposit(mesh: BiasMesh, x: float, gamma: float, dt: float) -> BiasMesh:
    """Mesh after one deposit of mass ``gamma * dt`` at ``x``."""
    out = BiasMesh(mesh.psi)
    if gamma == 0:
        return out
    reach = _reach(mesh)
    idx = np.zeros(2 * reach + 1, dtype=np.int64)
    inc = np.zeros(2 * reach + 1)
    _deposit(out.psi, float(x), gamma * dt, mesh.eps, reach, idx, inc)
    return out


def _reach(mesh: BiasMesh) -> int:
    return min(int(np.ceil(CUTOFF_WIDTHS)) + 1, (mesh.I - 1) // 2)


@numba.njit(cache=True)
def _run(x, y, psi, eps, reach, gamma, beta, dt, n_steps, rng, psi_time_integral):
    I = psi.shape[0]
    noise = np.sqrt(2.0 * dt / beta)
    idx = np.zeros(2 * reach + 1, dtype=np.int64)
    inc = np.zeros(2 * reach + 1)
    for j in range(I):
        psi_time_integral[j] += psi[j] * n_steps * dt
    for n in range(n_steps):
        u = (x + np.pi) / eps - 1.0
        cell = int(np.floor(u)) % I
        slope = (psi[(cell + 1) % I] - psi[cell]) / eps
        c2 = np.cos(2.0 * x)
        s2 = np.sin(2.0 * x)
        r = y - 3.0 * c2 - 3.0
        dvx = -2.0 * s2 + 0.6 * r * s2 + 0.5 * np.cos(x)
        dvy = 0.1 * r
        if gamma != 0.0:
            m = _deposit(psi, x, gamma * dt, eps, reach, idx, inc)
            # the deposit is felt from the next step on, for the remaining steps
            w = (n_steps - n - 1) * dt
            for q in range(m):
                psi_time_integral[idx[q]] += inc[q] * w
        x = x - (dvx + slope) * dt + noise * rng.standard_normal()
        y = y - dvy * dt + noise * rng.standard_normal()
        x = x - 2.0 * np.pi * np.floor((x + np.pi) / (2.0 * np.pi))
        if x <= -np.pi:
            x += 2.0 * np.pi
    return x, y


@dataclass
class TwoDState:
    x: float
    y: float
    mesh: BiasMesh
    t: float = 0.0
    avg_node_slope: np.ndarray = None

    def __post_init__(self):
        self.x = float(np.pi - (np.pi - self.x) % TWO_PI)
        if self.avg_node_slope is None:
            self.avg_node_slope = np.zeros(self.mesh.I)


@dataclass(frozen=True)
class TwoDConfig:
    gamma: float = 1.0
    inv_temp: float = 1.0 / 50.0
    dt: float = 1e-4
    horizon: float = 1e3
    I: int = 40
    x0: float = 0.0
    y0: float = 6.0

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        for name in ("inv_temp", "dt", "horizon"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.I < 3:
            raise ValueError("I must be at least 3")


def run_2d(config: TwoDConfig, rng=None) -> TwoDState:
    """Euler-Maruyama run from ``(x0, y0)`` with an empty bias.

    The returned state carries the node-wise time average of the bias slope,
    obtained from the exact time integral of the node values.
    """
    rng = as_generator(rng)
    mesh = BiasMesh.zeros(config.I)
    n_steps = int(round(config.horizon / config.dt))
    integral = np.zeros(config.I)
    x, y = _run(
        float(config.x0), float(config.y0), mesh.psi, mesh.eps, _reach(mesh),
        float(config.gamma), float(config.inv_temp), float(config.dt), n_steps, rng, integral,
    )
    t = n_steps * config.dt
    avg = BiasMesh(integral / t).node_slopes()
    return TwoDState(x=x, y=y, mesh=mesh, t=t, avg_node_slope=avg)


def bias_gap(state: TwoDState) -> float:
    """Sup-norm distance between the averaged node slope and ``-F'`` at the nodes."""
    return float(np.max(np.abs(state.avg_node_slope + free_energy_grad(state.mesh.nodes))))
