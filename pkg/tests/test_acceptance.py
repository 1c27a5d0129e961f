"""End-to-end acceptance checks. Each test prints one PASS/FAIL line.

Seeds are fixed once here and never tuned.
"""

import time

import numpy as np
import pytest
from scipy.stats import f as f_dist

from metadyn import torus
from metadyn.discrete import (
    Landscape,
    PdmpState,
    SimParams,
    flatten_equivalence,
    gamma_rescale_equivalence,
    invariance_defect,
    invariant_marginal_cdf,
    simulate,
)
from metadyn.nonadiabatic.bins import BinnedModel, binned_simulate, cycle_heuristic, free_energy_difference
from metadyn.nonadiabatic.simp import (
    SimpParams,
    asymptotic_mean,
    simp_mean_quadrature,
    simp_ode_residual,
    simp_simulate,
)
from metadyn.nonadiabatic.twod import TwoDConfig, bias_gap, run_2d
from metadyn.ray_knight import (
    eta_simulate,
    lyapunov_drift_check,
    q_sample,
    q_survival,
    sample_profiles,
    stationary_cdf,
)
from metadyn.sand import SeparationParams, is_separated, plateaus, plateaus_brute_force, sand, sand_drift_check
from metadyn.stats import chi2_uniform, ks_one_sample, ks_two_sample
from metadyn.streams import derive_stream

pytestmark = pytest.mark.slow

F_TORUS = torus.TrigPotential(cos_coeffs=[0.0, 1.0], sin_coeffs=[0.5, 0.0])


@pytest.fixture(scope="module")
def torus_run():
    start = time.perf_counter()
    state = torus.init_from_potential(F_TORUS, N=2, gamma=1.0, inv_temp=1.0, z0=0.0)
    final, trace = torus.run(state, 1e5, 1e-3, derive_stream(1), trace_spacing=1.0)
    return final, trace, time.perf_counter() - start


def test_c01_torus_averaged_penalty(report, torus_run):
    final, _, elapsed = torus_run
    grid = np.linspace(-np.pi, np.pi, 128, endpoint=False)
    err = float(np.max(np.abs(torus.averaged_penalty(final, grid) + F_TORUS.value(grid) - F_TORUS.mean)))
    ok = err <= 0.1 and elapsed < 30.0
    assert report(1, "torus averaged penalty", ok, f"sup error {err:.4f} (<= 0.1), runtime {elapsed:.1f} s (< 30 s)")


def test_c02_torus_invariant_moments(report, torus_run):
    _, trace, _ = torus_run
    m = torus.invariant_moments(trace)
    # one sample per 10 time units keeps the histogram counts close to independent
    _, p = chi2_uniform(trace.z[::10], 32, -np.pi, np.pi)
    target = 1.0 / np.arange(1, 3)
    rel = np.abs(m.var_alpha / target - 1.0)
    ok = bool(np.all(rel <= 0.15)) and p > 0.01
    detail = f"var alpha = {np.round(m.var_alpha, 3).tolist()} vs gamma/k = {target.tolist()} (rel {np.round(rel, 3).tolist()}), chi2 p = {p:.3f}"
    assert report(2, "torus invariant moments", ok, detail)


def test_c03_discrete_free_energy_learning(report):
    land = Landscape([0.0, 1.0, 1.0, 0.0])
    params = SimParams(inv_temp=1.0, gamma=1.0, horizon=1e5)
    start = time.perf_counter()
    quarter, full = [], []
    for rep in range(32):
        traj = simulate(land, PdmpState.start(np.zeros(3), 0), params, derive_stream(3, rep), checkpoints=64)
        # checkpoint 16 of 64 sits at t/4
        quarter.append(traj.checkpoint_integral_x[15] / traj.checkpoint_times[15] + land.increments)
        full.append(traj.integral_x / traj.t + land.increments)
    elapsed = time.perf_counter() - start
    quarter, full = np.array(quarter), np.array(full)
    worst = float(np.max(np.abs(full)))
    ratio = float(np.sqrt(np.mean(quarter**2)) / np.sqrt(np.mean(full**2)))
    # 2 is the CLT value; each replica is one draw (its edges are correlated), so the
    # 99% range of the ratio is 2 sqrt(F(32, 32)) quantiles
    lo, hi = 2.0 * np.sqrt(f_dist.ppf([0.005, 0.995], 32, 32))
    ok = worst <= 0.05 and lo <= ratio <= hi and elapsed < 60.0
    detail = (
        f"max_k,replica |M_t(k) + A'_k| = {worst:.4f} (<= 0.05), RMS ratio t/4 vs t = {ratio:.2f} "
        f"(in [{lo:.2f}, {hi:.2f}]), runtime {elapsed:.1f} s"
    )
    assert report(3, "discrete free-energy learning", ok, detail)


def test_c04_invariant_density(report):
    land = Landscape.flat(2)
    params = SimParams(inv_temp=1.0, gamma=1.0, horizon=1e5)
    traj = simulate(land, PdmpState.start(np.zeros(2), 0), params, derive_stream(4), sample_dt=0.1)
    d, _ = ks_one_sample(traj.sample_x[:, 0], invariant_marginal_cdf(1, land, params))
    assert report(4, "invariant density of X(1)", d <= 0.02, f"KS D = {d:.4f} (<= 0.02) on {traj.sample_x.shape[0]} grid samples")


def _bump(u):
    out = np.zeros_like(u, dtype=float)
    inside = np.abs(u) < 1
    out[inside] = np.exp(-1.0 / (1.0 - u[inside] ** 2))
    return out


def _bump_grad(u):
    out = np.zeros_like(u, dtype=float)
    inside = np.abs(u) < 1
    v = u[inside]
    out[inside] = np.exp(-1.0 / (1.0 - v**2)) * (-2.0 * v / (1.0 - v**2) ** 2)
    return out


def _test_functions():
    """Five smooth test functions on (x, site) supported in x in [-4, 4]."""
    specs = [((0.0, 2.0), (1.0, 1.0)), ((0.5, 1.5), (1.0, -2.0)), ((-1.0, 3.0), (0.0, 1.0)), ((1.2, 0.8), (3.0, 0.5)), ((-2.0, 2.0), (-1.0, 2.0))]
    funcs = []
    for (centre, width), weights in specs:
        def f(x, k, c=centre, w=width, a=weights):
            return float(a[k] * _bump(np.atleast_1d((x[0] - c) / w))[0] * (1.0 + 0.3 * np.sin(x[0])))

        def g(x, k, c=centre, w=width, a=weights):
            u = np.atleast_1d((x[0] - c) / w)
            b, db = _bump(u)[0], _bump_grad(u)[0] / w
            return np.array([a[k] * (db * (1.0 + 0.3 * np.sin(x[0])) + b * 0.3 * np.cos(x[0]))])

        funcs.append((f, g, [(centre - width, centre + width)]))
    return funcs


def test_c05_generator_invariance(report):
    land = Landscape.flat(1)
    params = SimParams()
    defects = [abs(invariance_defect(f, g, land, params, box, nodes=200)) for f, g, box in _test_functions()]
    worst = max(defects)
    assert report(5, "generator invariance", worst <= 1e-6, f"max |int Lf dmu| over 5 functions = {worst:.2e} (<= 1e-6)")


def test_c06_distributional_identities(report):
    land = Landscape([0.0, 1.0, 1.0, 0.0])
    params = SimParams(horizon=1e3)
    a, b = flatten_equivalence(land, 0, params, seed=6)
    flat_ok = (
        a.n_events == b.n_events
        and np.array_equal(a.event_t, b.event_t)
        and np.array_equal(a.event_site, b.event_site)
        and np.array_equal(a.x_at_events() + land.increments, b.x_at_events())
    )
    rescale_ok = True
    for gamma in (0.5, 2.0):
        c, d = gamma_rescale_equivalence(land, SimParams(gamma=gamma, horizon=1e3), i0=1, seed=6)
        rescale_ok &= (
            c.n_events == d.n_events
            and np.array_equal(c.event_t, d.event_t)
            and np.array_equal(c.event_site, d.event_site)
            and np.array_equal(c.x_at_events() / gamma, d.x_at_events())
        )
    detail = f"flatten exact over {a.n_events} events: {flat_ok}; gamma-rescale exact for gamma in (0.5, 2): {rescale_ok}"
    assert report(6, "distributional identities", bool(flat_ok and rescale_ok), detail)


RK_CONFIGS = [(1, 0, 0), (1, 0, 1), (2, 0, 1), (2, 2, 0)]


def test_c07_ray_knight_equivalence(report):
    start = time.perf_counter()
    worst = (1.0, None)
    for K, i0, j in RK_CONFIGS:
        for r in (0.5, 2.0):
            direct = sample_profiles("direct", K, None, i0, j, r, 1.0, 10_000, seed=11)
            walk = sample_profiles("walk", K, None, i0, j, r, 1.0, 10_000, seed=12)
            for c in range(K + 1):
                if c == j:
                    continue
                p = ks_two_sample(direct[:, c], walk[:, c])[1]
                if p < worst[0]:
                    worst = (p, (K, i0, j, r, c))
    elapsed = time.perf_counter() - start
    ok = worst[0] > 0.01 and elapsed < 120.0
    K, i0, j, r, c = worst[1]
    detail = f"min KS p = {worst[0]:.3f} (> 0.01) at K={K}, i0={i0}, j={j}, r={r}, site {c}; runtime {elapsed:.1f} s"
    assert report(7, "Ray-Knight equivalence", ok, detail)


def test_c08_eta_stationarity(report):
    values = np.array([eta_simulate(0.0, 1e4, 1.0, derive_stream(8, n)) for n in range(10_000)])
    d_eta, _ = ks_one_sample(values, stationary_cdf(1.0))
    y, beta = 0.3, 1.0
    draws = q_sample(y, beta, derive_stream(80), size=1_000_000)
    d_q, _ = ks_one_sample(draws, lambda x: 1.0 - q_survival(y, x, beta))
    ok = d_eta <= 0.02 and d_q <= 0.002
    assert report(8, "eta stationarity and kernel", ok, f"eta at s=1e4 KS D = {d_eta:.4f} (<= 0.02); q KS D = {d_q:.5f} (<= 0.002)")


def _random_separated(rng, K, sep):
    x = np.where(
        rng.random(K) < 0.5,
        rng.uniform(-sep.small, sep.small, K) * 0.999,
        rng.choice([-1.0, 1.0], K) * rng.uniform(sep.large * 1.001, sep.large + 5.0, K),
    )
    if np.all(np.abs(x) <= sep.small):
        x[rng.integers(K)] = 2.0 * sep.large
    return x


def test_c09_sand_identity(report):
    residual = 0.0
    for K in (1, 2, 3, 5):
        traj = simulate(Landscape.flat(K), PdmpState.start(np.zeros(K), 0), SimParams(horizon=2e3), derive_stream(9, K), log_events=True)
        residual = max(residual, sand_drift_check(traj).max_residual)
    rng = derive_stream(90)
    mismatches = 0
    for _ in range(10_000):
        K = int(rng.integers(1, 7))
        sep = SeparationParams(float(rng.uniform(0.5, 2.0)), 0.5, 1.5)
        x = _random_separated(rng, K, sep)
        assert is_separated(x, sep)
        mismatches += plateaus(x, sep) != plateaus_brute_force(x, sep)
    x_fig = np.diff([3.1, 3, 3.2, 1, 4, 3.8, 2, 2.2, 2.1, 2])
    s_fig = sand(x_fig)
    plat = plateaus(x_fig, SeparationParams(1.0, 0.5, 1.5))
    fig_ok = abs(s_fig - 13.6) < 1e-12 and plat == [range(0, 3), range(4, 6)]
    ok = residual <= 1e-8 and mismatches == 0 and fig_ok
    detail = (
        f"drift residual {residual:.1e} (<= 1e-8); plateau mismatches {mismatches}/10000; "
        f"figure S = {s_fig:.12g}, plateaus {[list(p) for p in plat]}"
    )
    assert report(9, "sand identity and plateaus", ok, detail)


def test_c10_nonadiabatic_ordering(report):
    start = time.perf_counter()
    gaps = {}
    for gamma in (0.1, 1.0, 10.0):
        cfg = TwoDConfig(gamma=gamma, inv_temp=1.0 / 50.0, dt=1e-4, horizon=1e3, I=40)
        gaps[gamma] = float(np.mean([bias_gap(run_2d(cfg, derive_stream(10, s))) for s in range(4)]))
    elapsed = time.perf_counter() - start
    ok = gaps[0.1] < gaps[1.0] < gaps[10.0] and elapsed < 600.0
    detail = "mean gap " + ", ".join(f"gamma={g}: {v:.3f}" for g, v in gaps.items()) + f"; runtime {elapsed:.0f} s"
    assert report(10, "non-adiabatic bias ordering", ok, detail)


def test_c11_binned_heuristic(report):
    model = BinnedModel.four_state()
    run = binned_simulate(model, 1.0, 1.0, 1e5, derive_stream(11), checkpoints=64)
    bm = run.batch_means()
    heuristic = cycle_heuristic(model, 1.0, 1.0)
    fe = free_energy_difference(model, 1.0)
    rel = abs(bm.mean / heuristic - 1.0)
    z_fe = abs(bm.mean - fe) / bm.stderr
    ok = rel <= 0.15 and z_fe >= 5.0
    detail = (
        f"mean {bm.mean:.4f} +/- {bm.stderr:.4f}; vs {heuristic:.4f}: {100 * rel:.1f}% (<= 15%); "
        f"vs {fe:.4f}: {z_fe:.1f} standard errors (>= 5)"
    )
    assert report(11, "4-state / 2-bin heuristic", ok, detail)


def test_c12_three_state_model(report):
    p = SimpParams(1.0, 1.0, 1.5, 2.0)
    run = simp_simulate(p, 1e6, derive_stream(12), checkpoints=64)
    bm = run.batch_means()
    m_quad = simp_mean_quadrature(p)
    z = abs(bm.mean - m_quad) / bm.stderr
    residual = float(np.max(simp_ode_residual(np.linspace(-40.0, 20.0, 601), p)))
    ratios = {g: simp_mean_quadrature(SimpParams(1.0, g, 1.5, 2.0)) / asymptotic_mean(SimpParams(1.0, g, 1.5, 2.0)) for g in (5.0, 50.0)}
    sym = simp_mean_quadrature(SimpParams(1.0, 1.0, 1.8, 1.8))
    ok = z <= 3.0 and residual <= 1e-6 and abs(ratios[50.0] - 1) <= 0.1 and abs(ratios[50.0] - 1) < abs(ratios[5.0] - 1) and abs(sym) <= 1e-8
    detail = (
        f"sim {bm.mean:.4f} +/- {bm.stderr:.4f} vs quadrature {m_quad:.4f} ({z:.2f} se, <= 3); "
        f"ODE residual {residual:.1e}; ratio gamma=5: {ratios[5.0]:.4f}, gamma=50: {ratios[50.0]:.4f}; symmetric mean {sym:.1e}"
    )
    assert report(12, "three-state model", ok, detail)


def test_c13_lyapunov_drift(report):
    check = lyapunov_drift_check()
    ok = check.holds_outside and check.c < 50.0
    n = int(np.sum(np.abs(check.grid) >= check.c))
    assert report(13, "Lyapunov drift inequality", ok, f"s = {check.s}, c = {check.c:.3f}; HW <= -W at all {n} grid points with |x| >= c")
