import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from metadyn.discrete import Landscape, PdmpState, SimParams, Trajectory, simulate
from metadyn.ray_knight import (
    EtaStart,
    TargetNotReached,
    apply_H,
    direct_profile,
    eta_initial,
    eta_simulate,
    eta_time_to_first_jump,
    extract_eta_minus,
    extract_eta_plus,
    gumbel_expectation,
    q_sample,
    q_sample_from_uniform,
    q_survival,
    rk_walk_profile,
    sample_profiles,
    simulate_direct_profile,
    stationary_log_density,
    wh_increment,
    wh_lyapunov,
    wh_lyapunov_grad,
)
from metadyn.stats import adaptive_quadrature, ks_one_sample, ks_two_sample, max_fd_error


def test_kernel_oracle():
    # survival of q(0, .) at log 2 is exp(-(2 - 1)) for beta = 1
    assert q_survival(0.0, np.log(2.0), 1.0) == pytest.approx(np.exp(-1.0), abs=1e-15)
    assert q_sample_from_uniform(0.0, 1.0, np.exp(-1.0)) == pytest.approx(np.log(2.0), abs=1e-15)
    assert q_survival(0.3, -1.0, 2.0) == 1.0


@given(y=st.floats(-20, 20), u=st.floats(1e-12, 1.0), beta=st.floats(0.1, 5.0), dy=st.floats(0, 5))
def test_kernel_inverse_and_monotone_coupling(y, u, beta, dy):
    z = q_sample_from_uniform(y, beta, u)
    assert z >= y
    assert q_sample_from_uniform(y + dy, beta, u) >= z
    if z > y + 1e-6:
        assert q_survival(y, z, beta) == pytest.approx(u, rel=1e-6)


def test_kernel_sampler_law():
    draws = q_sample(0.5, 1.5, np.random.default_rng(0), size=50_000)
    d, _ = ks_one_sample(draws, lambda x: 1.0 - q_survival(0.5, x, 1.5))
    assert d < 0.01


def test_first_jump_time_inverts_hazard():
    # hazard exp(-beta (y - s)) integrates to e^{-beta y} (e^{beta s} - 1) / beta
    y, beta, e = 0.7, 1.3, 0.9
    s = eta_time_to_first_jump(y, beta, e)
    assert np.exp(-beta * y) * np.expm1(beta * s) / beta == pytest.approx(e, rel=1e-12)


def test_initial_law_table():
    assert eta_initial(2, "-", 0, 0.4) == EtaStart(0.4, kernel=False)
    assert eta_initial(2, "-", 2, 0.4) == EtaStart(0.4, kernel=True)
    assert eta_initial(2, "+", 1, 0.4) == EtaStart(-0.4, kernel=True)
    assert eta_initial(2, "+", 3, 0.4) == EtaStart(-0.4, kernel=False)
    with pytest.raises(ValueError):
        eta_initial(1, "x", 0, 0.0)


def test_eta_at_time_zero_is_its_start():
    assert eta_simulate(1.25, 0.0, 1.0, 0) == 1.25
    with pytest.raises(ValueError):
        eta_simulate(0.0, -1.0, 1.0)


def _handmade():
    # K = 1 from site 0; jumps at t = 1 (to 1), 3 (to 0), 4 (to 1); stop at t = 5
    init = PdmpState.start([0.0], 0)
    final = PdmpState([0.0], [2.0, 3.0], 1, t=5.0)
    return Trajectory(
        landscape=Landscape.flat(1), beta=1.0, gamma=1.0, init=init, final=final, n_events=3,
        event_t=np.array([1.0, 3.0, 4.0]), event_site=np.array([1, 0, 1]),
        event_L=np.array([[1.0, 0.0], [1.0, 2.0], [2.0, 2.0]]), log_complete=True,
    )


def test_extraction_on_handmade_log():
    traj = _handmade()
    s, y = extract_eta_minus(traj, 1).knots()
    np.testing.assert_array_equal(s, [0.0, 1.0, 1.0, 2.0])
    np.testing.assert_array_equal(y, [0.0, -1.0, 1.0, 0.0])
    s, y = extract_eta_plus(traj, 1).knots()
    np.testing.assert_array_equal(s, [0.0, 2.0, 2.0, 3.0])
    np.testing.assert_array_equal(y, [1.0, -1.0, 0.0, -1.0])
    prof = direct_profile(traj, 1, 2.5)
    np.testing.assert_array_equal(prof.values, [2.0, 2.5])
    assert prof.stop_time == 4.5
    with pytest.raises(TargetNotReached):
        direct_profile(traj, 0, 10.0)


def test_extraction_consistency_on_simulated_path():
    traj = simulate(Landscape.flat(2), PdmpState.start([0.0, 0.0], 1), SimParams(horizon=500.0), 9, log_events=True)
    xs = traj.x_at_events()
    for k in (1, 2):
        path = extract_eta_minus(traj, k)
        # clocks are contiguous and jumps between pieces go up
        np.testing.assert_allclose(path.s1[:-1], path.s0[1:])
        assert np.all(path.y0[1:] >= path.y0[:-1] - (path.s1[:-1] - path.s0[:-1]) - 1e-12)
        # at every arrival at k-1 the extracted value equals X(k)
        arrivals = np.flatnonzero(traj.event_site == k - 1)
        for n in arrivals[:50]:
            L = traj.event_L[n]
            assert path.value_at(L[k - 1]) == pytest.approx(xs[n + 1, k - 1], abs=1e-9)


def test_extraction_needs_flat_unit_gamma():
    traj = simulate(Landscape.flat(1), PdmpState.start([0.0], 0), SimParams(gamma=2.0, horizon=10.0), 0, log_events=True)
    with pytest.raises(ValueError):
        extract_eta_minus(traj, 1)


def test_walk_profile_anchor_and_sign():
    prof = rk_walk_profile(np.zeros(3), 0, 1, 1.5, 1.0, 0)
    assert prof.values[1] == 1.5
    assert np.all(prof.values >= 0)
    direct = simulate_direct_profile(3, np.zeros(3), 0, 1, 1.5, 1.0, np.random.default_rng(0))
    assert direct.values[1] == 1.5


def test_profiles_agree_small():
    a = sample_profiles("direct", 1, None, 0, 0, 1.0, 1.0, 3000, seed=1)
    b = sample_profiles("walk", 1, None, 0, 0, 1.0, 1.0, 3000, seed=2)
    assert ks_two_sample(a[:, 1], b[:, 1])[1] > 0.01
    with pytest.raises(ValueError):
        sample_profiles("other", 1, None, 0, 0, 1.0, 1.0, 1, seed=0)


def test_lyapunov_shape():
    s = 1.0
    assert wh_lyapunov(-5.0, s) == 2.0
    assert wh_lyapunov(0.0, s) == 1.0
    assert wh_lyapunov(2.0, s) == pytest.approx(np.e**2)
    # continuous at the branch points
    for x in (-s - 1.0, -s, s):
        assert wh_lyapunov(x - 1e-9, s) == pytest.approx(wh_lyapunov(x + 1e-9, s), abs=1e-7)
    pts = np.array([[-1.7], [-1.2], [0.5], [1.5], [3.0]])
    assert max_fd_error(lambda x: wh_lyapunov(x, s), lambda x: np.array([wh_lyapunov_grad(x, s)]), pts) < 1e-6
    assert wh_increment(3.0, 0.25, s) == pytest.approx(wh_lyapunov(3.25, s) - wh_lyapunov(3.0, s), rel=1e-12)


def test_gumbel_expectation_moments():
    assert gumbel_expectation(lambda z: 1.0, 1.0) == pytest.approx(1.0, abs=1e-10)
    for beta in (1.0, 2.0):
        expected = (np.log(beta) - np.euler_gamma) / beta
        assert gumbel_expectation(lambda z: z, beta) == pytest.approx(expected, abs=1e-8)


def test_generator_on_identity_matches_survival_integral():
    x, beta = 0.4, 1.2
    mean_jump = adaptive_quadrature(lambda z: q_survival(x, z, beta), x, np.inf)
    expected = -1.0 + np.exp(-beta * x) * mean_jump
    assert apply_H(lambda y: y, lambda y: 1.0, x, beta) == pytest.approx(expected, rel=1e-8)


def test_stationary_law_is_invariant_for_H():
    beta = 1.0
    f = lambda y: np.exp(-y * y)
    g = lambda y: -2 * y * np.exp(-y * y)
    dens = lambda y: np.exp(stationary_log_density(y, beta))
    z = adaptive_quadrature(dens, -20, 20)
    u, w = np.polynomial.legendre.leggauss(200)
    y = 7.0 * u
    total = 7.0 * sum(wi * apply_H(f, g, yi, beta) * dens(yi) for yi, wi in zip(y, w)) / z
    assert abs(total) < 1e-6
