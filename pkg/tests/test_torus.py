import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metadyn.stats import max_fd_error
from metadyn.torus import (
    FourierBias,
    TorusState,
    TrigPotential,
    averaged_penalty,
    bias_grad,
    bias_value,
    init_from_potential,
    invariant_moments,
    run,
    step_em,
    wrap_angle,
)

F = TrigPotential(cos_coeffs=[0.0, 1.0], sin_coeffs=[0.5, 0.0])
coeffs = st.lists(st.floats(-5, 5), min_size=3, max_size=3)


def test_bias_value_by_hand():
    bias = FourierBias(2, [1.0, 2.0], [3.0, 4.0], gamma=1.0, inv_temp=1.0)
    z = np.pi / 3
    # cos(pi/3) + 2 cos(2pi/3) + 3 sin(pi/3) + 4 sin(2pi/3)
    assert bias_value(bias, z) == pytest.approx(0.5 - 1.0 + 3.5 * np.sqrt(3.0), abs=1e-14)


@given(a=coeffs, b=coeffs, z=st.floats(-10, 10))
def test_bias_is_periodic(a, b, z):
    bias = FourierBias(3, a, b, gamma=1.0, inv_temp=1.0)
    assert bias_value(bias, z + 2 * np.pi) == pytest.approx(bias_value(bias, z), abs=1e-9)


@settings(max_examples=30)
@given(a=coeffs, b=coeffs)
def test_bias_gradient_matches_finite_differences(a, b):
    bias = FourierBias(3, a, b, gamma=1.0, inv_temp=1.0)
    pts = np.linspace(-np.pi, np.pi, 17)[:, None]
    assert max_fd_error(lambda z: bias_value(bias, z), lambda z: np.array([bias_grad(bias, z)]), pts) <= 1e-6


def test_potential_matches_closed_form():
    z = np.linspace(-np.pi, np.pi, 9)
    np.testing.assert_allclose(F.value(z), np.cos(2 * z) + 0.5 * np.sin(z), atol=1e-14)
    np.testing.assert_allclose(F.derivative(z), -2 * np.sin(2 * z) + 0.5 * np.cos(z), atol=1e-14)
    assert F.degree == 2


def test_wrap_angle_range():
    z = wrap_angle(np.array([np.pi, -np.pi, 3 * np.pi + 0.1, -7.0]))
    assert np.all((z >= -np.pi) & (z < np.pi))
    assert z[2] == pytest.approx(-np.pi + 0.1)


def test_init_from_potential_copies_coefficients():
    s = init_from_potential(F, N=3, z0=0.3)
    np.testing.assert_array_equal(s.bias.alpha, [0.0, 1.0, 0.0])
    np.testing.assert_array_equal(s.bias.beta_coef, [0.5, 0.0, 0.0])
    assert s.t == 0.0 and s.z == pytest.approx(0.3)


def test_init_refuses_truncation_below_degree():
    with pytest.raises(ValueError, match="degree"):
        init_from_potential(F, N=1)
    s = init_from_potential(F, N=1, allow_violation=True)
    assert s.residual is not None
    np.testing.assert_array_equal(s.residual.cos_coeffs, [0.0, 1.0])


def test_random_start_is_on_the_circle():
    s = init_from_potential(F, z0=np.random.default_rng(0))
    assert -np.pi <= s.z < np.pi


def test_bias_validation():
    with pytest.raises(ValueError):
        FourierBias(0, [], [], 1.0, 1.0)
    with pytest.raises(ValueError):
        FourierBias(2, [1.0], [1.0, 2.0], 1.0, 1.0)
    with pytest.raises(ValueError):
        FourierBias(1, [1.0], [1.0], -1.0, 1.0)
    assert FourierBias(1, [0.0], [0.0], 1.0, np.inf).noise_scale == 0.0


def test_step_em_by_hand():
    # N = 1, alpha = 1, beta = 0: drift at z is sin z; deposit adds gamma (cos z, sin z) dt
    bias = FourierBias(1, [1.0], [0.0], gamma=2.0, inv_temp=2.0)
    s = TorusState(z=0.5, bias=bias)
    dt, noise = 0.01, 0.3
    new = step_em(s, dt, noise)
    expected_z = 0.5 + np.sin(0.5) * dt + 1.0 * np.sqrt(dt) * noise
    assert new.z == pytest.approx(expected_z, abs=1e-15)
    assert new.bias.alpha[0] == pytest.approx(1.0 + 2.0 * np.cos(0.5) * dt, abs=1e-15)
    assert new.bias.beta_coef[0] == pytest.approx(2.0 * np.sin(0.5) * dt, abs=1e-15)
    assert new.t == dt
    np.testing.assert_allclose(new.running_avg_alpha, new.bias.alpha)


def test_step_em_rejects_bad_step():
    with pytest.raises(ValueError):
        step_em(init_from_potential(F), 0.0, 0.0)


def test_run_agrees_with_repeated_steps():
    s0 = init_from_potential(F, gamma=1.0, inv_temp=1.0, z0=0.1)
    rng = np.random.default_rng(3)
    noises = rng.standard_normal(50)
    s = s0
    for w in noises:
        s = step_em(s, 1e-3, w)
    fast, _ = run(s0, 50 * 1e-3, 1e-3, np.random.default_rng(3))
    assert fast.z == pytest.approx(s.z, abs=1e-12)
    np.testing.assert_allclose(fast.bias.alpha, s.bias.alpha, atol=1e-12)
    np.testing.assert_allclose(fast.running_avg_beta, s.running_avg_beta, atol=1e-12)


def test_zero_temperature_zero_gamma_is_gradient_descent():
    s = init_from_potential(F, gamma=0.0, inv_temp=np.inf, z0=0.3)
    final, _ = run(s, 20.0, 1e-3, np.random.default_rng(0))
    # without deposition the walker runs down Phi_0 = F to a local minimum
    assert abs(F.derivative(final.z)) < 1e-6
    np.testing.assert_array_equal(final.bias.alpha, s.bias.alpha)


def test_averaged_penalty_needs_time():
    with pytest.raises(ValueError):
        averaged_penalty(init_from_potential(F), [0.0])


def test_trace_and_moments_shapes():
    s = init_from_potential(F, z0=0.0)
    final, trace = run(s, 10.0, 1e-3, np.random.default_rng(1), trace_spacing=0.1)
    assert trace.z.shape == (100,)
    assert trace.alpha.shape == (100, 2)
    m = invariant_moments(trace, bins=8)
    assert m.z_counts.sum() == 100
    assert final.t == pytest.approx(10.0)


def test_mode_variance_scales_as_inverse_square():
    """Var alpha_k = gamma / k^2: the Gaussian exponent k^2 (alpha^2 + beta^2) / (2 gamma)
    is the one that makes the Fokker-Planck operator vanish with Z uniform."""
    s = init_from_potential(F, N=2, gamma=2.0, inv_temp=1.0, z0=0.0)
    _, trace = run(s, 4e4, 1e-3, np.random.default_rng(21), trace_spacing=1.0)
    m = invariant_moments(trace)
    np.testing.assert_allclose(m.var_alpha, [2.0, 0.5], rtol=0.15)
    np.testing.assert_allclose(m.var_beta, [2.0, 0.5], rtol=0.15)
