import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.linalg import expm

from cavityobs.phasor import I2, J
from cavityobs.plant import (CavityParams, ChannelNoise, TruthState, build_discrete_matrices,
                             exact_propagator, measure_forward, measure_pickup, measure_reflected,
                             step_truth)
from cavityobs.validate import euler_fill_error

P = CavityParams()
B = P.ts * P.omega_half


def test_omega_half_derived():
    assert P.omega_half == pytest.approx(2 * math.pi * 25000, rel=1e-12)
    assert B == pytest.approx(0.157080, abs=5e-7)


@pytest.mark.parametrize("kwargs", [dict(ts=0.0), dict(q_loaded=-1.0), dict(omega0=float("nan")),
                                    dict(ts=1.3e-5), dict(kappa=-1.0)])
def test_invalid_params(kwargs):
    with pytest.raises(ValueError):
        CavityParams(**kwargs)


def test_omega_half_not_settable():
    with pytest.raises(TypeError):
        CavityParams(omega_half=1.0)


def test_noise_must_be_non_negative():
    with pytest.raises(ValueError):
        ChannelNoise(sigma_pickup=-1e-4)


def test_discrete_matrices_examples():
    a, b = build_discrete_matrices(P, 0.0, 0.0)
    np.testing.assert_allclose(a, 0.84292 * I2, atol=1e-5)
    np.testing.assert_allclose(b, 0.15708 * I2, atol=1e-5)
    a, b = build_discrete_matrices(replace(P, ts=1e-9), 0.0, 0.0)
    np.testing.assert_allclose(a, I2, atol=2e-4)
    np.testing.assert_allclose(b, 0 * I2, atol=2e-4)
    a, _ = build_discrete_matrices(P, P.omega_half, 0.0)
    np.testing.assert_allclose(a, 0.84292 * I2 + 0.15708 * J, atol=1e-5)


def test_small_angle_input_matrix():
    _, b = build_discrete_matrices(P, 0.0, 0.1, small_angle=True)
    np.testing.assert_allclose(b, B * (I2 + 0.1 * J))


def test_step_truth_examples():
    z = np.zeros(2)
    assert np.array_equal(step_truth(TruthState(x=z), z, P), z)
    np.testing.assert_allclose(step_truth(TruthState(x=np.array([1.0, 0.0])), z, P), [0.84292, 0], atol=1e-5)
    np.testing.assert_allclose(step_truth(TruthState(x=z), np.array([1.0, 0.0]), P), [0.15708, 0], atol=1e-5)


def test_step_truth_scales_disturbance_by_ts():
    d = np.array([1e3, -2e3])
    np.testing.assert_allclose(step_truth(TruthState(x=np.zeros(2), d=d), np.zeros(2), P), P.ts * d)


def test_measurement_examples():
    x = np.array([1.0, 0.0])
    np.testing.assert_array_equal(measure_pickup(x, 0.0), x)
    np.testing.assert_allclose(measure_pickup(x, math.pi / 2), [0, 1], atol=1e-16)
    np.testing.assert_allclose(measure_forward(np.array([1.0, 0.0]), 0.0), [1, 0])
    np.testing.assert_allclose(measure_forward(np.array([0.0, 1.0]), -math.pi / 2), [1, 0], atol=1e-16)
    f = measure_forward(np.array([1.0, 0.0]), 0.02)
    assert math.atan2(f[1], f[0]) == pytest.approx(0.02, abs=1e-15)
    np.testing.assert_allclose(measure_reflected(x, np.zeros(2), 200.0), [1, 0])
    np.testing.assert_allclose(measure_reflected(x, x, 1.0), [0, 0])
    np.testing.assert_allclose(measure_reflected(x, np.array([0.004, 0.001]), 200.0), [0.2, -0.2], atol=1e-13)


def test_pickup_noise_mean():
    rng = np.random.default_rng(1)
    x = np.array([0.3, -0.7])
    draws = np.array([measure_pickup(x, 0.1, rng, 1e-4) for _ in range(100_000)])
    np.testing.assert_allclose(draws.mean(axis=0), measure_pickup(x, 0.1), atol=3e-6)
    np.testing.assert_allclose(draws.std(axis=0), 1e-4, rtol=0.02)


def test_pickup_is_isometric(rng):
    for _ in range(50):
        x = rng.normal(size=2)
        assert np.linalg.norm(measure_pickup(x, rng.uniform(-3, 3))) == pytest.approx(np.linalg.norm(x), rel=1e-12)


def test_unity_dc_gain():
    x, u = np.zeros(2), np.array([0.6, -0.8])
    for _ in range(math.ceil(100 / B)):
        x = step_truth(TruthState(x=x), u, P)
    np.testing.assert_allclose(x, u, atol=1e-9)


@pytest.mark.parametrize("dw", [2 * math.pi * 500, 2 * math.pi * 5000, -0.5 * P.omega_half])
def test_lorentzian_steady_state(dw):
    x, u = np.zeros(2), np.array([1.0, 0.0])
    for _ in range(2000):
        x = step_truth(TruthState(x=x, delta_omega=dw), u, P)
    assert np.linalg.norm(x) == pytest.approx(1 / math.sqrt(1 + (dw / P.omega_half) ** 2), rel=1e-2)


def test_exact_propagator_matches_expm():
    dw = 2 * math.pi * 3000
    for dt in (1e-7, 1e-6, 3.25e-4):
        want = expm(dt * (dw * J - P.omega_half * I2))
        np.testing.assert_allclose(exact_propagator(P, dw, dt), want, rtol=1e-10, atol=0)


def test_euler_error_is_first_order():
    for dw in (0.0, 2 * math.pi * 500):
        coarse = euler_fill_error(P, dw)
        fine = euler_fill_error(replace(P, ts=P.ts / 2), dw)
        assert 1.8 <= coarse / fine <= 2.2


def test_euler_error_doubles_with_ts():
    base = euler_fill_error(P, 2 * math.pi * 500)
    doubled = euler_fill_error(replace(P, ts=2 * P.ts), 2 * math.pi * 500)
    assert doubled / base == pytest.approx(2.0, rel=0.15)
