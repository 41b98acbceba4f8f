import logging

import numpy as np
import pytest

from rtw.baselines import (
    MppiConfig,
    _combine,
    er_weights,
    mppi_plan,
    mppi_plan_from_costs,
    mppi_weights,
    rr_weights,
)


def test_er_is_all_ones():
    np.testing.assert_array_equal(er_weights("nav"), [1, 1, 1])
    np.testing.assert_array_equal(er_weights("offroad"), [1, 1, 1, 1])


def test_rr_range_determinism_and_mean():
    a = np.array([rr_weights("offroad", np.random.default_rng(5)) for _ in range(3)])
    assert np.all(a == a[0])
    rng = np.random.default_rng(0)
    draws = np.array([rr_weights("nav", rng) for _ in range(10_000)])
    assert np.all((draws >= 0) & (draws <= 1))
    assert np.all(np.abs(draws.mean(axis=0) - 0.5) < 0.02)


def test_config_validation():
    with pytest.raises(ValueError):
        MppiConfig(horizon_seconds=0.01, dt=0.1)
    with pytest.raises(ValueError):
        MppiConfig(temperature=0.0)
    with pytest.raises(ValueError):
        MppiConfig(num_samples=0)
    assert MppiConfig().horizon_steps == 20


def test_weights_normalised():
    rng = np.random.default_rng(0)
    for _ in range(50):
        w = mppi_weights(rng.normal(size=64) * 100, rng.uniform(0.1, 10))
        assert abs(w.sum() - 1.0) < 1e-12


def test_cost_shift_invariance():
    rng = np.random.default_rng(1)
    samples = rng.normal(size=(32, 5, 2))
    # dyadic costs so the shifted values are exactly representable
    costs = np.round(rng.normal(size=32) * 5 * 1024) / 1024
    a, sa = _combine(samples, costs, 1.0)
    b, sb = _combine(samples, costs + 4096.0, 1.0)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(sa, sb)


def test_single_sample_returns_it():
    cfg = MppiConfig(num_samples=1, horizon_seconds=0.5, dt=0.1)
    captured = {}

    def costs(samples):
        captured["s"] = samples.copy()
        return np.array([3.0])

    first, seq = mppi_plan_from_costs(costs, np.zeros((5, 1)), cfg, np.random.default_rng(0), [-1.0], [1.0])
    np.testing.assert_array_equal(first, captured["s"][0, 0])
    np.testing.assert_array_equal(seq[:-1], captured["s"][0, 1:])


def test_equal_costs_average():
    samples = np.array([[[1.0], [2.0]], [[3.0], [-2.0]]])
    first, seq = _combine(samples, np.array([7.0, 7.0]), 1.0)
    np.testing.assert_allclose(first, [2.0])
    np.testing.assert_allclose(seq, [[0.0], [0.0]])


def test_all_infinite_costs_warn_and_zero(caplog):
    samples = np.ones((4, 3, 2))
    with caplog.at_level(logging.WARNING):
        first, seq = _combine(samples, np.full(4, np.inf), 1.0)
    assert np.all(first == 0) and np.all(seq == 0)
    assert "infinite" in caplog.text


def test_point_mass_converges():
    dt = 0.1

    def dynamics(states, u):
        pos, vel = states[:, 0], states[:, 1]
        vel = vel + u[:, 0] * dt
        return np.stack([pos + vel * dt, vel], axis=1)

    def cost(states, u):
        return states[:, 0] ** 2 + 0.1 * states[:, 1] ** 2

    cfg = MppiConfig(horizon_seconds=1.5, dt=dt, num_samples=64, temperature=1.0)
    rng = np.random.default_rng(0)
    state = np.array([5.0, 0.0])
    controls = np.zeros((cfg.horizon_steps, 1))
    for _ in range(30):
        u, controls = mppi_plan(dynamics, cost, state, controls, cfg, rng, [-10.0], [10.0])
        state = dynamics(state[None], np.atleast_1d(u)[None])[0]
    assert abs(state[0]) < 0.5
