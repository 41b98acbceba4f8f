import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from rtw.nn import (
    AdamState,
    MlpParams,
    NonFiniteError,
    ShapeError,
    adam_step,
    gaussian_entropy,
    gaussian_log_prob,
    gaussian_sample,
    init_mlp,
    mlp_backward,
    mlp_forward,
)


def straight_line_forward(params, x):
    """Independent evaluation: explicit loops over neurons, no matrix products."""
    h = list(map(float, x))
    n_layers = len(params.weights)
    for i in range(n_layers):
        w, b = params.weights[i], params.biases[i]
        out = []
        for j in range(w.shape[0]):
            s = b[j]
            for q in range(w.shape[1]):
                s += w[j, q] * h[q]
            if i < n_layers - 1:
                s = math.tanh(s) if params.activation[i] == "tanh" else max(s, 0.0)
            out.append(s)
        h = out
    return np.array(h)


def fd_gradients(params, x, g, h=1e-5):
    grads = params.zeros_like()
    for p, out in zip(params.arrays(), grads.arrays()):
        flat, gflat = p.reshape(-1), out.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = float(np.sum(mlp_forward(params, x) * g))
            flat[i] = old - h
            down = float(np.sum(mlp_forward(params, x) * g))
            flat[i] = old
            gflat[i] = (up - down) / (2 * h)
    return grads


def max_rel_err(a, b, floor=1e-6):
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def test_zero_weights_give_bias():
    p = init_mlp([3, 4, 2], np.random.default_rng(0))
    for w in p.weights:
        w[:] = 0.0
    p.biases[-1][:] = [0.3, -1.2]
    np.testing.assert_array_equal(mlp_forward(p, np.ones(3)), [0.3, -1.2])


def test_identity_layer():
    p = MlpParams([3, 3], [np.eye(3)], [np.zeros(3)])
    x = np.array([1.5, -2.0, 0.25])
    np.testing.assert_array_equal(mlp_forward(p, x), x)


@pytest.mark.parametrize("activation", ["tanh", "relu"])
def test_forward_matches_straight_line(activation):
    rng = np.random.default_rng(1)
    p = init_mlp([4, 8, 2], rng, activation=activation)
    for b in p.biases:
        b[:] = rng.normal(size=b.shape)
    x = rng.normal(size=4)
    np.testing.assert_allclose(mlp_forward(p, x), straight_line_forward(p, x), rtol=1e-13, atol=1e-14)


def test_forward_batch_equals_rows():
    rng = np.random.default_rng(2)
    p = init_mlp([5, 7, 3], rng)
    xs = rng.normal(size=(6, 5))
    batch = mlp_forward(p, xs)
    for i, x in enumerate(xs):
        np.testing.assert_allclose(batch[i], mlp_forward(p, x), rtol=0, atol=1e-14)


def test_forward_shape_error_names_sizes():
    p = init_mlp([4, 8, 2], np.random.default_rng(0))
    with pytest.raises(ShapeError) as info:
        mlp_forward(p, np.zeros(5))
    assert info.value.expected == 4 and info.value.actual == 5


def test_forward_is_deterministic():
    p = init_mlp([6, 16, 3], np.random.default_rng(3))
    x = np.linspace(-1, 1, 6)
    assert mlp_forward(p, x).tobytes() == mlp_forward(p, x).tobytes()


def test_backward_zero_upstream():
    p = init_mlp([3, 5, 2], np.random.default_rng(0))
    g = mlp_backward(p, np.ones(3), np.zeros(2))
    assert all(np.all(a == 0) for a in g.arrays())


def test_backward_linear_layer_closed_form():
    rng = np.random.default_rng(4)
    p = MlpParams([3, 2], [rng.normal(size=(2, 3))], [rng.normal(size=2)])
    x, g = rng.normal(size=3), rng.normal(size=2)
    grads = mlp_backward(p, x, g)
    np.testing.assert_allclose(grads.biases[0], g)
    np.testing.assert_allclose(grads.weights[0], np.outer(g, x))


def test_backward_6_16_16_3_against_fd():
    rng = np.random.default_rng(5)
    p = init_mlp([6, 16, 16, 3], rng)
    for b in p.biases:
        b[:] = 0.1 * rng.normal(size=b.shape)
    x = rng.normal(size=6)
    g = rng.normal(size=3)
    ana = mlp_backward(p, x, g)
    num = fd_gradients(p, x, g)
    for a, n in zip(ana.arrays(), num.arrays()):
        assert max_rel_err(a, n) < 1e-4


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n_hidden=st.integers(1, 3), relu=st.booleans())
def test_backward_random_nets_property(seed, n_hidden, relu):
    rng = np.random.default_rng(seed)
    sizes = [int(rng.integers(1, 9))] + [int(rng.integers(1, 13)) for _ in range(n_hidden)] + [int(rng.integers(1, 4))]
    p = init_mlp(sizes, rng, activation="relu" if relu else "tanh")
    for b in p.biases:
        b[:] = 0.1 * rng.normal(size=b.shape)
    x = rng.normal(size=(3, sizes[0]))
    if relu:
        # keep pre-activations away from the kink so central differences are valid
        _, cache = __import__("rtw.nn", fromlist=["forward_cached"]).forward_cached(p, x)
        if any(np.min(np.abs(z)) < 1e-3 for _, z, _ in cache[:-1]):
            return
    g = rng.normal(size=(3, sizes[-1]))
    ana = mlp_backward(p, x, g)
    num = fd_gradients(p, x, g)
    for a, n in zip(ana.arrays(), num.arrays()):
        assert max_rel_err(a, n) < 1e-4


def test_param_dict_round_trip():
    p = init_mlp([4, 6, 2], np.random.default_rng(0), policy=True)
    q = MlpParams.from_dict(p.to_dict())
    for a, b in zip(p.arrays(), q.arrays()):
        assert a.tobytes() == b.tobytes()
    assert q.activation == p.activation


def test_invalid_layer_chain_rejected():
    with pytest.raises(ShapeError):
        MlpParams([3, 2], [np.zeros((2, 4))], [np.zeros(2)])
    with pytest.raises(ValueError):
        MlpParams([3], [], [])


# --- Adam ------------------------------------------------------------------

def scalar_params(v):
    return MlpParams([1, 1], [np.array([[v]])], [np.array([0.0])])


def test_adam_zero_grads_leave_params():
    p = init_mlp([3, 4, 2], np.random.default_rng(0))
    before = [a.copy() for a in p.arrays()]
    adam = AdamState.for_params(p, 1e-2)
    adam_step(adam, p, p.zeros_like())
    for a, b in zip(p.arrays(), before):
        np.testing.assert_array_equal(a, b)
    assert adam.step_count == 1


def test_adam_first_and_second_step_hand_values():
    lr, g = 0.1, 2.0
    p = scalar_params(1.0)
    adam = AdamState.for_params(p, lr)
    grads = scalar_params(g)
    grads.biases[0][:] = 0.0
    adam_step(adam, p, grads)
    # m = 0.1 g, v = 0.001 g^2; bias corrected m_hat = g, v_hat = g^2
    expected = 1.0 - lr * g / (abs(g) + 1e-8)
    assert p.weights[0][0, 0] == pytest.approx(expected, abs=1e-15)
    adam_step(adam, p, grads)
    m = 0.9 * 0.1 * g + 0.1 * g
    v = 0.999 * 0.001 * g * g + 0.001 * g * g
    step2 = lr * (m / (1 - 0.9**2)) / (math.sqrt(v / (1 - 0.999**2)) + 1e-8)
    assert p.weights[0][0, 0] == pytest.approx(expected - step2, abs=1e-15)
    assert adam.step_count == 2


def test_adam_rejects_non_finite():
    p = scalar_params(1.0)
    adam = AdamState.for_params(p)
    bad = scalar_params(float("nan"))
    with pytest.raises(NonFiniteError):
        adam_step(adam, p, bad)
    assert p.weights[0][0, 0] == 1.0 and adam.step_count == 0


def test_adam_moment_lists_track_updates_after_reload():
    rng = np.random.default_rng(0)
    p = init_mlp([3, 4, 2], rng, policy=True)
    adam = AdamState.for_params(p, 1e-3)
    g = p.copy()
    adam_step(adam, p, g)
    clone = AdamState.from_dict(adam.to_dict(), p)
    q = p.copy()
    adam_step(adam, p, g)
    adam_step(clone, q, g)
    for a, b in zip(adam.first_moment + adam.second_moment, clone.first_moment + clone.second_moment):
        assert a.tobytes() == b.tobytes()
    for a, b in zip(p.arrays(), q.arrays()):
        assert a.tobytes() == b.tobytes()


def test_adam_keeps_log_std_in_range():
    p = init_mlp([2, 2], np.random.default_rng(0), policy=True)
    p.log_std[:] = 1.99
    adam = AdamState.for_params(p, 1.0)
    g = p.zeros_like()
    g.log_std[:] = -1.0
    adam_step(adam, p, g)
    assert np.all(p.log_std <= 2.0)


# --- Gaussian ----------------------------------------------------------------

def test_log_prob_standard_normal_mode():
    assert gaussian_log_prob(np.zeros(1), np.zeros(1), np.zeros(1)) == pytest.approx(-0.5 * math.log(2 * math.pi))


def test_log_prob_matches_per_dimension_densities():
    rng = np.random.default_rng(0)
    mean, log_std, x = rng.normal(size=3), rng.normal(size=3) * 0.5, rng.normal(size=3)
    oracle = sum(stats.norm.logpdf(x[i], mean[i], math.exp(log_std[i])) for i in range(3))
    assert gaussian_log_prob(x, mean, log_std) == pytest.approx(oracle, abs=1e-12)


def test_entropy_matches_scipy():
    log_std = np.array([-0.3, 0.0, 0.7])
    oracle = sum(stats.norm(0, math.exp(s)).entropy() for s in log_std)
    assert gaussian_entropy(log_std) == pytest.approx(oracle, abs=1e-12)


def test_sample_collapses_at_clamped_log_std():
    mean = np.array([0.3, -2.0])
    a = gaussian_sample(mean, np.array([-1e6, -1e6]), np.random.default_rng(0))
    np.testing.assert_allclose(a.sample, mean, atol=1e-7)
    assert np.all(a.log_std == -20.0)


def test_sample_log_prob_consistent():
    rng = np.random.default_rng(1)
    a = gaussian_sample(np.zeros(3), np.full(3, -0.5), rng)
    assert a.log_prob == pytest.approx(gaussian_log_prob(a.sample, a.mean, a.log_std))
