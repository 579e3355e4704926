import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brepforge.diffusion import (
    GaussianDenoiser,
    MLPDenoiser,
    PointMassDenoiser,
    ZeroDenoiser,
    forward_noise,
    linear_schedule,
    reverse_sample,
    train_toy_denoiser,
)
from brepforge.errors import BadRange, InsufficientData, NonFiniteState, StepOutOfRange

S = linear_schedule()


def test_schedule_endpoints():
    assert S.T == 1000
    assert S.beta[0] == 1e-4
    assert S.beta[-1] == 2e-2
    assert S.alpha_bar[0] == 0.9999


def test_alpha_bar_extended_precision():
    with mpmath.workdps(50):
        acc = mpmath.mpf(1)
        worst = 0.0
        for t in range(1, 1001):
            beta = mpmath.mpf(1) / 10**4 + (t - 1) * (mpmath.mpf(2) / 100 - mpmath.mpf(1) / 10**4) / 999
            acc *= 1 - beta
            worst = max(worst, float(abs(S.alpha_bar[t - 1] - acc) / acc))
    assert worst <= 1e-12


def test_bad_ranges():
    with pytest.raises(BadRange):
        linear_schedule(0)
    with pytest.raises(BadRange):
        linear_schedule(10, 0.5, 0.1)
    with pytest.raises(StepOutOfRange):
        S.at(0)
    with pytest.raises(StepOutOfRange):
        S.at(1001)


def test_forward_noise_identities():
    rng = np.random.default_rng(0)
    x0 = rng.normal(size=(5, 3))
    ab = S.alpha_bar[299]
    xt, _ = forward_noise(x0, 300, S, rng, eps=np.zeros_like(x0))
    assert np.allclose(xt, np.sqrt(ab) * x0, atol=1e-15)
    eps = rng.normal(size=(5, 3))
    xt, _ = forward_noise(np.zeros((5, 3)), 300, S, rng, eps=eps)
    assert np.allclose(xt, np.sqrt(1 - ab) * eps, atol=1e-15)


def test_forward_variance_monte_carlo():
    xt, _ = forward_noise(np.zeros(100_000), 500, S, np.random.default_rng(1))
    assert abs(xt.var() / (1 - S.alpha_bar[499]) - 1) < 0.02


@pytest.mark.parametrize("T", [10, 100, 1000])
def test_point_mass_recovered(T):
    s = linear_schedule(T)
    c = np.array([[0.3, -0.7, 0.25], [1.0, 0.0, -1.0]])
    x = reverse_sample(PointMassDenoiser(c, s), c.shape, s, None, np.random.default_rng(T))
    assert np.abs(x - c).max() <= 1e-3


def test_gaussian_mean():
    mu, sigma = np.array([1.0, -2.0]), 0.5
    x = reverse_sample(GaussianDenoiser(mu, sigma, S), (10_000, 2), S, None, np.random.default_rng(2))
    assert (np.abs(x.mean(axis=0) - mu) <= 3 * sigma / 100).all()
    assert (np.abs(x.std(axis=0) - sigma) < 0.02).all()


def test_zero_denoiser_chain_statistics():
    s = linear_schedule(50, 1e-3, 0.1)
    # with eps_hat = 0 each step divides by sqrt(alpha_t) and adds posterior noise
    var = 1.0
    for t in range(s.T, 0, -1):
        var = var / s.alpha[t - 1] + (s.posterior_variance(t) if t > 1 else 0.0)
    x = reverse_sample(ZeroDenoiser(), (20_000,), s, None, np.random.default_rng(3))
    assert abs(x.mean()) < 4 * np.sqrt(var / 20_000)
    assert abs(x.var() / var - 1) < 0.03


def test_non_finite_detected():
    class Bad:
        def predict_noise(self, x, t, cond=None):
            return np.full_like(x, np.nan)

    with pytest.raises(NonFiniteState):
        reverse_sample(Bad(), (2,), linear_schedule(5), None, np.random.default_rng(0))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 1000))
def test_posterior_variance_bounds(t):
    v = S.posterior_variance(t)
    assert 0 <= v <= S.beta[t - 1] + 1e-18
    if t > 1:
        ab_prev = S.alpha_bar[t - 2]
        assert S.alpha_bar[t - 1] == ab_prev * S.alpha[t - 1]


@pytest.mark.parametrize("param", ["eps", "x0", "edm"])
def test_mlp_shapes_and_serialization(param):
    net = MLPDenoiser(6, 4, hidden=(16,), t_dim=8, rng=np.random.default_rng(0), param=param, s=S)
    net.params[-1][0] = np.random.default_rng(1).normal(size=net.params[-1][0].shape)
    x = np.random.default_rng(2).normal(size=(5, 6))
    c = np.ones((5, 4))
    out = net.predict_noise(x, 17, c)
    assert out.shape == x.shape
    back = MLPDenoiser.from_dict(net.to_dict())
    assert np.array_equal(back.predict_noise(x, 17, c), out)


def test_mlp_gradients_match_finite_differences():
    rng = np.random.default_rng(4)
    net = MLPDenoiser(3, 2, hidden=(8, 8), t_dim=4, rng=rng)
    for layer in net.params:
        layer[0] = rng.normal(size=layer[0].shape) * 0.5
    x, c, y = rng.normal(size=(7, 3)), rng.normal(size=(7, 2)), rng.normal(size=(7, 3))
    t = np.arange(1, 8)
    w = rng.random(7)
    _, grads = net.loss_and_grads(x, t, c, y, w)
    h = 1e-6
    for li, (gw, _) in enumerate(grads):
        for idx in [(0, 0), (1, 1), (2, 0)]:
            if idx[0] >= gw.shape[0] or idx[1] >= gw.shape[1]:
                continue
            net.params[li][0][idx] += h
            up, _ = net.loss_and_grads(x, t, c, y, w)
            net.params[li][0][idx] -= 2 * h
            dn, _ = net.loss_and_grads(x, t, c, y, w)
            net.params[li][0][idx] += h
            assert (up - dn) / (2 * h) == pytest.approx(gw[idx], rel=1e-4, abs=1e-8)


def test_toy_denoiser_single_model_corpus():
    """One model repeated ten times is reproduced by sampling."""
    s = linear_schedule(100, 1e-4, 0.2)
    rng = np.random.default_rng(5)
    x0 = rng.uniform(-0.8, 0.8, (4, 3))
    cond = np.eye(4)
    net = train_toy_denoiser([(x0, cond)] * 10, s, 300, rng, hidden=(64, 64), t_dim=16, steps_per_epoch=4)
    assert net.loss_history[-1] < net.loss_history[0]
    got = reverse_sample(net, x0.shape, s, cond, np.random.default_rng(6))
    assert np.abs(got - x0).max() <= 5e-2


def test_toy_denoiser_needs_data():
    with pytest.raises(InsufficientData):
        train_toy_denoiser([(np.zeros((2, 2)), np.zeros((2, 1)))] * 3, S, 1, np.random.default_rng(0))
