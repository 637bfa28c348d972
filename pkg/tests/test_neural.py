import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from neurofem import neural as N
from neurofem.errors import CheckpointError, InvalidArgumentError


def reference_forward(params, x):
    """Straight-line matrix chain, independent of the module's loop."""
    acts = {
        "relu": lambda z: np.where(z > 0, z, 0.0),
        "softplus": lambda z: np.log(1 + np.exp(z)),
        "sigmoid": lambda z: 1 / (1 + np.exp(-z)),
        "linear": lambda z: z,
    }
    a = np.asarray(x, dtype=float)
    for W, b, name in zip(params.weights, params.biases, params.config.activations):
        a = acts[name](W @ a + b)
    return a


def central_fd(fn, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((fn(x + e) - fn(x - e)) / (2 * h))
    return np.stack(cols, axis=-1)


def test_init_deterministic():
    cfg = N.MLPConfig.simple((3, 30, 30, 30, 1), "relu", "softplus")
    a, b = N.init_params(cfg, 7), N.init_params(cfg, 7)
    assert np.array_equal(a.flat(), b.flat())
    assert not np.array_equal(a.flat(), N.init_params(cfg, 8).flat())


def test_param_count():
    cfg = N.MLPConfig.simple((3, 30, 30, 30, 1), "relu", "softplus")
    expected = sum(a * b + b for a, b in zip(cfg.layer_widths[:-1], cfg.layer_widths[1:]))
    assert cfg.num_params == expected == 3 * 30 + 30 + 30 * 30 + 30 + 30 * 30 + 30 + 30 * 1 + 1 == 2011
    assert N.init_params(cfg, 0).flat().size == 2011


@pytest.mark.parametrize("widths", [(3, 0, 1), (3, 1), (0, 2, 1)])
def test_invalid_widths(widths):
    with pytest.raises(InvalidArgumentError):
        N.MLPConfig.simple(widths)


def test_zero_weights_give_activation_of_bias():
    cfg = N.MLPConfig.simple((2, 3, 1), "relu", "softplus")
    p = N.init_params(cfg, 0)
    p = N.unflatten(cfg, np.zeros(cfg.num_params))
    p.biases[-1][:] = 0.7
    assert np.isclose(N.forward(p, [1.0, -2.0])[0], np.log1p(np.exp(0.7)))


def test_single_linear_layer_exact(rng):
    W, b = rng.standard_normal((2, 3)), rng.standard_normal(2)
    cfg = N.MLPConfig((3, 2, 2), ("linear", "linear"))
    p = N.MLPParams(cfg, [W, np.eye(2)], [b, np.zeros(2)])
    x = rng.standard_normal(3)
    assert np.array_equal(N.forward(p, x), np.eye(2) @ (W @ x + b) + np.zeros(2))
    np.testing.assert_array_equal(N.input_jacobian(p, x), W)


@pytest.mark.parametrize("out", ["softplus", "sigmoid", "linear"])
def test_forward_matches_reference(rng, out):
    p = N.init_params(N.MLPConfig.simple((3, 30, 30, 2), "relu", out), 11)
    for x in rng.standard_normal((5, 3)):
        np.testing.assert_allclose(N.forward(p, x), reference_forward(p, x), rtol=1e-14, atol=1e-14)


def test_output_ranges(rng):
    x = 50 * rng.standard_normal((100, 2))
    sp = N.forward(N.init_params(N.MLPConfig.simple((2, 8, 1), "relu", "softplus"), 0), x)
    sg = N.forward(N.init_params(N.MLPConfig.simple((2, 8, 1), "relu", "sigmoid"), 0), x)
    assert (sp >= 0).all() and np.isfinite(sp).all()
    assert ((sg >= 0) & (sg <= 1)).all()


def test_softplus_no_overflow():
    y, d = N.activate("softplus", np.array([-1000.0, 0.0, 1000.0]))
    assert np.isfinite(y).all() and y[2] == 1000.0 and np.isclose(y[1], np.log(2))


def test_width_mismatch():
    p = N.init_params(N.MLPConfig.simple((3, 4, 1)), 0)
    with pytest.raises(InvalidArgumentError):
        N.forward(p, np.zeros(2))
    with pytest.raises(InvalidArgumentError):
        N.param_vjp(p, np.zeros(3), np.zeros(2))


def test_softplus_scalar_jacobian_fd():
    p = N.init_params(N.MLPConfig.simple((1, 5, 1), "softplus", "softplus"), 4)
    J = N.input_jacobian(p, np.array([0.0]))
    fd = central_fd(lambda x: N.forward(p, x), np.array([0.0]))
    assert abs(J[0, 0] - fd[0, 0]) / abs(fd[0, 0]) <= 1e-6


def test_relu_kink_subgradient_is_zero():
    cfg = N.MLPConfig((1, 1, 1), ("relu", "linear"))
    p = N.MLPParams(cfg, [np.array([[1.0]]), np.array([[1.0]])], [np.zeros(1), np.zeros(1)])
    assert N.input_jacobian(p, np.array([0.0]))[0, 0] == 0.0


def test_zero_cotangent_zero_gradient(rng):
    p = N.init_params(N.MLPConfig.simple((3, 6, 2), "relu", "softplus"), 2)
    assert np.all(N.param_vjp(p, rng.standard_normal((4, 3)), np.zeros((4, 2))) == 0)


def test_scalar_linear_vjp():
    cfg = N.MLPConfig((2, 1, 1), ("linear", "linear"))
    p = N.MLPParams(cfg, [np.array([[0.5, -1.0]]), np.array([[1.0]])], [np.zeros(1), np.zeros(1)])
    g = N.param_vjp(p, np.array([3.0, 4.0]), np.array([2.0]))
    np.testing.assert_allclose(g[:2], 2.0 * np.array([3.0, 4.0]))


def test_param_vjp_fd_sampled():
    p = N.init_params(N.MLPConfig.simple((3, 30, 1), "relu", "softplus"), 9)
    x = np.array([[0.3, -0.7, 1.1]])
    ct = np.array([[1.3]])
    g = N.param_vjp(p, x, ct)
    theta = p.flat()
    idx = np.random.default_rng(0).choice(theta.size, 50, replace=False)
    worst = 0.0
    for i in idx:
        e = np.zeros_like(theta)
        e[i] = 1e-6
        fd = (ct * (N.forward(p.with_flat(theta + e), x) - N.forward(p.with_flat(theta - e), x))).sum() / 2e-6
        if abs(fd) > 1e-8:
            worst = max(worst, abs(g[i] - fd) / abs(fd))
        else:
            assert abs(g[i]) < 1e-7
    assert worst <= 1e-6


@given(st.integers(0, 10_000), st.lists(st.floats(-2, 2), min_size=2, max_size=2))
def test_jacobian_and_vjp_property(seed, x):
    p = N.init_params(N.MLPConfig.simple((2, 6, 6, 2), "softplus", "sigmoid"), seed)
    x = np.array(x)
    J = N.input_jacobian(p, x)
    fd = central_fd(lambda z: N.forward(p, z), x)
    np.testing.assert_allclose(J, fd, rtol=1e-5, atol=1e-8)
    ct = np.array([0.4, -1.1])
    gp, gx = N.param_vjp(p, x[None], ct[None], return_input=True)
    np.testing.assert_allclose(gx[0], ct @ J, rtol=1e-12, atol=1e-14)
    theta = p.flat()
    fdp = central_fd(lambda t: ct @ N.forward(p.with_flat(t), x), theta)
    np.testing.assert_allclose(gp, fdp, rtol=1e-5, atol=1e-8)


def test_monotone_sigmoid_net():
    """Nonnegative weights throughout give a monotone increasing scalar net."""
    p = N.init_params(N.MLPConfig.simple((1, 8, 8, 1), "relu", "sigmoid"), 3)
    p = p.with_flat(np.abs(p.flat()))
    y = N.forward(p, np.linspace(-3, 3, 200)[:, None])[:, 0]
    assert np.all(np.diff(y) >= 0)


def test_params_checkpoint_round_trip(tmp_path):
    p = N.init_params(N.MLPConfig.simple((2, 5, 1), "relu", "softplus"), 1)
    N.save_params(p, tmp_path / "p.json")
    q = N.load_params(tmp_path / "p.json")
    assert np.array_equal(p.flat(), q.flat()) and q.config == p.config


def test_truncated_params_file(tmp_path):
    p = N.init_params(N.MLPConfig.simple((2, 5, 1)), 1)
    N.save_params(p, tmp_path / "p.json")
    text = (tmp_path / "p.json").read_text()
    (tmp_path / "p.json").write_text(text[: len(text) // 2])
    with pytest.raises(CheckpointError):
        N.load_params(tmp_path / "p.json")
