import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from neurofem import constitutive as cm
from neurofem import neural
from neurofem.errors import InvalidArgumentError, UnsupportedOperationError


def fd_tangent(model, eps, h=1e-9):
    eps = np.ravel(eps)
    cols = []
    for i in range(eps.size):
        e = np.zeros_like(eps)
        e[i] = h
        cols.append((model.stress((eps + e)[None])[0] - model.stress((eps - e)[None])[0]) / (2 * h))
    return np.stack(cols, axis=1)


def stress_tensor(s):
    """Voigt stress (shear entries are tensor components) to 3x3."""
    return cm.voigt_to_tensor(s * np.array([1, 1, 1, 2, 2, 2]))[0]


def hooke_plane_strain(E, nu, eps):
    lam = E * nu / ((1 + nu) * (1 - 2 * nu))
    mu = E / (2 * (1 + nu))
    tr = eps[0] + eps[1]
    return np.array([lam * tr + 2 * mu * eps[0], lam * tr + 2 * mu * eps[1], mu * eps[2]])


def rotation(rng):
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    return q if np.linalg.det(q) > 0 else -q


def test_zero_strain():
    m = cm.GroundTruthSoftening()
    assert m.young_modulus(np.zeros((1, 3)))[0] == 1e9
    assert np.all(m.stress(np.zeros((1, 3))) == 0)


def test_softening_scalar_formula():
    m = cm.GroundTruthSoftening()
    eps = np.array([-0.002, 0.0, 0.0])
    assert np.isclose(m.young_modulus(eps[None])[0], 5e8, rtol=1e-14)
    np.testing.assert_allclose(m.stress(eps[None])[0], hooke_plane_strain(5e8, 0.3, eps), rtol=1e-13)


def test_lame_ground_truth():
    m = cm.GroundTruthLame()
    lam, mu, _, _ = m.moduli(np.array([[0.001, -0.003, 0.0]]))
    assert lam[0] == 2e9 and np.isclose(mu[0], 1e9 / (1 + 500 * 0.002))


def test_constant_neural_e():
    cfg = neural.MLPConfig.simple((1, 4, 1), "relu", "softplus")
    p = neural.unflatten(cfg, np.zeros(cfg.num_params))
    p.biases[-1][:] = 0.3
    m = cm.NeuralIsotropicE(p, features="trace")
    eps = np.array([[0.001, -0.002, 0.0005]])
    E = 1e9 * np.log1p(np.exp(0.3))
    assert np.isclose(m.young_modulus(eps)[0], E)
    np.testing.assert_allclose(m.stress(eps)[0], hooke_plane_strain(E, 0.3, eps[0]), rtol=1e-12)


def test_linear_limit_constant_tangent(rng):
    m = cm.GroundTruthSoftening(c2=0.0)
    C0 = m.stress_tangent(np.zeros((1, 3)))[0]
    for eps in 1e-3 * rng.standard_normal((5, 3)):
        np.testing.assert_array_equal(m.stress_tangent(eps[None])[0], C0)


def test_softening_tangent_fd():
    m = cm.GroundTruthSoftening()
    eps = np.array([-0.002, 0.0, 0.0])
    C = m.stress_tangent(eps[None])[0]
    fd = fd_tangent(m, eps[None])
    assert np.abs(C - fd).max() / np.abs(fd).max() <= 1e-6


@pytest.mark.parametrize("features", ["invariants", "voigt", "trace"])
@pytest.mark.parametrize("dim", [2, 3])
def test_neural_lame_tangent_fd(features, dim, rng):
    n = cm.voigt_size(dim)
    nf = {"invariants": 2, "voigt": n, "trace": 1}[features]
    m = cm.neural_lame((nf, 10, 10, 1), seed=3, features=features, output_gain=1.0)
    eps = 2e-3 * rng.standard_normal((1, n))
    C = m.stress_tangent(eps)[0]
    fd = fd_tangent(m, eps)
    assert np.abs(C - fd).max() / np.abs(fd).max() <= 1e-5


def _param_fd(model, eps, ct, idx, h=1e-6):
    theta = model.params_flat()
    out = []
    for i in idx:
        e = np.zeros_like(theta)
        e[i] = h
        sp = np.sum(ct * model.with_params(theta + e).stress(eps))
        sm = np.sum(ct * model.with_params(theta - e).stress(eps))
        out.append((sp - sm) / (2 * h))
    return np.array(out)


def test_stress_param_vjp_zero_cotangent(rng):
    m = cm.neural_isotropic_e((2, 6, 1), seed=0)
    assert np.all(m.stress_param_vjp(1e-3 * rng.standard_normal((4, 3)), np.zeros((4, 3))) == 0)


@pytest.mark.parametrize("builder", [cm.neural_isotropic_e, cm.neural_lame])
def test_stress_param_vjp_fd(builder, rng):
    m = builder((2, 8, 8, 1), seed=1, output_gain=1.0)
    eps = 2e-3 * rng.standard_normal((3, 3))
    ct = rng.standard_normal((3, 3)) * 1e-9
    g = m.stress_param_vjp(eps, ct)
    idx = rng.choice(m.num_params, 30, replace=False)
    fd = _param_fd(m, eps, ct, idx)
    scale = np.abs(fd).max()
    assert np.abs(g[idx] - fd).max() <= 1e-5 * scale


def test_ground_truth_has_no_param_vjp():
    with pytest.raises(UnsupportedOperationError):
        cm.GroundTruthSoftening().stress_param_vjp(np.zeros((1, 3)), np.zeros((1, 3)))
    with pytest.raises(UnsupportedOperationError):
        cm.GroundTruthConductivity().conductivity_param_vjp(np.array([300.0]), np.array([1.0]))


def test_conductivity_reference_point():
    k, _ = cm.GroundTruthConductivity().conductivity(np.array([298.0]))
    assert k[0] == 2.0


def test_conductivity_formula():
    k, _ = cm.GroundTruthConductivity().conductivity(np.array([596.0]))
    assert np.isclose(k[0], 2.0 * 2.0**-0.62, rtol=1e-14)
    assert abs(k[0] - 1.302) < 1e-3


def test_conductivity_derivative_fd():
    g = cm.GroundTruthConductivity()
    T = np.array([310.0, 450.0])
    _, dk = g.conductivity(T)
    fd = (g.conductivity(T + 1e-4)[0] - g.conductivity(T - 1e-4)[0]) / 2e-4
    np.testing.assert_allclose(dk, fd, rtol=1e-7)


def test_zero_weight_neural_conductivity():
    cfg = neural.MLPConfig.simple((1, 4, 1), "relu", "sigmoid")
    p = neural.unflatten(cfg, np.zeros(cfg.num_params))
    p.biases[-1][:] = -0.4
    m = cm.NeuralConductivity(p)
    k, dk = m.conductivity(np.array([280.0, 300.0, 700.0]))
    expected = 0.1 + 3.9 / (1 + np.exp(0.4))
    np.testing.assert_allclose(k, expected)
    assert np.all(k > 0) and np.all(dk == 0)


def test_neural_conductivity_vjp_fd(rng):
    m = cm.neural_conductivity((1, 8, 1), seed=2, output_gain=1.0)
    T = np.array([300.0, 350.0, 420.0])
    ct = np.array([0.3, -1.0, 0.5])
    g = m.conductivity_param_vjp(T, ct)
    theta = m.params_flat()
    for i in range(m.num_params):
        e = np.zeros_like(theta)
        e[i] = 1e-6
        fd = ct @ (m.with_params(theta + e).conductivity(T)[0] - m.with_params(theta - e).conductivity(T)[0]) / 2e-6
        assert abs(g[i] - fd) <= 1e-6 * max(1.0, abs(fd))
    _, dk = m.conductivity(T)
    fd = (m.conductivity(T + 1e-4)[0] - m.conductivity(T - 1e-4)[0]) / 2e-4
    np.testing.assert_allclose(dk, fd, rtol=1e-5, atol=1e-10)


@given(st.floats(1e-5, 0.05), st.floats(1e-5, 0.05))
def test_ground_truth_e_decreases_with_trace(a, b):
    m = cm.GroundTruthSoftening()
    lo, hi = sorted([a, b])
    e = m.young_modulus(np.array([[-lo, 0, 0], [-hi, 0, 0], [hi, 0, 0]]))
    assert e[1] <= e[0] and e[2] == e[1]


@given(st.integers(0, 1000))
def test_frame_indifference_3d(seed):
    rng = np.random.default_rng(seed)
    Q = rotation(rng)
    eps = 1e-3 * rng.standard_normal((1, 6))
    rot = cm.tensor_to_voigt((Q @ cm.voigt_to_tensor(eps)[0] @ Q.T)[None], 3)
    models = [
        cm.GroundTruthSoftening(),
        cm.GroundTruthLame(),
        cm.neural_lame((2, 6, 1), seed=seed, features="invariants", output_gain=1.0),
        cm.neural_isotropic_e((1, 6, 1), seed=seed, features="trace", output_gain=1.0),
    ]
    for m in models:
        S = stress_tensor(m.stress(eps)[0])
        np.testing.assert_allclose(stress_tensor(m.stress(rot)[0]), Q @ S @ Q.T, rtol=1e-9, atol=1e-9 * np.abs(S).max())


def test_invalid_parameters():
    with pytest.raises(InvalidArgumentError):
        cm.GroundTruthSoftening(nu=0.5)
    with pytest.raises(InvalidArgumentError):
        cm.GroundTruthConductivity(k_r=0.0)
    with pytest.raises(InvalidArgumentError):
        cm.strain_features(np.zeros((1, 3)), "bogus")


@pytest.mark.parametrize("model", [cm.neural_isotropic_e((1, 4, 1), features="trace", input_scale=250.0), cm.neural_lame((2, 4, 1)), cm.neural_conductivity((1, 4, 1))])
def test_model_dict_round_trip(model):
    r = cm.model_from_dict(cm.model_to_dict(model))
    assert type(r) is type(model)
    assert np.array_equal(r.params_flat(), model.params_flat())
