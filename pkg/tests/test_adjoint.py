import numpy as np
import pytest

from neurofem import adjoint as adj
from neurofem import verification as ver
from neurofem.errors import InvalidArgumentError, InvalidObservationError


def test_force_loss_zero_when_equal():
    spec = adj.LossSpec("relative_force", [100.0, -50.0])
    assert adj.loss(spec, [100.0, -50.0]) == 0.0


def test_force_loss_ten_percent():
    assert adj.loss(adj.LossSpec("relative_force", [100.0]), [90.0]) == pytest.approx(0.1, abs=1e-15)


def test_force_loss_gradient_sign_at_zero():
    _, g = adj.loss_and_output_grads(adj.LossSpec("relative_force", [2.0]), [2.0])
    assert g[0] == 0.0


def test_field_loss_matches_loop(rng):
    obs = [rng.standard_normal(12) for _ in range(3)]
    fem = [o + 0.1 * rng.standard_normal(12) for o in obs]
    ref = 0.0
    for f, o in zip(fem, obs):
        ref += np.sqrt(sum((a - b) ** 2 for a, b in zip(f, o))) / np.sqrt(sum(b * b for b in o))
    assert adj.loss(adj.LossSpec("relative_field", obs), fem) == pytest.approx(ref / 3, rel=1e-12)


def test_field_loss_output_gradient_fd(rng):
    obs = [rng.standard_normal(5)]
    fem = obs[0] + rng.standard_normal(5)
    spec = adj.LossSpec("relative_temperature", obs)
    _, g = adj.loss_and_output_grads(spec, [fem])
    h = 1e-7
    fd = [(adj.loss(spec, [fem + h * e]) - adj.loss(spec, [fem - h * e])) / (2 * h) for e in np.eye(5)]
    np.testing.assert_allclose(g[0], fd, rtol=1e-6)


def test_zero_observation_rejected():
    with pytest.raises(InvalidObservationError):
        adj.LossSpec("relative_force", [1.0, 0.0])
    with pytest.raises(InvalidObservationError):
        adj.LossSpec("relative_field", [np.zeros(4)])


def test_misaligned_outputs():
    with pytest.raises(InvalidArgumentError):
        adj.loss(adj.LossSpec("relative_force", [1.0, 2.0]), [1.0])
    with pytest.raises(InvalidArgumentError):
        adj.LossSpec("absolute", [1.0])


def test_relative_error_floor():
    rel = adj.relative_errors(np.array([0.0, 1.0]), np.array([0.0, 1.0 + 1e-8]))
    assert rel[0] == 0.0 and rel[1] < 1e-7


@pytest.mark.parametrize("name", ["uniaxial", "brazilian", "thermal"])
def test_adjoint_matches_central_differences(name):
    res = ver.gradient_check(name)
    assert res["ndof"] <= 200 and res["num_params"] <= 20
    assert res["max_rel_error"] <= 1e-4, res


def test_fd_check_detects_corrupted_gradient():
    res = ver.gradient_check("uniaxial", corrupt=1.001)
    assert not res["passed"]
    assert res["max_rel_error"] == pytest.approx(1e-3, rel=0.05)


@pytest.mark.parametrize("name", ["uniaxial", "brazilian"])
def test_gradient_vanishes_on_own_observations(name):
    exp, _ = ver.MINI_PIPELINES[name]()
    model = ver._perturbed(exp.initial_model(), 5)
    own, _ = exp.outputs(model, "train")
    rep = exp.gradient(model, "train", own)
    assert rep.loss <= 1e-12
    assert np.abs(rep.grad).max() <= 1e-8


def test_transient_gradient_report_layout():
    exp, obs = ver.mini_thermal()
    rep = exp.gradient(exp.initial_model(), "train", obs)
    assert len(rep.outputs) == len(obs)
    assert len(rep.states) == exp.problems["train"].num_steps + 1
    assert np.all(np.isfinite(rep.grad)) and rep.loss > 0


def test_fd_check_sample_subset():
    f = lambda th: float(np.sum(np.sin(th)))  # noqa: E731
    th = np.linspace(0, 1, 10)
    rep = adj.fd_check(f, th, np.cos(th), samples=4, seed=1)
    assert len(rep.indices) == 4 and rep.passed
    rep2 = adj.fd_check(f, th, np.cos(th), samples=[0, 9])
    assert rep2.indices == [0, 9] and rep2.max_rel_error < 1e-8
