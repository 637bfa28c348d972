import numpy as np
import pytest

from neurofem import train as tr
from neurofem import verification as ver
from neurofem.constitutive import GroundTruthConductivity, GroundTruthSoftening
from neurofem.errors import CheckpointError, DivergenceError, InvalidArgumentError
from neurofem.experiments import OptimizerConfig, build_experiment, default_config


@pytest.fixture(scope="module")
def mini():
    exp, _ = ver.mini_uniaxial()
    cfg = exp.config.replace(noise_fraction=0.01)
    exp = build_experiment(cfg, exp.newton)
    return exp, tr.generate_dataset(cfg, exp)


@pytest.mark.parametrize("kind,n_train,n_test", [("uniaxial", 6, 4), ("brazilian", 4, 3), ("thermal", 12, 12)])
def test_dataset_record_counts(kind, n_train, n_test):
    cfg = default_config(kind)
    ds = tr.generate_dataset(cfg, build_experiment(cfg))
    assert len(ds.observations("train")) == n_train
    assert len(ds.observations("test")) == n_test
    assert len(ds) == n_train + n_test


def test_noise_statistics(rng):
    noisy = tr.add_noise([np.ones(20000)], 0.01, rng)[0]
    assert abs(noisy.mean() - 1.0) < 5 * 0.01 / np.sqrt(20000)
    assert noisy.std() == pytest.approx(0.01, rel=0.05)


def test_noise_offset_and_zero_fraction(rng):
    v = np.array([300.0, 310.0])
    assert np.array_equal(tr.add_noise([v], 0.0, rng, 300.0)[0], v)
    out = tr.add_noise([v], 0.5, rng, 300.0)[0]
    assert out[0] == 300.0 and out[1] != 310.0
    assert isinstance(tr.add_noise([2.0], 0.1, rng)[0], float)


def test_dataset_seeded_and_round_trip(tmp_path, mini):
    exp, ds = mini
    again = tr.generate_dataset(exp.config, exp)
    assert ds.observations("train") == again.observations("train")
    ds.save(tmp_path / "d.json")
    back = tr.Dataset.load(tmp_path / "d.json")
    assert back.observations("test") == ds.observations("test")
    assert back.clean_for_diagnostics("train") == ds.clean_for_diagnostics("train")


def test_noisy_observations_differ_from_clean(mini):
    _, ds = mini
    rel = [abs(o - c) / abs(c) for o, c in zip(ds.observations("train"), ds.clean_for_diagnostics("train"))]
    assert 0 < max(rel) < 0.05


def test_dataset_corrupt_file(tmp_path):
    p = tmp_path / "d.json"
    p.write_text('{"format_version": 1, "kind": ')
    with pytest.raises(CheckpointError):
        tr.Dataset.load(p)


def test_adam_first_step_is_lr_sign():
    st = tr.OptimizerState.create(OptimizerConfig(learning_rate=0.1), 3)
    st2, d = st.advance(np.array([2.0, -0.5, 1e-3]))
    np.testing.assert_allclose(d, [-0.1, 0.1, -0.1], rtol=1e-4)
    assert st2.step == 1 and st.step == 0


def test_adam_matches_reference_loop(rng):
    grads = rng.standard_normal((5, 4))
    st = tr.OptimizerState.create(OptimizerConfig(learning_rate=1e-2), 4)
    m = v = np.zeros(4)
    for t, g in enumerate(grads, 1):
        st, d = st.advance(g)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref = -1e-2 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
        np.testing.assert_allclose(d, ref, rtol=1e-12)


def test_adam_shape_mismatch():
    with pytest.raises(InvalidArgumentError):
        tr.OptimizerState.create(OptimizerConfig(), 3).advance(np.zeros(2))


def test_training_reduces_loss_and_evaluate_agrees(mini):
    exp, ds = mini
    res = tr.train(exp, ds, exp.initial_model(), 8, OptimizerConfig(learning_rate=1e-2))
    assert [r.epoch for r in res.history] == list(range(1, 9))
    assert res.history[-1].train_loss < res.initial_loss
    assert tr.evaluate(exp, res.model, ds, "train") == pytest.approx(res.history[-1].train_loss, abs=1e-12)
    assert np.isfinite(res.history[-1].test_loss)
    lines = res.history_csv().splitlines()
    assert lines[0] == "epoch,train_loss,test_loss" and len(lines) == 9


def test_evaluate_does_not_mutate(mini):
    exp, ds = mini
    model = exp.initial_model()
    before = model.params_flat().copy()
    a = tr.evaluate(exp, model, ds)
    assert tr.evaluate(exp, model, ds) == a
    assert np.array_equal(model.params_flat(), before)


def test_checkpoint_resume_bit_exact(tmp_path, mini):
    exp, ds = mini
    opt = OptimizerConfig(learning_rate=1e-2)
    full = tr.train(exp, ds, exp.initial_model(), 6, opt, evaluate_test=False)
    first = tr.train(exp, ds, exp.initial_model(), 3, opt, evaluate_test=False)
    tr.save_checkpoint(tmp_path / "c.json", first.model, first.state, 3, first.history, exp.config.hash())
    ck = tr.load_checkpoint(tmp_path / "c.json")
    assert ck.epoch == 3 and ck.config_hash == exp.config.hash()
    rest = tr.train(exp, ds, ck.model, 3, opt, state=ck.state, start_epoch=3, evaluate_test=False)
    resumed = [r.train_loss for r in ck.history + rest.history]
    assert resumed == [r.train_loss for r in full.history]
    assert np.array_equal(rest.model.params_flat(), full.model.params_flat())


def test_checkpoint_callback(mini):
    exp, ds = mini
    seen = []
    res = tr.train(exp, ds, exp.initial_model(), 4, checkpoint_epochs={2, 4}, on_checkpoint=lambda e, *_: seen.append(e), evaluate_test=False)
    assert seen == [2, 4] and sorted(res.checkpoints) == [2, 4]


def test_truncated_checkpoint(tmp_path, mini):
    exp, _ = mini
    p = tmp_path / "c.json"
    tr.save_checkpoint(p, exp.initial_model(), None)
    text = p.read_text()
    p.write_text(text[: len(text) // 2])
    with pytest.raises(CheckpointError):
        tr.load_checkpoint(p)
    p.write_text('{"format_version": 99}')
    with pytest.raises(CheckpointError):
        tr.load_checkpoint(p)


def test_divergence_guard(mini):
    exp, ds = mini
    with pytest.raises(DivergenceError) as info:
        tr.train(exp, ds, exp.initial_model(), 5, divergence_factor=1e-9, divergence_patience=2, evaluate_test=False)
    assert len(info.value.history) == 2


def test_zero_epochs_rejected(mini):
    exp, ds = mini
    with pytest.raises(InvalidArgumentError):
        tr.train(exp, ds, exp.initial_model(), 0)


def test_offline_elastic_fit_reduces_error():
    from neurofem.constitutive import neural_isotropic_e

    model = neural_isotropic_e((1, 8, 1), seed=0, output_gain=0.1, features="trace", input_scale=250.0)
    target = GroundTruthSoftening()
    tr_vals = np.linspace(-0.004, 0.0, 30)
    strains = np.zeros((30, 3))
    strains[:, 1] = tr_vals
    fitted = tr.fit_elastic_offline(model, target, strains, epochs=300, learning_rate=1e-2)
    err = lambda m: np.abs(m.moduli(strains)[1] - target.moduli(strains)[1]).max()  # noqa: E731
    assert err(fitted) < 0.5 * err(model)


def test_offline_conductivity_fit():
    from neurofem.constitutive import neural_conductivity

    model = neural_conductivity((1, 10, 1), seed=0, output_gain=1.0)
    T = np.linspace(300, 400, 40)
    target = GroundTruthConductivity()
    fitted = tr.fit_conductivity_offline(model, target, T, epochs=1500, learning_rate=1e-2)
    k_t = target.conductivity(T)[0]
    assert np.abs(fitted.conductivity(T)[0] / k_t - 1).max() < 0.05
