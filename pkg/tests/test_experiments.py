import json

import pytest

from neurofem import experiments as ex
from neurofem.experiments import ConfigError


@pytest.mark.parametrize("kind", ex.KINDS)
def test_defaults_validate_and_round_trip(kind, tmp_path):
    cfg = ex.default_config(kind)
    ex.save_config(cfg, tmp_path / "c.json")
    back = ex.load_config(tmp_path / "c.json")
    assert back == cfg and back.hash() == cfg.hash()


@pytest.mark.parametrize("kind", ["uniaxial", "brazilian", "torsion", "thermal"])
def test_shipped_configs_match_defaults(kind):
    from pathlib import Path

    shipped = Path(__file__).resolve().parents[1] / "configs" / f"{kind}.json"
    assert ex.load_config(shipped) == ex.default_config(kind)


def test_split_sizes():
    assert (len(ex.default_config("uniaxial").train_indices), len(ex.default_config("uniaxial").test_indices)) == (6, 4)
    assert (len(ex.default_config("brazilian").train_indices), len(ex.default_config("brazilian").test_indices)) == (4, 3)


def test_hash_changes_with_content():
    cfg = ex.default_config("uniaxial")
    assert cfg.replace(seed=1).hash() != cfg.hash()
    assert cfg.replace(seed=0).hash() == cfg.hash()


def test_replace_nested():
    cfg = ex.default_config("brazilian").replace(**{"network.seed": 7, "optimizer.learning_rate": 0.5})
    assert cfg.network.seed == 7 and cfg.optimizer.learning_rate == 0.5


@pytest.mark.parametrize(
    "change,path",
    [
        ({"element_degree": 4}, "element_degree"),
        ({"noise_fraction": -0.1}, "noise_fraction"),
        ({"epochs": 0}, "epochs"),
        ({"optimizer.learning_rate": 0.0}, "optimizer.learning_rate"),
        ({"test_indices": [0]}, "test_indices"),
        ({"train_indices": [42]}, "train_indices[0]"),
        ({"train_indices": []}, "train_indices"),
        ({"loading.top_displacements_m": [1e-4, "x"] + [2e-4] * 8}, "loading.top_displacements_m[1]"),
        ({"kind": "shear"}, "kind"),
        ({"schema_version": 2}, "schema_version"),
    ],
)
def test_invalid_values_name_the_field(change, path):
    with pytest.raises(ConfigError) as info:
        ex.default_config("uniaxial").replace(**change)
    assert info.value.path == path


def test_missing_required_key():
    d = ex.default_config("thermal").to_dict()
    del d["material"]["beta"]
    with pytest.raises(ConfigError) as info:
        ex.config_from_dict(d)
    assert info.value.path == "material.beta"


def test_unknown_network_key():
    d = ex.default_config("uniaxial").to_dict()
    d["network"]["depth"] = 3
    with pytest.raises(ConfigError, match="network"):
        ex.config_from_dict(d)


def test_invalid_json_reports_line(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n "kind": "uniaxial",\n oops\n}')
    with pytest.raises(ConfigError, match="line 3"):
        ex.load_config(p)


def test_checkpoint_epoch_range():
    with pytest.raises(ConfigError):
        ex.default_config("uniaxial").replace(checkpoint_epochs=[500])


def test_build_experiment_kinds():
    for kind, cls in [("uniaxial", ex.UniaxialExperiment), ("brazilian", ex.BrazilianExperiment), ("thermal", ex.ThermalExperiment)]:
        assert isinstance(ex.build_experiment(ex.default_config(kind)), cls)


def test_to_json_is_sorted_and_parsable():
    text = ex.default_config("torsion").to_json()
    d = json.loads(text)
    assert list(d) == sorted(d)
