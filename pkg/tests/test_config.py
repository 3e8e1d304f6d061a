import pytest
import yaml

from patternspectra.config import RunConfig, dump_config, from_dict, load_config, save_config
from patternspectra.errors import ConfigError


def test_defaults_validate():
    cfg = RunConfig().validate()
    assert cfg.N == 16 and cfg.suite == "paper"


def test_yaml_round_trip(tmp_path):
    cfg = from_dict({"N": 8, "suite": "quick", "seed": {"kind": "plane_waves", "eps": 0.2},
                     "tolerances": {"newton_tol": 1e-9}})
    save_config(tmp_path / "c.yaml", cfg)
    back = load_config(tmp_path / "c.yaml")
    assert back == cfg
    assert back.digest() == cfg.digest()
    assert yaml.safe_load(dump_config(back))["seed"]["eps"] == 0.2


def test_digest_tracks_content():
    assert RunConfig().digest() != from_dict({"N": 8}).digest()


@pytest.mark.parametrize("data", [
    {"bogus": 1},
    {"seed": {"kind": "turing", "colour": 2}},
    {"tolerances": {"newton_tol": -1.0}},
    {"suite": "everything"},
    {"K": [[1.0, 0.0]]},
    {"K": "identity"},
    {"c": [0.0]},
    {"model": {"params": {}}},
])
def test_invalid_configs_rejected(data):
    with pytest.raises(ConfigError):
        from_dict(data)


def test_missing_or_malformed_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("N: [1, 2\n")
    with pytest.raises(ConfigError):
        load_config(bad)
