import pytest

from sparse_ppf.config import ConfigError, ExperimentConfig, config_from_dict, load_config


def test_defaults_are_valid():
    cfg = ExperimentConfig().validate()
    assert cfg.filters == ["ppf1", "ppf0", "ssppf", "sdppf"] and cfg.ensemble == 200


def test_full_file_parses(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text("""
mode = "study2"
seed = 3
filters = ["ppf1", "ssppf"]
cv_grid = [0.5, 1]

[scenario]
K = 2000
sigma_sq = 1

[filter.ppf1]
beta = 0.99
R = 2

[gof]
jitter = false
""")
    cfg = load_config(p)
    assert cfg.mode == "study2" and cfg.seed == 3 and cfg.cv_grid == [0.5, 1]
    assert cfg.scenario == {"K": 2000, "sigma_sq": 1.0}
    assert isinstance(cfg.scenario["sigma_sq"], float)
    assert cfg.filter_params == {"ppf1": {"beta": 0.99, "R": 2}}
    assert cfg.gof == {"jitter": False}


@pytest.mark.parametrize("data,match", [
    ({"mdoe": "study1"}, "unknown key"),
    ({"mode": "study3"}, "mode"),
    ({"filters": ["ppf1", "kalman"]}, "unknown filter"),
    ({"filters": ["ppf1", "ppf1"]}, "more than once"),
    ({"filters": []}, "at least one"),
    ({"ensemble": 0}, "ensemble"),
    ({"cv_grid": []}, "empty"),
    ({"cv_grid": [-1.0]}, "non-negative"),
    ({"seed": 1.5}, "integer"),
    ({"seed": True}, "integer"),
    ({"scenario": {"M": 10, "N": 3}}, "unknown key"),
    ({"scenario": {"sigma_sq": "big"}}, "number"),
    ({"filter": {"ppf1": {"gama": 1.0}}}, "unknown key"),
    ({"filter": {"kalman": {}}}, "unknown filter"),
    ({"filter": {"beta": 0.9}}, "one table per filter"),
    ({"gof": {"jitter": 1}}, "boolean"),
    ({"strf": {"atoms": 3}}, "array"),
    ({"mode": "custom", "custom": {"M": 5}}, "custom mode"),
    ({"workers": 0}, "workers"),
])
def test_invalid_configs_are_rejected(data, match):
    with pytest.raises(ConfigError, match=match):
        config_from_dict(data)


def test_toml_syntax_error(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("mode = \n")
    with pytest.raises(ConfigError):
        load_config(p)
