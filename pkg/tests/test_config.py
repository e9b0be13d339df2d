import json

import pytest

from lbconfine.config import ConfigError, config_from_dict, parse_config


def write(tmp_path, text):
    p = tmp_path / "run.toml"
    p.write_text(text)
    return str(p)


def test_minimal_config_defaults(tmp_path):
    cfg = parse_config(write(tmp_path, '[potential]\npreset = "harmonic"\n'))
    assert cfg.n == 2
    assert cfg["collision"]["gamma"] == 0.0
    assert cfg["grid"]["spatial"] == 32 and cfg["grid"]["velocity"] == 24
    assert cfg["time"]["dt"] == 0.01 and cfg["time"]["T"] == 10.0
    assert cfg["simulation"]["center"] == [0.15, -0.1]


def test_negative_dt_names_key(tmp_path):
    with pytest.raises(ConfigError, match=r"time\.dt"):
        parse_config(write(tmp_path, '[potential]\npreset = "phi1"\n[time]\ndt = -1\n'))


def test_unknown_key_suggestion(tmp_path):
    with pytest.raises(ConfigError, match="did you mean `potential`"):
        parse_config(write(tmp_path, '[potental]\npreset = "phi1"\n'))
    with pytest.raises(ConfigError, match=r"grid\.spatial"):
        config_from_dict({"potential": {"preset": "phi1"}, "grid": {"spatail": 8}})


def test_type_mismatch(tmp_path):
    with pytest.raises(ConfigError, match=r"grid\.spatial.*int"):
        config_from_dict({"potential": {"preset": "phi1"}, "grid": {"spatial": 3.5}})
    with pytest.raises(ConfigError, match=r"collision\.enabled"):
        config_from_dict({"potential": {"preset": "phi1"}, "collision": {"enabled": 1}})
    # integers are accepted where floats are expected
    assert config_from_dict({"potential": {"preset": "phi1"}, "time": {"T": 2}})["time"]["T"] == 2.0


def test_constraints():
    with pytest.raises(ConfigError, match=r"grid\.velocity"):
        config_from_dict({"potential": {"preset": "phi1"}, "grid": {"velocity": 1}})
    with pytest.raises(ConfigError, match=r"interp_order"):
        config_from_dict({"potential": {"preset": "phi1"}, "grid": {"interp_order": 2}})
    with pytest.raises(ConfigError, match="potential"):
        config_from_dict({"potential": {"preset": "phi9"}})
    with pytest.raises(ConfigError, match="potential"):
        config_from_dict({"potential": {"form": "radial", "beta": -1.0, "alpha": 1.0}})


def test_polynomial_form_and_echo(tmp_path):
    cfg = parse_config(write(tmp_path, '[potential]\nform = "polynomial"\n'
                                       'terms = [[[4, 0], 1.0], [[0, 4], 1.0]]\n'))
    phi = cfg.build_potential()
    assert phi.n == 2
    path = cfg.echo(str(tmp_path / "out"))
    assert json.load(open(path))["potential"]["form"] == "polynomial"


def test_bad_toml(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(write(tmp_path, "[potential\n"))
    with pytest.raises(ConfigError, match="not found"):
        parse_config(str(tmp_path / "missing.toml"))
