import json

import pytest

from fracbellman.config import CHECKS, load_config, parse_config, shipped_configs
from fracbellman.errors import ConfigError

BASE = {"R": 2.0, "h": 0.0625, "T": 0.5, "sigma": 1.5, "lambda": 1.0, "Lambda": 2.0, "beta": 1.0,
        "family": [{"kernel": "const"}]}


def text(**over):
    d = dict(BASE, **over)
    return json.dumps(d, indent=2)


def test_minimal_defaults():
    cfg = parse_config(text())
    assert cfg.n == 1 and cfg.sweep == [1.5] and cfg.checks == [] and cfg.cfl_fraction == 0.9


def test_invalid_json_reports_line():
    with pytest.raises(ConfigError) as e:
        parse_config('{\n  "R": 2,\n  "h": ,\n}')
    assert e.value.line == 3


def test_lambda_above_Lambda_reports_line():
    t = text(**{"lambda": 3.0})
    with pytest.raises(ConfigError) as e:
        parse_config(t)
    line = t.splitlines().index('  "lambda": 3.0,') + 1
    assert e.value.line == line and str(e.value).startswith(f"line {line}:")


def test_unknown_key():
    with pytest.raises(ConfigError, match="unknown key 'radius'"):
        parse_config(text(radius=1))


@pytest.mark.parametrize("over", [{"h": 0.3}, {"n": 3}, {"sweep": []}, {"sigma": 2.0},
                                  {"beta": -1}, {"family": [{"kernel": "wiggly"}]},
                                  {"checks": ["nonsense"]}, {"params": {"zeta": 1}},
                                  {"cfl_fraction": 0}, {"T": float("nan")}])
def test_rejections(over):
    with pytest.raises(ConfigError):
        parse_config(text(**over))


def test_missing_required():
    d = dict(BASE)
    del d["h"]
    with pytest.raises(ConfigError, match="'h'"):
        parse_config(json.dumps(d))


def test_low_order_warns():
    with pytest.warns(UserWarning):
        parse_config(text(sigma=0.8))


def test_shipped_configs_validate():
    shipped = shipped_configs()
    assert {"fracheat_sweep", "fracheat_super", "spectral_torus", "zero", "odd_kernels"} <= set(shipped)
    for path in shipped.values():
        cfg = load_config(path)
        assert set(cfg.checks) <= set(CHECKS)


def test_unreadable_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
