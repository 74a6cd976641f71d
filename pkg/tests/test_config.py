import json

import numpy as np
import pytest

from hcexpand.config import DEFAULT_JMAX, DEFAULT_TOL, make_function, parse_config, parse_config_dict
from hcexpand.errors import ConfigError

GEOM = {"outer": {"type": "rectangle", "bounds": [0, 0, 1, 1]},
        "inclusions": [{"type": "disk", "center": [0.5, 0.5], "radius": 0.2}], "target_h": 0.0625}


def test_minimal_config_defaults(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"geometry": GEOM}))
    cfg = parse_config(p)
    assert cfg.tol == DEFAULT_TOL == 1e-8
    assert cfg.jmax == DEFAULT_JMAX == 25
    assert cfg.problem == "pressure" and cfg.mode == "stiff"
    assert cfg.geometry.inclusions[0].r == 0.2


@pytest.mark.parametrize(
    "cfg, pointer",
    [
        ({"geometry": GEOM, "contrasts": [0.5]}, "/contrasts/0"),
        ({"geometry": GEOM, "contrasts": [10, 1.0]}, "/contrasts/1"),
        ({"geometry": GEOM, "problem": "elastic", "mode": "soft", "contrasts": [2.0]}, "/contrasts/0"),
        ({"geometry": GEOM, "colour": "red"}, "/"),
        ({"geometry": {**GEOM, "extra": 1}}, "/geometry"),
        ({"geometry": GEOM, "jmax": "ten"}, "/jmax"),
        ({"geometry": GEOM, "nu": 0.5}, "/nu"),
        ({"geometry": {**GEOM, "outer": {"type": "disk", "center": [0, 0]}}}, "/geometry/outer"),
        ({"geometry": GEOM, "preset": "sixty"}, "/"),
        ({"problem": "pressure"}, "/"),
        ({"geometry": GEOM, "source": [1, 2]}, "/source"),
        ({"problem": "1d", "interval": {"a": 0, "b": 1, "p": 0.8, "q": 0.2}}, "/interval"),
    ],
)
def test_rejections_carry_pointer(cfg, pointer):
    with pytest.raises(ConfigError) as ei:
        parse_config_dict(cfg)
    assert ei.value.pointer == pointer
    assert str(ei.value).startswith(pointer)


def test_soft_mode_accepts_fractions():
    cfg = parse_config_dict({"geometry": GEOM, "problem": "elastic", "mode": "soft", "contrasts": [0.1, 0.01]})
    assert cfg.contrasts == (0.1, 0.01)


def test_missing_file_and_bad_json(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "nope.json")
    p = tmp_path / "bad.json"
    p.write_text("{")
    with pytest.raises(ConfigError):
        parse_config(p)


def test_function_catalogue():
    x = np.array([0.0, 1.0, 2.0])
    y = np.array([1.0, 2.0, 3.0])
    assert make_function(3) == 3.0
    assert make_function({"type": "constant", "value": 2}) == 2.0
    np.testing.assert_allclose(make_function("x1+x2^2")(x, y), x + y**2)
    np.testing.assert_allclose(make_function({"type": "quadratic"})(x, y), x + y**2)
    np.testing.assert_allclose(make_function({"type": "linear_x1"})(x, y), x)
    poly = make_function({"type": "polynomial", "coefficients": [[2, 0, 1.5], [0, 1, -1], [0, 0, 4]]})
    np.testing.assert_allclose(poly(x, y), 1.5 * x**2 - y + 4)


def test_vector_data_for_elasticity():
    cfg = parse_config_dict({"geometry": GEOM, "problem": "elastic", "source": [0, -1], "boundary": ["zero", "x1"]})
    fx, fy = cfg.source(np.zeros(2), np.zeros(2))
    np.testing.assert_allclose(fy, -1)
    gx, gy = cfg.boundary(np.array([2.0]), np.array([0.0]))
    assert gx[0] == 0 and gy[0] == 2


def test_hash_is_stable_and_key_order_free():
    a = parse_config_dict({"geometry": GEOM, "contrasts": [10, 100]})
    b = parse_config_dict({"contrasts": [10, 100], "geometry": GEOM})
    c = parse_config_dict({"geometry": GEOM, "contrasts": [10]})
    assert a.hash == b.hash != c.hash
    assert a.geometry_hash() == c.geometry_hash()
