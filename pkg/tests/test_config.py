import json
import math

import pytest

from curl_codec.config import PROFILES, Config, load_config


# Table values from the default parameter table: both profiles share L, S, P_r and R.
TABLE = {
    "indoor": dict(channels=64, row_rate=2, col_rate=2, cliff_h=0.1, cliff_v=0.1, cliff_d=0.1414,
                   patch_size=4, r_row=1.0, r_col=1.0),
    "outdoor": dict(channels=64, row_rate=2, col_rate=2, cliff_h=2.0, cliff_v=0.2, cliff_d=2.0,
                    patch_size=4, r_row=1.0, r_col=1.0),
}


@pytest.mark.parametrize("name", ["indoor", "outdoor"])
def test_profiles_reproduce_default_table(name):
    cfg = load_config(name)
    for field, value in TABLE[name].items():
        assert getattr(cfg, field) == value, field
    lay_rows = cfg.patch_size * cfg.row_rate
    assert lay_rows == 8
    assert cfg.error_threshold == {"indoor": 0.01, "outdoor": 0.05}[name]


def test_precedence(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"profile": "indoor", "cliff_h": 0.3, "patch_size": 6}))
    cfg = load_config(path=path)
    assert cfg.profile == "indoor" and cfg.cliff_h == 0.3 and cfg.cliff_v == 0.1
    cfg = load_config("outdoor", path, {"patch_size": 8, "k": None})
    assert cfg.profile == "outdoor" and cfg.cliff_v == 0.2
    assert cfg.cliff_h == 0.3 and cfg.patch_size == 8 and cfg.k == 9.0


def test_unknown_keys_and_profiles(tmp_path):
    with pytest.raises(ValueError):
        load_config(overrides={"bogus": 1})
    with pytest.raises(ValueError):
        load_config("mars")
    path = tmp_path / "c.json"
    path.write_text("[1, 2]")
    with pytest.raises(ValueError):
        load_config(path=path)


def test_derived_objects():
    cfg = load_config("indoor", overrides={"vertical_fov_deg": 30.0, "horizontal_bins": 512})
    s = cfg.sensor()
    assert s.vertical_fov == pytest.approx(math.radians(30))
    assert s.shape == (128, 1024)
    enc = cfg.encoder()
    assert enc.thresholds.astuple() == (0.1, 0.1, 0.1414)
    assert enc.refinement.error_threshold == 0.01
    assert cfg.request().r_row == 1.0
    assert Config(**cfg.to_dict()) == cfg
    assert set(PROFILES) == {"indoor", "outdoor"}
