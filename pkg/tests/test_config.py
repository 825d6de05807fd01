import json

import pytest

from exoshape.harness import ConfigError, RunConfig, load_config
from exoshape.harness.config import parse_config


def test_defaults():
    cfg = load_config(None)
    assert cfg == RunConfig()
    assert cfg.shaper_config().m_he == pytest.approx(0.14)
    assert cfg.forest.trees == 50


def test_round_trip(tmp_path):
    cfg = parse_config({"seed": 7, "shaper": {"lambda1": 1.5}, "subject": {"emg_noise": 0.1},
                        "analyze": {"lambda_grid": [[2, 2], [1, 1]]}})
    p = tmp_path / "c.json"
    p.write_text(cfg.dumps(), encoding="utf-8")
    again = load_config(str(p))
    assert again.dumps() == cfg.dumps()
    assert again.subject_params() == cfg.subject_params()
    assert (again.seed, again.shaper, again.analyze) == (cfg.seed, cfg.shaper, cfg.analyze)


@pytest.mark.parametrize("raw,path", [
    ({"bogus": 1}, "bogus"),
    ({"plant": {"mass": 1}}, "plant.mass"),
    ({"subject": {"k_grp": 1}}, "subject.k_grp"),
    ({"forest": {"trees": 2.5}}, "forest.trees"),
    ({"forest": {"trees": "many"}}, "forest.trees"),
    ({"shaper": {"alpha_ss": True}}, "shaper.alpha_ss"),
    ({"analyze": {"lambda_grid": [[2]]}}, "analyze.lambda_grid[0]"),
    ({"protocol": {"grips_lb": 5}}, "protocol.grips_lb"),
    ({"plant": {"m_e": 0}}, "plant.m_e"),
    ({"analyze": {"robust_range": [90, 5]}}, "analyze.robust_range"),
    ({"shaper": {"lambda1": 0.5}}, "shaper"),
    ({"subject": {"k_min": 50}}, "subject"),
    ([], "config"),
])
def test_field_level_errors(raw, path):
    with pytest.raises(ConfigError) as ei:
        parse_config(raw)
    assert str(ei.value).startswith(path)


def test_bad_files(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(str(tmp_path / "missing.json"))
    p = tmp_path / "bad.json"
    p.write_text("{nope", encoding="utf-8")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(str(p))


def test_with_seed():
    cfg = RunConfig().with_seed(5)
    assert cfg.seed == 5 and cfg.plant == RunConfig().plant
    assert RunConfig().with_seed(None) == RunConfig()


def test_serialized_form_is_complete():
    d = json.loads(RunConfig().dumps())
    assert set(d) == {"seed", "plant", "subject", "shaper", "forest", "protocol", "analyze", "scenario"}
    assert "k_grip" in d["subject"] and "m_h" not in d["subject"]
