import json

import pytest

from preimage_opt.bench import SuiteConfig
from preimage_opt.config import ConfigError, builtin, builtin_config, from_dict, load, to_dict
from preimage_opt.engine import CampaignConfig


@pytest.mark.parametrize("name,cls", [("reference", CampaignConfig), ("suite", SuiteConfig)])
def test_builtin_round_trip(name, cls):
    cfg = builtin_config(cls, name)
    assert from_dict(cls, json.loads(json.dumps(to_dict(cfg)))) == cfg


def test_reference_values():
    cfg = builtin_config(CampaignConfig, "reference")
    assert (cfg.sampler.n, cfg.budget, cfg.n_init, cfg.arm) == (10_000, 165, 40, "full")


def test_missing_fields_take_defaults():
    assert from_dict(CampaignConfig, {}) == CampaignConfig()
    assert from_dict(CampaignConfig, {"train": {"epochs": 7}}).train.epochs == 7


@pytest.mark.parametrize("data,fragment", [
    ({"budgett": 3}, "unknown config key budgett"),
    ({"train": {"epoch": 3}}, "unknown config key train.epoch"),
    ({"budget": "165"}, "budget: expected an integer"),
    ({"budget": True}, "budget: expected an integer"),
    ({"train": {"warm_start": 1}}, "train.warm_start: expected true/false"),
    ({"sampler": 5}, "sampler: expected an object"),
    ({"budget": 0}, "budget must be >= 1"),
])
def test_errors_name_the_field(data, fragment):
    with pytest.raises(ConfigError, match=fragment):
        from_dict(CampaignConfig, data)


def test_ints_accepted_for_floats_and_lists_for_tuples():
    cfg = from_dict(CampaignConfig, {"acquisition": {"lam": 1}})
    assert cfg.acquisition.lam == 1.0 and isinstance(cfg.acquisition.lam, float)
    suite = from_dict(SuiteConfig, {"seeds": [3, 4], "arms": ["ss", "full"]})
    assert suite.seeds == (3, 4) and suite.arms == ("ss", "full")
    with pytest.raises(ConfigError):
        from_dict(SuiteConfig, {"seeds": [1, "2"]})


def test_load_file_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load(CampaignConfig, bad)
    good = tmp_path / "good.json"
    good.write_text(json.dumps({"seed": 4}))
    assert load(CampaignConfig, good).seed == 4
    with pytest.raises(FileNotFoundError):
        builtin("nope")
