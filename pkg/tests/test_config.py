import json

import pytest

from synthvision.config import ConfigError, PROFILES, print_config, resolve_config


def test_paper_profile_carries_reference_hyperparameters():
    config = resolve_config(profile="paper")
    ft = config["finetune"]
    assert (ft["unet_steps"], ft["unet_lr"]) == (2000, 2e-6)
    assert (ft["text_steps"], ft["text_lr"]) == (350, 4e-7)
    assert ft["resolution"] == 512
    assert ft["checkpoint_every"] == 500
    vit = config["vit"]
    assert (vit["image_size"], vit["patch_size"]) == (224, 16)
    train = config["train"]
    assert (train["batch_size"], train["epochs"], train["learning_rate"]) == (64, 150, 1e-4)
    assert train["optimizer"] == "rmsprop"
    split = config["split"]
    assert (split["train_pos"], split["train_neg"]) == (500, 500)
    assert (split["val_pos"], split["val_neg"]) == (50, 50)
    assert (split["test_pos"], split["test_neg"]) == (70, 70)
    assert config["curation"]["target_accepted"] == 500
    assert config["campaign"]["min_variants"] == 30
    assert config["campaign"]["max_variants"] == 50
    assert sum(t["n_variants"] for t in config["campaign"]["templates"]) == 630


def test_desk_profile_relaxes_variant_bounds():
    config = resolve_config(profile="desk")
    assert config["campaign"]["min_variants"] == 1
    assert config["toy"]["enabled"] is True


def test_file_overrides_profile(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({
        "profile": "desk", "seed": 5,
        "finetune": {"unet_steps": 7},
    }))
    config = resolve_config(path)
    assert config["seed"] == 5
    assert config["finetune"]["unet_steps"] == 7
    # untouched siblings keep profile defaults
    assert config["finetune"]["checkpoint_every"] == PROFILES["desk"]["finetune"]["checkpoint_every"]


def test_cli_seed_and_profile_win(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"profile": "desk", "seed": 5}))
    config = resolve_config(path, profile="paper", seed=9)
    assert config["profile"] == "paper"
    assert config["seed"] == 9
    assert config["finetune"]["unet_steps"] == 2000


def test_env_var_overrides_data_root(tmp_path, monkeypatch):
    monkeypatch.setenv("SYNTHVISION_DATA_ROOT", "/custom/root")
    config = resolve_config(profile="desk")
    assert config["data_root"] == "/custom/root"


def test_missing_config_file_errors():
    with pytest.raises(ConfigError, match="not found"):
        resolve_config("/does/not/exist.json")


def test_invalid_json_errors(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{nope")
    with pytest.raises(ConfigError, match="invalid JSON"):
        resolve_config(path)


def test_unknown_profile_errors():
    with pytest.raises(ConfigError, match="profile"):
        resolve_config(profile="galaxy")


def test_negative_seed_rejected(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"seed": -1}))
    with pytest.raises(ConfigError, match="seed"):
        resolve_config(path)


def test_print_config_round_trips():
    config = resolve_config(profile="desk")
    assert json.loads(print_config(config)) == config
