"""Pipeline configuration: profiles, file loading, and overrides.

A config file is JSON. It names a profile (paper or desk) whose defaults
are merged underneath the file's own values field by field; command-line
--profile/--seed/--overwrite win over both. SYNTHVISION_DATA_ROOT, when
set, overrides data_root. The fully resolved config is what every stage
consumes and what --print-config emits.
"""

from __future__ import annotations

import copy
import json
import os
from pathlib import Path


class ConfigError(Exception):
    pass


def _paper_templates() -> list[dict]:
    # illustrative prompt texts; the real campaign wording is operator-supplied
    descriptions = [
        "many early stage grey colored small nodules around the mid region",
        "a dense cluster of raised nodules on the upper left area",
        "scattered flat nodules with irregular borders near the center",
        "a single large cauliflower textured nodule at the lower edge",
        "multiple pink raised nodules spread across the surface",
        "tiny grouped papules forming an arc near the margin",
        "two merging nodules with rough texture in the middle",
        "a broad patch of confluent nodules covering one side",
        "several dome shaped growths of varying size near the top",
        "an isolated pale nodule with a darker rim at the center",
        "a line of small firm nodules following a skin fold",
        "large verrucous growths clustered tightly together",
        "faint early nodules barely raised above the surface",
        "mixed small and medium nodules distributed evenly",
        "one prominent lobulated growth beside smaller satellites",
        "clustered hyperpigmented nodules along the lower border",
        "a ring of small nodules surrounding a clear area",
        "dense micro nodules giving a granular appearance",
    ]
    return [
        {"prompt_id": f"prompt-{i:02d}", "text": f"sks patch, {text}", "n_variants": 35}
        for i, text in enumerate(descriptions)
    ]


def _desk_templates() -> list[dict]:
    texts = [
        "a tight cluster of 3 bright nodules near the center of a sks patch",
        "a loose cluster of 2 bright nodules toward the edge of a sks patch",
        "a vivid cluster of 3 bright nodules across the middle of a sks patch",
        "a small cluster of 1 bright nodules in one corner of a sks patch",
    ]
    return [
        {"prompt_id": f"prompt-{i:02d}", "text": t, "n_variants": 20}
        for i, t in enumerate(texts)
    ]


PROFILES: dict[str, dict] = {
    "paper": {
        "profile": "paper",
        "data_root": "data",
        "run_dir": "runs/paper",
        "seed": 0,
        "identifier_token": "sks",
        "class_prompt": "a patch with nodules",
        "class_names": {"positive": "positive", "negative": "negative"},
        "instance_dir": "guide",
        "initial_manifest": None,
        "toy": {"enabled": False, "guide_count": 10, "real_pos": 0, "real_neg": 0,
                "real_size": 224, "guide_size": 512},
        "diffusion": {"kind": "cosine", "T": 1000, "image_size": 512, "channels": 3,
                      "hidden": [64, 128, 256], "emb_dim": 128, "cond_dim": 64},
        "finetune": {"unet_steps": 2000, "unet_lr": 2e-6, "text_steps": 350,
                     "text_lr": 4e-7, "resolution": 512, "checkpoint_every": 500,
                     "prior_weight": 1.0, "prior_set_size": 100, "batch_size": 1,
                     "optimizer": "sgd"},
        "superres": {"enabled": False, "scale": 2, "hidden": 32, "steps": 2000,
                     "lr": 1e-3},
        "campaign": {"base_seed": 10000, "output_dir": "synthetic",
                     "min_variants": 30, "max_variants": 50,
                     "templates": _paper_templates()},
        "curation": {"target_accepted": 500, "port": 8008, "reviewer": "",
                     "auto": {"enabled": False, "reject_fraction": 130 / 630}},
        "split": {"train_pos": 500, "train_neg": 500, "val_pos": 50, "val_neg": 50,
                  "test_pos": 70, "test_neg": 70},
        "vit": {"image_size": 224, "patch_size": 16, "embed_dim": 768, "depth": 12,
                "heads": 12, "mlp_ratio": 4.0, "attention_dropout_rate": 0.1,
                "channels": 3},
        "train": {"batch_size": 64, "epochs": 150, "learning_rate": 1e-4,
                  "optimizer": "rmsprop", "patience": None},
        "evaluation": {"output_dir": "report"},
    },
    "desk": {
        "profile": "desk",
        "data_root": "data",
        "run_dir": "runs/desk",
        "seed": 0,
        "identifier_token": "sks",
        "class_prompt": "a patch with bright nodules",
        "class_names": {"positive": "positive", "negative": "negative"},
        "instance_dir": "guide",
        "initial_manifest": None,
        "toy": {"enabled": True, "guide_count": 10, "real_pos": 40, "real_neg": 80,
                "real_size": 64, "guide_size": 64},
        "diffusion": {"kind": "cosine", "T": 100, "image_size": 32, "channels": 3,
                      "hidden": [32, 64], "emb_dim": 32, "cond_dim": 16},
        "finetune": {"unet_steps": 3500, "unet_lr": 2e-3, "text_steps": 300,
                     "text_lr": 2e-3, "resolution": 32, "checkpoint_every": 1000,
                     "prior_weight": 0.2, "prior_set_size": 20, "batch_size": 8,
                     "optimizer": "adam"},
        "superres": {"enabled": True, "scale": 2, "hidden": 32, "steps": 1000,
                     "lr": 2e-3, "noise_sigmas": [0.0, 0.1, 0.2, 0.3]},
        "campaign": {"base_seed": 10000, "output_dir": "synthetic",
                     "min_variants": 1, "max_variants": 50,
                     "templates": _desk_templates()},
        "curation": {"target_accepted": 40, "port": 8008, "reviewer": "",
                     "auto": {"enabled": True, "reject_fraction": 130 / 630}},
        "split": {"train_pos": 40, "train_neg": 40, "val_pos": 10, "val_neg": 10,
                  "test_pos": 20, "test_neg": 20},
        "vit": {"image_size": 64, "patch_size": 8, "embed_dim": 64, "depth": 2,
                "heads": 4, "mlp_ratio": 4.0, "attention_dropout_rate": 0.1,
                "channels": 3},
        "train": {"batch_size": 16, "epochs": 50, "learning_rate": 1e-4,
                  "optimizer": "rmsprop", "patience": None},
        "evaluation": {"output_dir": "report"},
    },
}


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def resolve_config(
    config_path: str | Path | None = None,
    profile: str | None = None,
    seed: int | None = None,
    overrides: dict | None = None,
) -> dict:
    """Merge profile defaults, the config file, and CLI overrides."""
    file_values: dict = {}
    if config_path is not None:
        path = Path(config_path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            file_values = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON in {path}: {e}") from None
        if not isinstance(file_values, dict):
            raise ConfigError(f"config root must be a JSON object: {path}")

    profile_name = profile or file_values.get("profile", "desk")
    if profile_name not in PROFILES:
        raise ConfigError(f"unknown profile {profile_name!r}; expected paper or desk")
    resolved = _deep_merge(PROFILES[profile_name], file_values)
    resolved["profile"] = profile_name
    if overrides:
        resolved = _deep_merge(resolved, overrides)
    if seed is not None:
        resolved["seed"] = seed
    env_root = os.environ.get("SYNTHVISION_DATA_ROOT")
    if env_root:
        resolved["data_root"] = env_root
    _validate(resolved)
    return resolved


def _validate(config: dict) -> None:
    for key in ("data_root", "run_dir"):
        if not config.get(key):
            raise ConfigError(f"config field {key!r} must be set")
    seed = config.get("seed")
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a non-negative integer")
    split = config.get("split", {})
    for key in ("train_pos", "train_neg", "val_pos", "val_neg", "test_pos", "test_neg"):
        if key not in split or int(split[key]) < 0:
            raise ConfigError(f"split.{key} must be a non-negative integer")
    if config["vit"]["image_size"] % config["vit"]["patch_size"]:
        raise ConfigError("vit.image_size must be divisible by vit.patch_size")


def print_config(config: dict) -> str:
    return json.dumps(config, indent=2, sort_keys=True)
