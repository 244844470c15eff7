"""Run configuration: one JSON document drives every pipeline stage.

Unknown keys anywhere in the document are rejected, so a typo cannot
silently fall back to a default.
"""
from __future__ import annotations

import copy
import json
from pathlib import Path

from .augment import CorpusSpec
from .errors import PCFrictionError
from .regressor.net import NetConfig
from .regressor.train import TrainConfig


class ConfigError(PCFrictionError):
    """Configuration is malformed or inconsistent."""


DEFAULTS = {
    "seed": 0,
    "threshold": [0.025, 0.25],
    "paths": {},
    "labcalc": {"reducer": "mean"},
    "corpus": {
        "samples_per_region": 10_000,
        "blend_fraction": 0.5,
        "size_range": [3, 100],
        "center_substitution": [],
        "split_fractions": [0.8, 0.1, 0.1],
    },
    "net": {
        "encoder_widths": [3, 64, 128, 1024],
        "head_widths": [1024, 512, 256, 1],
        "target_scale": 1e5,
        "batch_norm": True,
        "dtype": "float32",
    },
    "train": {
        "learning_rate": 1e-3,
        "decay": 0.97,
        "adam_betas": [0.9, 0.999],
        "adam_eps": 1e-8,
        "batch_size": 32,
        "max_epochs": 100,
        "convergence_tol": 1e-3,
        "patience": 5,
        "init_output_bias": True,
    },
    "tiling": {"cell_size": 1.0, "origin": None, "min_points": 3, "max_points": 100},
    "compound": {"max_segments": 20, "spatial_only": False, "profile_aware": False},
}

PATH_KEYS = {
    "runs", "calibration", "regions_n", "clouds", "corpus", "checkpoint", "train_log",
    "cloud", "grid", "counts", "sections", "table", "summary", "series", "pred_mask",
    "truth_mask", "out",
}


def _merge(base, override, where):
    for key, value in override.items():
        if key not in base:
            if where == "paths" and key in PATH_KEYS:
                base[key] = value
                continue
            raise ConfigError(f"unknown config key {where + '.' if where else ''}{key}")
        if isinstance(base[key], dict) and key != "paths":
            if not isinstance(value, dict):
                raise ConfigError(f"config key {key} must be an object")
            _merge(base[key], value, key)
        elif key == "paths":
            if not isinstance(value, dict):
                raise ConfigError("config key paths must be an object")
            _merge(base[key], value, "paths")
        else:
            base[key] = value


def resolve(overrides=None, path=None):
    """Defaults, then the JSON file at ``path``, then ``overrides``."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be an object")
        _merge(cfg, doc, "")
    if overrides:
        _merge(cfg, overrides, "")
    validate(cfg)
    return cfg


def validate(cfg):
    try:
        corpus_spec(cfg)
        net_config(cfg)
        train_config(cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from None
    t = cfg["tiling"]
    if not t["cell_size"] > 0:
        raise ConfigError("tiling.cell_size must be positive")
    if t["origin"] is not None and len(t["origin"]) != 2:
        raise ConfigError("tiling.origin must be [x, y] or null")
    if cfg["labcalc"]["reducer"] not in ("mean", "median"):
        raise ConfigError("labcalc.reducer must be mean or median")
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise ConfigError("seed must be a non-negative integer")


def corpus_spec(cfg) -> CorpusSpec:
    return CorpusSpec(seed=cfg["seed"], **cfg["corpus"])


def net_config(cfg) -> NetConfig:
    return NetConfig(seed=cfg["seed"], threshold=tuple(cfg["threshold"]), **cfg["net"])


def train_config(cfg) -> TrainConfig:
    return TrainConfig(seed=cfg["seed"], **cfg["train"])
