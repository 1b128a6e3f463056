"""Pipeline configuration: defaults, strict loading, and hashing.

The resolved configuration is a plain nested mapping validated against the
default shape: unknown keys are rejected so typos fail loudly. Its SHA-256
digest is stamped into every artifact manifest; changing any threshold or
path changes the hash.
"""
from __future__ import annotations

import json
from pathlib import Path

from .util import config_digest, load_packaged_json


def default_config() -> dict:
    regions = load_packaged_json("regions.json")
    thresholds = load_packaged_json("thresholds.json")
    cost = load_packaged_json("cost_scenarios.json")
    return {
        "paths": {
            "store": "artifacts/records.db",
            "contexts_dir": "artifacts/contexts",
            "dataset_dir": "artifacts/dataset",
            "reports_dir": "artifacts/reports",
        },
        "seeds": {
            "sample": 7,
            "generate": 11,
            "split": 13,
        },
        "sampling": {
            "target_contexts": 8,
        },
        "generation": {
            "client": "mock",
            "mock_mode": "echo",
            "perturbation": 0.15,
            "endpoint": "",
            "api_key_env": "QA_API_KEY",
            "model_a": "gpt-4o",
            "model_b": "o3-mini",
            "temperature_a": 0.7,
            "temperature_b": 1.0,
            "timeout_s": 60.0,
            "max_retries": 2,
            "concurrency": 1,
            "train_fraction": 0.9,
        },
        "regions": regions,
        "thresholds": thresholds,
        "cost_scenarios": cost["scenarios"],
        "service": {
            "endpoint": "",
            "api_key_env": "INTEL_API_KEY",
            "max_vessels": 500,
        },
    }


class ConfigError(ValueError):
    pass


def _merge_strict(defaults: dict, overrides: dict, path: str = "") -> dict:
    merged = dict(defaults)
    for key, value in overrides.items():
        here = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"unknown config key: {here}")
        if isinstance(defaults[key], dict) and isinstance(value, dict):
            if key == "cost_scenarios":
                merged[key] = value  # scenario names are user-defined
            else:
                merged[key] = _merge_strict(defaults[key], value, here)
        else:
            merged[key] = value
    return merged


def load_config(path: str | Path | None = None) -> dict:
    """Resolve the effective configuration (defaults + optional JSON file)."""
    cfg = default_config()
    if path is None:
        return cfg
    try:
        overrides = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from None
    if not isinstance(overrides, dict):
        raise ConfigError("config file must contain a JSON object")
    return _merge_strict(cfg, overrides)


def config_hash(cfg: dict) -> str:
    return config_digest(cfg)
