"""Plain-text ``key = value`` experiment configuration.

Blank lines and ``#`` comments are ignored. Keys are the long CLI flag names
with dashes or underscores (``init-size`` and ``init_size`` are the same key).
"""
from __future__ import annotations

from dataclasses import replace
from pathlib import Path

from .alsim import ConfigError, ExperimentConfig
from .datasets import DatasetSpec


def _ints(text):
    return tuple(int(t) for t in str(text).split(",") if t.strip())


def _names(text):
    return tuple(t.strip() for t in str(text).split(",") if t.strip())


# key -> (target, field, parser); target is "exp" or "data".
KEYS = {
    "strategy": ("exp", "strategies", _names),
    "model": ("exp", "model", str),
    "hidden": ("exp", "hidden", _ints),
    "channels": ("exp", "channels", _ints),
    "init_size": ("exp", "initial_size", int),
    "budget": ("exp", "budget", int),
    "cycles": ("exp", "cycles", int),
    "subset_size": ("exp", "subset_size", int),
    "batch_size": ("exp", "batch_size", int),
    "epochs": ("exp", "epochs", int),
    "target_optimizer": ("exp", "target_optimizer", str),
    "target_lr": ("exp", "target_lr", float),
    "momentum": ("exp", "momentum", float),
    "weight_decay": ("exp", "weight_decay", float),
    "lr_drop_at": ("exp", "lr_drop_at", float),
    "lpm_lr": ("exp", "lpm_lr", float),
    "lpm_hidden": ("exp", "lpm_hidden", int),
    "margin": ("exp", "margin", float),
    "retrain": ("exp", "retrain", str),
    "seeds": ("exp", "seeds", _ints),
    "sorter": ("exp", "sorter_path", str),
    "dataset": ("data", "kind", str),
    "pool_size": ("data", "size", int),
    "test_size": ("data", "test_size", int),
    "input_dim": ("data", "input_dim", int),
    "n_classes": ("data", "n_classes", int),
    "cluster_std": ("data", "cluster_std", float),
    "centers_per_class": ("data", "centers_per_class", int),
    "center_scale": ("data", "center_scale", float),
    "noise": ("data", "noise", float),
    "hard_fraction": ("data", "hard_fraction", float),
    "hard_scale": ("data", "hard_scale", float),
    "hard_signal": ("data", "hard_signal", float),
    "data_seed": ("data", "seed", int),
    "csv_path": ("data", "path", str),
    "label_column": ("data", "label_column", str),
}


def normalize_key(key):
    return key.strip().lstrip("-").replace("-", "_")


def parse_config_text(text, source="<config>"):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        values[normalize_key(key)] = value.strip()
    return values


def load_config_file(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text(), str(path))


def apply_settings(config, settings):
    """Return a copy of ``config`` with flat ``settings`` applied."""
    exp, data = {}, {}
    for key, raw in settings.items():
        key = normalize_key(key)
        if key not in KEYS:
            raise ConfigError(f"unknown configuration key {key!r}")
        target, name, parse = KEYS[key]
        try:
            value = parse(raw)
        except ValueError:
            raise ConfigError(f"bad value for {key}: {raw!r}") from None
        (exp if target == "exp" else data)[name] = value
    dataset = replace(config.dataset, **data)
    return replace(config, dataset=dataset, **exp)


def default_config():
    return ExperimentConfig(dataset=DatasetSpec())


def dump_config(config):
    """Inverse of ``apply_settings`` for the keys above, as config-file text."""
    lines = []
    for key, (target, name, _) in KEYS.items():
        obj = config if target == "exp" else config.dataset
        value = getattr(obj, name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
