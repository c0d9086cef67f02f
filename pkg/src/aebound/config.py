"""Experiment configuration: JSON file, flag overrides, canonical hash.

The hash covers the resolved experiment parameters (not the output directory or
thread cap, which cannot change any computed number) and is stamped into every
output file so results can be traced back to the exact configuration.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Any

from .losses import MarginConfig
from .network import TrainConfig
from .semisup import SSLConfig


class ConfigError(ValueError):
    pass


DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "output_dir": "out",
    "threads": 1,
    "dataset": {
        "kind": "synthetic",
        "clusters": 8,
        "dim": 64,
        "flips": 3,
        "per_cluster": 1000,
        "threshold": 0.5,
        "images": None,
        "labels": None,
        "limit": None,
    },
    "split": {"n_labeled": 8, "m_unlabeled": 6000, "n_test": 1500},
    "arch": {
        "dims": [64, 32, 8, 32, 64],
        "bottleneck_index": None,
        "hidden_activation": "relu",
        "output_activation": "sigmoid",
        "use_bias": False,
    },
    "train": {"learning_rate": 0.03, "epochs": 30, "batch_size": 32,
              "surrogate_loss": "bce"},
    "margins": {"gamma1": 0.45, "gamma2": 0.49},
    "delta": 0.1,
    "sample_fractions": [round(0.1 * k, 1) for k in range(1, 11)],
    "epsilon_grid": [0.02, 0.05, 0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0],
    "ssl": {"cutoff": None, "k_baseline": 1, "seeds": list(range(20))},
}

_HASH_EXCLUDED = ("output_dir", "threads")


@dataclass
class ExperimentConfig:
    raw: dict[str, Any]

    def __post_init__(self):
        self.raw = _merge(DEFAULTS, self.raw)
        _validate(self.raw)

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def output_dir(self) -> str:
        return self.raw["output_dir"]

    @property
    def dataset(self) -> dict:
        return self.raw["dataset"]

    @property
    def split_sizes(self) -> tuple[int, int, int]:
        s = self.raw["split"]
        return int(s["n_labeled"]), int(s["m_unlabeled"]), int(s["n_test"])

    @property
    def arch_dims(self) -> list[int]:
        return [int(v) for v in self.raw["arch"]["dims"]]

    @property
    def bottleneck_index(self) -> int | None:
        v = self.raw["arch"]["bottleneck_index"]
        return None if v is None else int(v)

    @property
    def margins(self) -> MarginConfig:
        m = self.raw["margins"]
        return MarginConfig(float(m["gamma1"]), float(m["gamma2"]))

    @property
    def delta(self) -> float:
        return float(self.raw["delta"])

    @property
    def sample_fractions(self) -> list[float]:
        return [float(f) for f in self.raw["sample_fractions"]]

    @property
    def epsilon_grid(self) -> list[float]:
        return [float(e) for e in self.raw["epsilon_grid"]]

    def train_config(self) -> TrainConfig:
        t = self.raw["train"]
        return TrainConfig(
            learning_rate=float(t["learning_rate"]),
            epochs=int(t["epochs"]),
            batch_size=int(t["batch_size"]),
            seed=self.seed,
            surrogate_loss=t["surrogate_loss"],
        )

    def ssl_config(self) -> SSLConfig:
        s = self.raw["ssl"]
        cutoff = s["cutoff"]
        return SSLConfig(
            cutoff=None if cutoff is None else float(cutoff),
            k_baseline=int(s["k_baseline"]),
            seeds=tuple(int(v) for v in s["seeds"]),
        )

    def hash(self) -> str:
        hashed = {k: v for k, v in self.raw.items() if k not in _HASH_EXCLUDED}
        text = json.dumps(hashed, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _merge(defaults: dict, overrides: dict) -> dict:
    out = {}
    for key, default in defaults.items():
        if key in overrides:
            value = overrides[key]
            if isinstance(default, dict) and isinstance(value, dict):
                out[key] = _merge(default, value)
            else:
                out[key] = value
        else:
            out[key] = json.loads(json.dumps(default))  # deep copy
    unknown = set(overrides) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return out


def _validate(cfg: dict):
    kind = cfg["dataset"]["kind"]
    if kind not in ("synthetic", "idx"):
        raise ConfigError(f"dataset.kind must be synthetic or idx, got {kind!r}")
    if kind == "idx" and (not cfg["dataset"]["images"] or not cfg["dataset"]["labels"]):
        raise ConfigError("dataset.kind idx requires images and labels paths")
    fracs = cfg["sample_fractions"]
    if not fracs or any(not 0.0 < f <= 1.0 for f in fracs):
        raise ConfigError("sample_fractions must lie in (0, 1]")
    if sorted(fracs) != fracs:
        raise ConfigError("sample_fractions must be sorted ascending")
    grid = cfg["epsilon_grid"]
    if not grid or any(e <= 0 for e in grid):
        raise ConfigError("epsilon_grid must be positive")
    if sorted(grid) != grid:
        raise ConfigError("epsilon_grid must be sorted ascending")
    if not 0.0 < float(cfg["delta"]) < 1.0:
        raise ConfigError(f"delta must lie in (0, 1), got {cfg['delta']}")
    dims = cfg["arch"]["dims"]
    if len(dims) < 3 or dims[0] != dims[-1]:
        raise ConfigError("arch.dims must start and end with the input dimension")
    if min(dims[1:-1]) >= dims[0]:
        raise ConfigError("arch.dims must contain a bottleneck narrower than the input")
    if int(cfg["threads"]) < 1:
        raise ConfigError("threads must be >= 1")
    try:
        MarginConfig(float(cfg["margins"]["gamma1"]), float(cfg["margins"]["gamma2"]))
    except ValueError as err:
        raise ConfigError(str(err)) from None


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"config is not valid JSON: {err}") from None
    if overrides:
        raw = _apply_overrides(raw, overrides)
    return ExperimentConfig(raw)


def _apply_overrides(raw: dict, overrides: dict) -> dict:
    for key, value in overrides.items():
        if value is None:
            continue
        parts = key.split(".")
        target = raw
        for p in parts[:-1]:
            target = target.setdefault(p, {})
        target[parts[-1]] = value
    return raw
