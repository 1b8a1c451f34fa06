"""Experiment configuration: JSON schema, defaults, merging, and hashing.

A config file is a JSON object with up to seven top-level sections. Every
key is optional; omitted keys take the defaults below. Unknown keys at any
nesting level are rejected with the full key path, so typos fail loudly
instead of silently running the default.

Key reference (defaults in parentheses):

  data      n_examples (2000), dims ([16, 8, 8]), rho ([0.9, 0.4, 0.4]),
            label_range ([-3, 3]), sigma_y (0.1), seed (7)
  train     epochs (60), batch_size (32), lr (0.003), optimizer ("adam"),
            beta1 (0.9), beta2 (0.999), adam_eps (1e-8), patience (12),
            algorithm ("powmix"), manifold_alpha (1.0),
            loss_on_original (false), seed (1)
  mix       n_mixed (256), mix_prob (1.0), alpha_lo (0.5), alpha_hi (2.0),
            subset_lo (2.0), subset_hi (4.0), anisotropic (true),
            reweight (true), mask_share (true), dynamic_mix (true),
            warmup_epochs (2)
  model     hidden (32), embed (16), fusion_hidden (32),
            fusion_mode ("late"), cross_dim (8)
  protocol  robustness {kinds, p_grid, n_runs}, dominance {kinds, p_grid,
            n_runs, probe_runs}, limited {fractions, baseline},
            nsweep {n_grid}, ablate {p_ranges}
  seeds     list of distinct run seeds ([1, 2, 3, 4, 5])
  out       output directory ("runs"); excluded from the config hash
"""

import json
from dataclasses import dataclass

from .errors import ConfigError, MixlabError
from .evaluation import LIMITED_FRACTIONS, ROBUSTNESS_GRID
from .mixing import MixConfig
from .model import ModelConfig
from .synthdata import DataGenConfig
from .training import TrainConfig
from .util import canonical_hash, canonical_json

DEFAULTS = {
    "data": {
        "n_examples": 2000,
        "dims": [16, 8, 8],
        "rho": [0.9, 0.4, 0.4],
        "label_range": [-3.0, 3.0],
        "sigma_y": 0.1,
        "seed": 7,
    },
    "train": {
        "epochs": 60,
        "batch_size": 32,
        "lr": 0.003,
        "optimizer": "adam",
        "beta1": 0.9,
        "beta2": 0.999,
        "adam_eps": 1e-8,
        "patience": 12,
        "algorithm": "powmix",
        "manifold_alpha": 1.0,
        "loss_on_original": False,
        "seed": 1,
    },
    "mix": {
        "n_mixed": 256,
        "mix_prob": 1.0,
        "alpha_lo": 0.5,
        "alpha_hi": 2.0,
        "subset_lo": 2.0,
        "subset_hi": 4.0,
        "anisotropic": True,
        "reweight": True,
        "mask_share": True,
        "dynamic_mix": True,
        "warmup_epochs": 2,
    },
    "model": {
        "hidden": 32,
        "embed": 16,
        "fusion_hidden": 32,
        "fusion_mode": "late",
        "cross_dim": 8,
    },
    "protocol": {
        "robustness": {
            "kinds": ["feature_drop_aligned", "feature_drop_independent"],
            "p_grid": list(ROBUSTNESS_GRID),
            "n_runs": 15,
        },
        "dominance": {
            "kinds": ["text_drop", "text_mean_replace"],
            "p_grid": list(ROBUSTNESS_GRID),
            "n_runs": 15,
            "probe_runs": 3,
        },
        "limited": {
            "fractions": list(LIMITED_FRACTIONS),
            "baseline": "none",
        },
        "nsweep": {
            "n_grid": [2 ** k for k in range(4, 12)],
        },
        "ablate": {
            "p_ranges": [],
        },
    },
    "seeds": [1, 2, 3, 4, 5],
    "out": "runs",
}


@dataclass(frozen=True)
class ExperimentConfig:
    """A fully resolved experiment: typed sub-configs plus the raw tree."""

    data: DataGenConfig
    train: TrainConfig
    protocol: dict
    seeds: tuple
    out: str
    resolved: dict

    @property
    def hash(self) -> str:
        return experiment_hash(self.resolved)


def _merge(defaults, overrides, path):
    """Deep-merge overrides into defaults, rejecting unknown keys."""
    if not isinstance(overrides, dict):
        raise ConfigError(f"config section {path or '<root>'} must be an object, "
                          f"got {type(overrides).__name__}")
    merged = {}
    for key, default in defaults.items():
        here = f"{path}.{key}" if path else key
        if key not in overrides:
            merged[key] = default
        elif isinstance(default, dict):
            merged[key] = _merge(default, overrides[key], here)
        else:
            merged[key] = overrides[key]
    unknown = sorted(set(overrides) - set(defaults))
    if unknown:
        where = path or "top level"
        known = ", ".join(sorted(defaults))
        raise ConfigError(f"unknown config key {unknown[0]!r} at {where} "
                          f"(known keys: {known})")
    return merged


def merge_config(overrides: dict) -> dict:
    """Resolve a partial config tree against DEFAULTS."""
    return _merge(DEFAULTS, overrides, "")


def load_config(path=None) -> dict:
    """Read a JSON config file and resolve it; None means pure defaults."""
    if path is None:
        return merge_config({})
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return merge_config(raw)


def build_experiment(resolved: dict) -> ExperimentConfig:
    """Instantiate the typed sub-configs from a resolved tree."""
    try:
        data = DataGenConfig(**resolved["data"])
        train = TrainConfig(mix=MixConfig(**resolved["mix"]),
                            model=ModelConfig(**resolved["model"]),
                            **resolved["train"])
    except MixlabError as exc:
        raise ConfigError(f"invalid config value: {exc}") from exc
    seeds = tuple(int(s) for s in resolved["seeds"])
    if not seeds:
        raise ConfigError("seeds must be a non-empty list")
    if len(set(seeds)) != len(seeds):
        raise ConfigError(f"seeds must be distinct, got {list(seeds)}")
    return ExperimentConfig(data=data, train=train,
                            protocol=resolved["protocol"], seeds=seeds,
                            out=str(resolved["out"]), resolved=resolved)


def experiment_hash(resolved: dict) -> str:
    """Content hash of a resolved tree; the output dir does not count."""
    hashed = {k: v for k, v in resolved.items() if k != "out"}
    return canonical_hash(hashed)


def resolved_text(resolved: dict) -> str:
    """Canonical serialization written next to results as config.resolved."""
    return canonical_json(resolved) + "\n"
