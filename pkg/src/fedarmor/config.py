"""Experiment configuration: a nested JSON document with full defaults.

A minimal config is `{"seed": 0}` — every other key has a documented
default, listed in DEFAULTS below. Unknown keys are rejected by their
dotted path. Parsed configs re-serialize to a resolved document that
parses back to an identical config, so configs are safe to archive next
to their reports.

Seed precedence: an explicit override (the command line) beats the
config file, which beats the FEDARMOR_SEED environment variable, which
beats 0.
"""

from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass

from .attacks import AttackSpec, fgsm_spec, pgd_spec
from .data import SynthSpec
from .errors import ConfigError, DomainError
from .federation import DEFENSES, FederationConfig, config_digest
from .privacy import PrivacySpec

__all__ = [
    "DataConfig",
    "ExperimentConfig",
    "DEFAULTS",
    "EPSILON_PRESETS",
    "FRACTION_PRESET",
    "parse_config",
    "parse_dict",
    "resolve_seed",
]

# Attack-budget grids used throughout the experiments, and the adaptation
# fractions for the sample-budget sweep.
EPSILON_PRESETS = {
    "fine": (0.005, 0.012, 0.017, 0.05),
    "coarse": (0.01, 0.03, 0.05, 0.07),
}
FRACTION_PRESET = (0.1, 0.2, 0.3, 0.5, 0.7, 1.0)

DEFAULTS: dict = {
    "seed": None,
    "output": "results",
    "defense": "none",
    "defense_sigma": None,
    "model": {"hidden": [32, 16]},
    "federation": {
        "num_clients": 3,
        "rounds": 10,
        "local_epochs": 5,
        "lr": 0.05,
        "batch_size": 32,
        "client_weights": None,
        "adversary_client": 0,
        "adaptation_fraction": 0.5,
        "adapt_epochs": 8,
        "adapt_lr": 0.05,
        "adapt_passes": 1,
        "per_round_adaptation": False,
        "dropout": 0.0,
    },
    "privacy": {
        "enabled": False,
        "epsilon": 9.0,
        "delta": 1e-5,
        "clip_bound": 10.0,
        "min_dataset_size": 160,
        "exposures": 1,
        "noise_multiplier": None,
        "sigma_down": None,
    },
    "attack": {
        "method": "fgsm",
        "epsilon": 0.05,
        "steps": 10,
        "alpha": None,
        "clamp_lo": -10.0,
        "clamp_hi": 10.0,
    },
    "data": {
        "source": "synthetic",
        "csv_path": None,
        "num_classes": 2,
        "dim": 16,
        "num_samples": 600,
        "class_separation": 0.2,
        "noise_std": 0.1,
        "skew": 0.5,
        "test_fraction": 0.2,
        "server_fraction": 0.15,
    },
}


@dataclass(frozen=True)
class DataConfig:
    """Resolved data section: the source plus split and skew settings."""

    source: str
    csv_path: str | None
    num_classes: int | None
    synth: SynthSpec | None
    skew: float
    test_fraction: float
    server_fraction: float


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved experiment: every component spec plus the defense
    mode, with the resolved JSON document kept for round-tripping."""

    federation: FederationConfig
    privacy: PrivacySpec
    privacy_enabled: bool
    attack: AttackSpec
    defense: str
    defense_sigma: float
    model_hidden: tuple[int, ...]
    data: DataConfig
    output: str
    resolved: dict

    def to_dict(self) -> dict:
        """Resolved document; parsing it back yields an identical config."""
        return copy.deepcopy(self.resolved)

    def to_json(self) -> str:
        return json.dumps(self.resolved, indent=2, sort_keys=True) + "\n"

    def digest(self) -> str:
        """Digest of everything except seed and output location."""
        payload = self.to_dict()
        del payload["seed"]
        del payload["output"]
        return config_digest(payload)

    def with_updates(self, **paths) -> "ExperimentConfig":
        """New config with dotted keys replaced, e.g.
        with_updates(**{"attack.epsilon": 0.01, "defense": "none"})."""
        doc = self.to_dict()
        for dotted, value in paths.items():
            node = doc
            *parents, leaf = dotted.split(".")
            for part in parents:
                node = node[part]
            if leaf not in node:
                raise ConfigError(f"unknown key: {dotted}")
            node[leaf] = value
        return parse_dict(doc)


def resolve_seed(override: int | None = None, configured: int | None = None) -> int:
    """Apply seed precedence: override, then config, then environment."""
    if override is not None:
        return int(override)
    if configured is not None:
        return int(configured)
    env = os.environ.get("FEDARMOR_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"FEDARMOR_SEED: expected an integer, got {env!r}") from None
    return 0


def parse_config(path, seed_override: int | None = None, output_override: str | None = None) -> ExperimentConfig:
    """Parse and validate a config file, resolving all defaults."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid syntax: {exc}") from exc
    return parse_dict(doc, seed_override, output_override)


def parse_dict(doc: dict, seed_override: int | None = None, output_override: str | None = None) -> ExperimentConfig:
    """Validate a config document and resolve every default."""
    if not isinstance(doc, dict):
        raise ConfigError("config root must be an object")
    merged = _merge(DEFAULTS, doc, prefix="")

    seed = resolve_seed(seed_override, merged["seed"])
    merged["seed"] = seed
    if output_override is not None:
        merged["output"] = str(output_override)
    output = _string(merged, "output")

    defense = _string(merged, "defense")
    if defense not in DEFENSES:
        raise ConfigError(f"defense: expected one of {', '.join(DEFENSES)}, got {defense!r}")

    hidden = merged["model"]["hidden"]
    if not isinstance(hidden, list) or not hidden or not all(isinstance(h, int) and h > 0 for h in hidden):
        raise ConfigError("model.hidden: expected a non-empty list of positive integers")

    fed = _build_federation(merged["federation"], seed)
    privacy, privacy_enabled = _build_privacy(merged["privacy"])
    attack = _build_attack(merged["attack"])
    data = _build_data(merged["data"], fed.num_clients)

    defense_sigma = merged["defense_sigma"]
    if defense_sigma is None:
        resolved_sigma = privacy.sigma_down
    else:
        resolved_sigma = _real(merged, "defense_sigma")
        if resolved_sigma < 0:
            raise ConfigError("defense_sigma: must be non-negative")

    return ExperimentConfig(
        federation=fed,
        privacy=privacy,
        privacy_enabled=privacy_enabled,
        attack=attack,
        defense=defense,
        defense_sigma=resolved_sigma,
        model_hidden=tuple(hidden),
        data=data,
        output=output,
        resolved=merged,
    )


def _merge(defaults: dict, given: dict, prefix: str) -> dict:
    """Overlay given keys onto defaults, rejecting unknown dotted paths."""
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        path = f"{prefix}{key}"
        if key not in defaults:
            raise ConfigError(f"unknown key: {path}")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{path}: expected an object")
            out[key] = _merge(defaults[key], value, prefix=f"{path}.")
        else:
            out[key] = value
    return out


def _typed(section: dict, key: str, prefix: str, kinds, describe: str):
    value = section[key]
    if isinstance(value, bool) and bool not in (kinds if isinstance(kinds, tuple) else (kinds,)):
        raise ConfigError(f"{prefix}{key}: expected {describe}, got {value!r}")
    if not isinstance(value, kinds):
        raise ConfigError(f"{prefix}{key}: expected {describe}, got {value!r}")
    return value


def _string(section: dict, key: str, prefix: str = "") -> str:
    return _typed(section, key, prefix, str, "a string")


def _boolean(section: dict, key: str, prefix: str = "") -> bool:
    return _typed(section, key, prefix, bool, "a boolean")


def _integer(section: dict, key: str, prefix: str = "") -> int:
    return int(_typed(section, key, prefix, int, "an integer"))


def _real(section: dict, key: str, prefix: str = "") -> float:
    return float(_typed(section, key, prefix, (int, float), "a number"))


def _positive_real(section: dict, key: str, prefix: str = "") -> float:
    value = _real(section, key, prefix)
    if value <= 0:
        raise ConfigError(f"{prefix}{key}: must be positive")
    return value


def _fraction01(section: dict, key: str, prefix: str = "") -> float:
    value = _real(section, key, prefix)
    if not 0.0 <= value <= 1.0:
        raise ConfigError(f"{prefix}{key}: must lie in [0, 1]")
    return value


def _build_federation(sec: dict, seed: int) -> FederationConfig:
    weights = sec["client_weights"]
    if weights is not None:
        if not isinstance(weights, list) or not all(isinstance(w, (int, float)) for w in weights):
            raise ConfigError("federation.client_weights: expected a list of numbers or null")
        weights = tuple(float(w) for w in weights)
    try:
        return FederationConfig(
            num_clients=_integer(sec, "num_clients", "federation."),
            rounds=_integer(sec, "rounds", "federation."),
            local_epochs=_integer(sec, "local_epochs", "federation."),
            lr=_real(sec, "lr", "federation."),
            batch_size=_integer(sec, "batch_size", "federation."),
            adaptation_fraction=_fraction01(sec, "adaptation_fraction", "federation."),
            adversary_client=_integer(sec, "adversary_client", "federation."),
            master_seed=seed,
            client_weights=weights,
            adapt_epochs=_integer(sec, "adapt_epochs", "federation."),
            adapt_lr=_real(sec, "adapt_lr", "federation."),
            adapt_passes=_integer(sec, "adapt_passes", "federation."),
            per_round_adaptation=_boolean(sec, "per_round_adaptation", "federation."),
            dropout=_real(sec, "dropout", "federation."),
        )
    except DomainError as exc:
        raise ConfigError(f"federation: {exc}") from exc


def _build_privacy(sec: dict) -> tuple[PrivacySpec, bool]:
    enabled = _boolean(sec, "enabled", "privacy.")
    multiplier = sec["noise_multiplier"]
    if multiplier is not None:
        multiplier = _positive_real(sec, "noise_multiplier", "privacy.")
    sigma_down = sec["sigma_down"]
    if sigma_down is not None:
        sigma_down = _real(sec, "sigma_down", "privacy.")
    try:
        spec = PrivacySpec(
            epsilon_dp=_real(sec, "epsilon", "privacy."),
            delta_dp=_real(sec, "delta", "privacy."),
            clip_bound=_real(sec, "clip_bound", "privacy."),
            min_dataset_size=_integer(sec, "min_dataset_size", "privacy."),
            exposures=_integer(sec, "exposures", "privacy."),
            noise_multiplier=multiplier,
            sigma_down_override=sigma_down,
        )
    except DomainError as exc:
        raise ConfigError(f"privacy: {exc}") from exc
    return spec, enabled


def _build_attack(sec: dict) -> AttackSpec:
    method = _string(sec, "method", "attack.").lower()
    epsilon = _real(sec, "epsilon", "attack.")
    clamp_lo = _real(sec, "clamp_lo", "attack.")
    clamp_hi = _real(sec, "clamp_hi", "attack.")
    alpha = sec["alpha"]
    if alpha is not None:
        alpha = _positive_real(sec, "alpha", "attack.")
    try:
        if method == "fgsm":
            return fgsm_spec(epsilon, clamp_lo, clamp_hi)
        if method == "pgd":
            return pgd_spec(epsilon, _integer(sec, "steps", "attack."), alpha, clamp_lo, clamp_hi)
    except DomainError as exc:
        raise ConfigError(f"attack: {exc}") from exc
    raise ConfigError(f"attack.method: expected 'fgsm' or 'pgd', got {method!r}")


def _build_data(sec: dict, num_clients: int) -> DataConfig:
    source = _string(sec, "source", "data.")
    if source not in ("synthetic", "csv"):
        raise ConfigError(f"data.source: expected 'synthetic' or 'csv', got {source!r}")
    csv_path = sec["csv_path"]
    if csv_path is not None:
        csv_path = _string(sec, "csv_path", "data.")
    num_classes = sec["num_classes"]
    if num_classes is not None:
        num_classes = _integer(sec, "num_classes", "data.")

    synth = None
    if source == "synthetic":
        if num_classes is None:
            raise ConfigError("data.num_classes: required for synthetic data")
        try:
            synth = SynthSpec(
                num_classes=num_classes,
                dim=_integer(sec, "dim", "data."),
                n=_integer(sec, "num_samples", "data."),
                class_separation=_real(sec, "class_separation", "data."),
                noise_std=_real(sec, "noise_std", "data."),
            )
        except DomainError as exc:
            raise ConfigError(f"data: {exc}") from exc
    elif csv_path is None:
        raise ConfigError("data.csv_path: required when data.source is 'csv'")

    test_fraction = _fraction01(sec, "test_fraction", "data.")
    server_fraction = _fraction01(sec, "server_fraction", "data.")
    if test_fraction + server_fraction >= 1.0:
        raise ConfigError("data.test_fraction: test and server fractions must leave training data")

    return DataConfig(
        source=source,
        csv_path=csv_path,
        num_classes=num_classes,
        synth=synth,
        skew=_fraction01(sec, "skew", "data."),
        test_fraction=test_fraction,
        server_fraction=server_fraction,
    )
