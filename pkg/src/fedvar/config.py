"""Experiment configuration: INI grammar, validation, and assembly.

A config file uses a fixed set of sections and keys; anything unrecognized
is an error so that typos fail fast instead of silently running defaults.
``parse`` and ``emit`` round-trip exactly (floats are written with repr
precision, infinity as the literal ``inf``), so a run can be reproduced
from the emitted copy of its settings.
"""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, fields

from .data import (Dataset, load_csv, load_idx, partition_by_label,
                   partition_iid, synth_blobs)
from .engine import FederationConfig
from .models import MlpArchitecture, MlpModel, SvmModel
from .privacy import PrivacyBudget

__all__ = ["ConfigError", "ExperimentConfig", "parse", "parse_file", "emit",
           "build_datasets", "build_model", "build_federation"]


class ConfigError(ValueError):
    """Malformed or unrecognized experiment configuration."""


def _parse_int(text: str) -> int:
    return int(text.strip())


def _parse_float(text: str) -> float:
    value = float(text.strip())
    if math.isnan(value):
        raise ValueError("nan is not a valid setting")
    return value


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_str(text: str) -> str:
    return text.strip()


def _parse_float_list(text: str) -> tuple[float, ...]:
    items = [part.strip() for part in text.split(",") if part.strip()]
    if not items:
        raise ValueError("expected a comma-separated list of numbers")
    return tuple(_parse_float(part) for part in items)


def _parse_int_list(text: str) -> tuple[int, ...]:
    items = [part.strip() for part in text.split(",") if part.strip()]
    if not items:
        raise ValueError("expected a comma-separated list of integers")
    return tuple(int(part) for part in items)


def _emit_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(_emit_value(item) for item in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


# (section, key) -> (attribute, parser); section order is the emit order.
_SCHEMA: dict[str, dict[str, tuple[str, object]]] = {
    "federation": {
        "num_users": ("num_users", _parse_int),
        "num_sampled": ("num_sampled", _parse_int),
        "local_iters": ("local_iters", _parse_int),
        "total_iters": ("total_iters", _parse_int),
        "clip_norm": ("clip_norm", _parse_float),
        "step_size": ("step_size", _parse_float),
        "master_seed": ("master_seed", _parse_int),
    },
    "privacy": {
        "epsilon": ("epsilon", _parse_float),
        "delta": ("delta", _parse_float),
        "theta": ("theta", _parse_float),
    },
    "adjust": {
        "enabled": ("adjust_enabled", _parse_bool),
        "factor": ("adjust_factor", _parse_float),
        "tolerance": ("adjust_tolerance", _parse_float),
    },
    "model": {
        "kind": ("model_kind", _parse_str),
        "hidden_units": ("hidden_units", _parse_int),
        "num_classes": ("num_classes", _parse_int),
        "reg_coefficient": ("reg_coefficient", _parse_float),
    },
    "data": {
        "source": ("data_source", _parse_str),
        "per_class": ("per_class", _parse_int),
        "test_per_class": ("test_per_class", _parse_int),
        "input_dim": ("input_dim", _parse_int),
        "spread": ("spread", _parse_float),
        "partition": ("partition_kind", _parse_str),
        "idx_images": ("idx_images", _parse_str),
        "idx_labels": ("idx_labels", _parse_str),
        "test_idx_images": ("test_idx_images", _parse_str),
        "test_idx_labels": ("test_idx_labels", _parse_str),
        "csv_path": ("csv_path", _parse_str),
        "test_csv_path": ("test_csv_path", _parse_str),
        "csv_label_column": ("csv_label_column", _parse_str),
    },
    "sweep": {
        "thetas": ("sweep_thetas", _parse_float_list),
        "epsilons": ("sweep_epsilons", _parse_float_list),
        "max_rounds": ("sweep_max_rounds", _parse_int_list),
    },
    "bound": {
        "smoothness": ("smoothness", _parse_float),
        "lipschitz": ("lipschitz", _parse_float),
        "pl_constant": ("pl_constant", _parse_float),
        "dissimilarity": ("dissimilarity", _parse_float),
        "divergence": ("divergence", _parse_float),
        "initial_gap": ("initial_gap", _parse_float),
        "probe": ("probe", _parse_bool),
    },
    "output": {
        "delimiter": ("delimiter", _parse_str),
    },
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Every tunable of the toolkit, with reproducible defaults."""

    num_users: int = 100
    num_sampled: int = 10
    local_iters: int = 5
    total_iters: int = 150
    clip_norm: float = 5.0
    step_size: float = 0.3
    master_seed: int = 0
    epsilon: float = 10.0
    delta: float = 0.001
    theta: float = 1.0
    adjust_enabled: bool = False
    adjust_factor: float = 0.8
    adjust_tolerance: float = 1e-4
    model_kind: str = "mlp"
    hidden_units: int = 32
    num_classes: int = 10
    reg_coefficient: float = 1e-3
    data_source: str = "synth"
    per_class: int = 400
    test_per_class: int = 100
    input_dim: int = 20
    spread: float = 0.25
    partition_kind: str = "iid"
    idx_images: str = ""
    idx_labels: str = ""
    test_idx_images: str = ""
    test_idx_labels: str = ""
    csv_path: str = ""
    test_csv_path: str = ""
    csv_label_column: str = "label"
    sweep_thetas: tuple[float, ...] = (0.9, 1.0, 1.05)
    sweep_epsilons: tuple[float, ...] = (10.0,)
    sweep_max_rounds: tuple[int, ...] = (5, 10, 15, 20, 25, 30)
    smoothness: float = 2.0
    lipschitz: float = 1.0
    pl_constant: float = 0.5
    dissimilarity: float = 1.5
    divergence: float = 0.5
    initial_gap: float = 10.0
    probe: bool = False
    delimiter: str = ","

    def __post_init__(self):
        if self.model_kind not in ("mlp", "svm"):
            raise ConfigError(
                f"model.kind must be 'mlp' or 'svm', got {self.model_kind!r}")
        if self.data_source not in ("synth", "idx", "csv"):
            raise ConfigError(f"data.source must be 'synth', 'idx', or "
                              f"'csv', got {self.data_source!r}")
        if self.partition_kind not in ("iid", "by_label"):
            raise ConfigError(f"data.partition must be 'iid' or 'by_label', "
                              f"got {self.partition_kind!r}")
        if len(self.delimiter) != 1:
            raise ConfigError(
                f"output.delimiter must be one character, "
                f"got {self.delimiter!r}")
        if self.model_kind == "svm" and self.num_classes != 2:
            raise ConfigError("model.kind 'svm' requires num_classes = 2")


def parse(text: str) -> ExperimentConfig:
    """Build an ExperimentConfig from INI text; unknown content is an error."""
    reader = configparser.ConfigParser(interpolation=None)
    try:
        reader.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    overrides = {}
    for section in reader.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in reader.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            attribute, converter = _SCHEMA[section][key]
            try:
                overrides[attribute] = converter(raw)
            except ValueError as exc:
                raise ConfigError(
                    f"bad value for {section}.{key}: {exc}") from None
    return ExperimentConfig(**overrides)


def parse_file(path: str) -> ExperimentConfig:
    """``parse`` on a file's contents."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return parse(handle.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from None


def emit(config: ExperimentConfig) -> str:
    """Render a config as INI text such that parse(emit(c)) == c."""
    by_attribute = {f.name: getattr(config, f.name)
                    for f in fields(config)}
    out = io.StringIO()
    for section, keys in _SCHEMA.items():
        out.write(f"[{section}]\n")
        for key, (attribute, _) in keys.items():
            out.write(f"{key} = {_emit_value(by_attribute[attribute])}\n")
        out.write("\n")
    return out.getvalue()


def build_datasets(config: ExperimentConfig):
    """Materialize (train, test, partition) from the data settings.

    The synthetic source draws a train and a disjoint test cloud around the
    same class centroids; file-backed sources read whatever paths are set,
    with an empty test path meaning "evaluate on the training set".
    """
    if config.data_source == "synth":
        train = synth_blobs(config.num_classes, config.per_class,
                            config.input_dim, config.spread,
                            seed=config.master_seed)
        test = synth_blobs(config.num_classes, config.test_per_class,
                           config.input_dim, config.spread,
                           seed=config.master_seed + 1)
        if config.model_kind == "svm":
            train = _to_signed_labels(train)
            test = _to_signed_labels(test)
    elif config.data_source == "idx":
        if not config.idx_images or not config.idx_labels:
            raise ConfigError(
                "data.source 'idx' requires idx_images and idx_labels")
        train = load_idx(config.idx_images, config.idx_labels)
        test = None
        if config.test_idx_images or config.test_idx_labels:
            if not (config.test_idx_images and config.test_idx_labels):
                raise ConfigError("test_idx_images and test_idx_labels "
                                  "must be set together")
            test = load_idx(config.test_idx_images, config.test_idx_labels)
    else:
        if not config.csv_path:
            raise ConfigError("data.source 'csv' requires csv_path")
        train = load_csv(config.csv_path, config.csv_label_column)
        test = (load_csv(config.test_csv_path, config.csv_label_column)
                if config.test_csv_path else None)
    if config.partition_kind == "iid":
        partition = partition_iid(train, config.num_users,
                                  config.master_seed)
    else:
        partition = partition_by_label(train, config.num_users,
                                       config.master_seed)
    return train, test, partition


def _to_signed_labels(dataset: Dataset) -> Dataset:
    return Dataset(features=dataset.features,
                   labels=2.0 * dataset.labels - 1.0)


def build_model(config: ExperimentConfig, input_dim: int):
    """The configured model, sized for the given feature dimension."""
    if config.model_kind == "mlp":
        arch = MlpArchitecture(input_dim=input_dim,
                               hidden_units=config.hidden_units,
                               num_classes=config.num_classes)
        return MlpModel(arch)
    return SvmModel(input_dim=input_dim,
                    reg_coefficient=config.reg_coefficient)


def build_federation(config: ExperimentConfig, *, epsilon: float | None = None,
                     theta: float | None = None,
                     total_iters: int | None = None,
                     master_seed: int | None = None) -> FederationConfig:
    """FederationConfig from the experiment settings, with point overrides."""
    eps = config.epsilon if epsilon is None else epsilon
    return FederationConfig(
        num_users=config.num_users,
        num_sampled=config.num_sampled,
        local_iters=config.local_iters,
        total_iters=(config.total_iters if total_iters is None
                     else total_iters),
        clip_norm=config.clip_norm,
        step_size=config.step_size,
        budget=PrivacyBudget(epsilon=eps, delta=config.delta),
        theta=config.theta if theta is None else theta,
        adjust_enabled=config.adjust_enabled,
        adjust_factor=config.adjust_factor,
        adjust_tolerance=config.adjust_tolerance,
        master_seed=(config.master_seed if master_seed is None
                     else master_seed),
    )
