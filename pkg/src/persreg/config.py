"""Experiment configuration files.

A config is a flat YAML mapping; nested mappings and unknown keys are
rejected so a typo cannot silently fall back to a default.

=====================  =========================================  ==================
key                    meaning                                    default
=====================  =========================================  ==================
network_id             label written to the results CSV           ``net``
dataset                ``synthetic`` or ``mnist``                 ``synthetic``
mnist_dir              directory with the four IDX files          required for mnist
synth_classes          blob classes                               4
synth_per_class        examples per class                         500
synth_dims             feature dimension                          2
synth_seed             seed of the blob draw                      0
synth_separation       nearest centre distance (in sigmas)        6.0
hidden_layers          list of hidden widths                      required
dropout_prob           hidden-unit drop probability               0.0
regularizer            kind, or list of kinds (sweep)             ``T1``
omega                  weight for ``train``                       0.1
omegas                 weight grid for ``sweep``                  standard grid
include_baseline       add an unregularized run per seed          true
alpha, beta            T2 mean / dispersion weights               0.5, 0.5
sampler                ``full`` or ``importance``                 ``full``
sample_percent         per-hidden-layer percentage                0.5
batch_size                                                        256
max_epochs                                                        1200
patience                                                          20
momentum                                                          0.9
lr_mode                ``schedule`` or ``fixed``                  ``schedule``
alpha0                 initial rate of the schedule               0.01
fixed_lr               rate in fixed mode                         0.001
seeds                  list of run seeds                          [0]
val_frac               validation share of the training portion   0.2
output_dir             where results are written                  ``results``
workers                parallel runs (``PERSREG_WORKERS`` wins)   1
=====================  =========================================  ==================
"""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from typing import Optional

import yaml

from .datasets import Dataset, load_mnist, synth_dataset
from .nncore import MLPSpec
from .regularizers import KINDS, RegularizerSpec
from .sampler import SamplerConfig
from .trainer import OMEGA_GRID, TrainConfig


class ConfigError(ValueError):
    pass


class MissingPathError(ConfigError):
    def __init__(self, path):
        super().__init__(f"path does not exist: {path}")
        self.path = path


@dataclass
class ExperimentConfig:
    hidden_layers: list[int]
    network_id: str = "net"
    dataset: str = "synthetic"
    mnist_dir: Optional[str] = None
    synth_classes: int = 4
    synth_per_class: int = 500
    synth_dims: int = 2
    synth_seed: int = 0
    synth_separation: float = 6.0
    dropout_prob: float = 0.0
    regularizer: list[str] = field(default_factory=lambda: ["T1"])
    omega: float = 0.1
    omegas: list[float] = field(default_factory=lambda: list(OMEGA_GRID))
    include_baseline: bool = True
    alpha: float = 0.5
    beta: float = 0.5
    sampler: str = "full"
    sample_percent: float = 0.5
    batch_size: int = 256
    max_epochs: int = 1200
    patience: int = 20
    momentum: float = 0.9
    lr_mode: str = "schedule"
    alpha0: float = 0.01
    fixed_lr: float = 0.001
    seeds: list[int] = field(default_factory=lambda: [0])
    val_frac: float = 0.2
    output_dir: str = "results"
    workers: int = 1

    def __post_init__(self):
        if isinstance(self.regularizer, str):
            self.regularizer = [self.regularizer]
        if isinstance(self.seeds, int):
            self.seeds = [self.seeds]
        for kind in self.regularizer:
            if kind not in KINDS:
                raise ConfigError(f"unknown regularizer {kind!r}; expected one of {KINDS}")
        if self.dataset not in ("synthetic", "mnist"):
            raise ConfigError(f"dataset must be 'synthetic' or 'mnist', got {self.dataset!r}")
        if self.dataset == "mnist":
            if not self.mnist_dir:
                raise ConfigError("mnist_dir is required for dataset 'mnist'")
            if not os.path.isdir(self.mnist_dir):
                raise MissingPathError(self.mnist_dir)
        if self.omega < 0 or any(w < 0 for w in self.omegas):
            raise ConfigError("regularizer weights must be >= 0")
        if not self.omegas:
            raise ConfigError("omegas must be nonempty")

    def load_dataset(self) -> Dataset:
        if self.dataset == "mnist":
            return load_mnist(self.mnist_dir)
        return synth_dataset(self.synth_classes, self.synth_per_class, self.synth_dims,
                             self.synth_seed, self.synth_separation)

    def train_config(self, dataset: Dataset, kind: str, omega: float, seed: int) -> TrainConfig:
        try:
            return TrainConfig(
                mlp=MLPSpec(dataset.n_features, tuple(self.hidden_layers), dataset.n_classes,
                            dropout_prob=self.dropout_prob),
                dataset=dataset,
                regularizer=RegularizerSpec(kind, omega, self.alpha, self.beta),
                sampler=SamplerConfig(self.sampler, self.sample_percent),
                batch_size=self.batch_size,
                max_epochs=self.max_epochs,
                patience=self.patience,
                momentum=self.momentum,
                lr_mode=self.lr_mode,
                alpha0=self.alpha0,
                fixed_lr=self.fixed_lr,
                seed=seed,
                val_frac=self.val_frac,
                network_id=str(self.network_id),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


FIELDS = {f.name for f in dataclasses.fields(ExperimentConfig)}


def parse_config(mapping: dict) -> ExperimentConfig:
    if not isinstance(mapping, dict):
        raise ConfigError("config must be a mapping of keys to values")
    unknown = sorted(set(mapping) - FIELDS)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    nested = sorted(k for k, v in mapping.items() if isinstance(v, dict))
    if nested:
        raise ConfigError(f"config must be flat; nested mapping under: {', '.join(nested)}")
    if "hidden_layers" not in mapping:
        raise ConfigError("missing required key: hidden_layers")
    try:
        return ExperimentConfig(**mapping)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    if not os.path.exists(path):
        raise MissingPathError(path)
    try:
        with open(path) as f:
            mapping = yaml.safe_load(f) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: malformed config: {exc}") from exc
    return parse_config(mapping)
