"""Choice of the neuron set whose correlations are regularized."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nncore import ActivationCapture
from .topology import NeuronId


@dataclass(frozen=True)
class SamplerConfig:
    mode: str = "full"
    percent: float = 0.5

    def __post_init__(self):
        if self.mode not in ("full", "importance"):
            raise ValueError(f"sampler mode must be 'full' or 'importance', got {self.mode!r}")
        if not 0 < self.percent <= 100:
            raise ValueError(f"percent must lie in (0, 100], got {self.percent}")


def importance_scores(capture: ActivationCapture, layer: int) -> np.ndarray:
    """Mean absolute activation of each unit of ``layer`` over the batch."""
    if not 0 <= layer < len(capture.layers):
        raise IndexError(f"layer {layer} out of range")
    return np.abs(capture.values[layer]).mean(axis=1)


def layer_quota(n_units: int, percent: float) -> int:
    return int(np.floor(percent * n_units / 100.0))


def select_neurons(capture: ActivationCapture, config: SamplerConfig) -> list[NeuronId]:
    """Neurons entering the regularizer for this batch.

    In importance mode each hidden layer contributes its
    ``floor(percent / 100 * n_units)`` highest-scoring units (ties keep unit
    order) and the output layer is taken whole.  Full mode takes every
    non-input unit.
    """
    if not capture.layers:
        raise ValueError("empty capture")
    sizes = capture.sizes
    output = len(sizes) - 1
    selected: list[NeuronId] = []
    for layer, n_units in enumerate(sizes):
        if config.mode == "full" or layer == output:
            units = range(n_units)
        else:
            quota = layer_quota(n_units, config.percent)
            order = np.argsort(-importance_scores(capture, layer), kind="stable")
            units = order[:quota]
        selected.extend(NeuronId(layer, int(u)) for u in units)
    if len(selected) < 2:
        raise ValueError(f"selection has {len(selected)} neuron(s); at least 2 needed")
    return selected
