"""Training runs: CCE plus a weighted regularizer, early stopping, and weight sweeps."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import nncore, rng, topology
from .datasets import Dataset
from .nncore import MLPSpec, Params
from .regularizers import ACTIVATION_BASED, RegularizerSpec, regularizer_node
from .sampler import SamplerConfig, select_neurons

log = logging.getLogger(__name__)

OMEGA_GRID = (1e-6, 1e-5, 1e-4, 0.001, 0.01, 0.1, 1.0, 5.0, 10.0, 100.0)


@dataclass(frozen=True)
class TrainConfig:
    mlp: MLPSpec
    dataset: Dataset = field(compare=False, repr=False)
    regularizer: RegularizerSpec = RegularizerSpec()
    sampler: SamplerConfig = SamplerConfig()
    batch_size: int = 256
    max_epochs: int = 1200
    patience: int = 20
    momentum: float = 0.9
    lr_mode: str = "schedule"
    alpha0: float = 0.01
    fixed_lr: float = 0.001
    seed: int = 0
    val_frac: float = 0.2
    network_id: str = "net"
    track_correlation: bool = True

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.patience < 1 or self.max_epochs < 1:
            raise ValueError("patience and max_epochs must be >= 1")
        if not 0 < self.val_frac < 1:
            raise ValueError("val_frac must lie in (0, 1)")
        if self.lr_mode not in ("schedule", "fixed"):
            raise ValueError(f"lr_mode must be 'schedule' or 'fixed', got {self.lr_mode!r}")
        if self.mlp.input_dim != self.dataset.n_features:
            raise ValueError(f"mlp input_dim {self.mlp.input_dim} != dataset features {self.dataset.n_features}")
        if self.mlp.output_dim != self.dataset.n_classes:
            raise ValueError(f"mlp output_dim {self.mlp.output_dim} != dataset classes {self.dataset.n_classes}")

    def learning_rate(self, iteration: int) -> float:
        if self.lr_mode == "fixed":
            return self.fixed_lr
        return nncore.lr_schedule(iteration, self.alpha0)

    def semantic_fields(self) -> dict:
        """Everything that changes a run's trajectory, as plain JSON types."""
        out = {}
        for f in dataclasses.fields(self):
            if f.name in ("dataset", "track_correlation"):
                continue
            value = getattr(self, f.name)
            out[f.name] = dataclasses.asdict(value) if dataclasses.is_dataclass(value) else value
        out["dataset"] = self.dataset.fingerprint()
        return out

    def digest(self) -> str:
        blob = json.dumps(self.semantic_fields(), sort_keys=True, default=repr)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class RunRecord:
    config_digest: str
    network_id: str
    regularizer: str
    omega: float
    seed: int
    status: str = "ok"
    epochs: list[dict] = field(default_factory=list)
    epochs_trained: int = 0
    best_epoch: int = 0
    best_val_acc: Optional[float] = None
    test_acc: Optional[float] = None
    final_test_acc: Optional[float] = None
    wall_time_s: float = 0.0
    message: str = ""
    params: Optional[Params] = field(default=None, compare=False, repr=False)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def run_id(self) -> str:
        return f"{self.network_id}_{self.regularizer}_w{self.omega!r}_s{self.seed}_{self.config_digest}"


def split_dataset(dataset: Dataset, seed: int, val_frac: float = 0.2):
    """Shuffle the training portion into train/validation; the test portion is untouched.

    Returns ``((x_train, y_train), (x_val, y_val), (x_test, y_test))``.
    """
    n = len(dataset.x_train)
    if n == 0:
        raise ValueError("empty dataset")
    n_val = int(round(val_frac * n))
    if n_val < 1 or n - n_val < 2:
        raise ValueError(f"degenerate split of {n} examples with val_frac={val_frac}")
    perm = rng.generator(seed, rng.SPLIT).permutation(n)
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    return (
        (dataset.x_train[train_idx], dataset.y_train[train_idx]),
        (dataset.x_train[val_idx], dataset.y_train[val_idx]),
        (dataset.x_test, dataset.y_test),
    )


def mean_abs_hidden_correlation(params: Params, inputs: np.ndarray) -> float:
    """Mean ``|corr|`` over pairs of hidden units with defined correlation."""
    corr = topology.correlation_matrix(nncore.hidden_activations(params, inputs))
    mask = corr.valid.copy()
    np.fill_diagonal(mask, False)
    if not mask.any():
        return math.nan
    return float(np.abs(corr.values[mask]).mean())


class EarlyStopping:
    """Tracks the best score; stops after ``patience`` epochs without a strict improvement."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = -math.inf
        self.best_epoch = 0

    def update(self, epoch: int, score: float) -> bool:
        if score > self.best:
            self.best, self.best_epoch = score, epoch
            return True
        return False

    def should_stop(self, epoch: int) -> bool:
        return epoch - self.best_epoch >= self.patience


BatchHook = Callable[[int, float, float, float], None]


def _batches(n: int, batch_size: int, gen: np.random.Generator):
    order = gen.permutation(n)
    starts = list(range(0, n, batch_size))
    # a trailing batch of one example has no correlations; fold it into the previous one
    if len(starts) > 1 and n - starts[-1] < 2:
        starts.pop()
    for k, lo in enumerate(starts):
        hi = starts[k + 1] if k + 1 < len(starts) else n
        yield order[lo:hi]


def train(config: TrainConfig, on_batch: Optional[BatchHook] = None) -> RunRecord:
    """One run of CCE + omega * regularizer.

    ``on_batch(iteration, loss, cce, reg)`` is called after every batch.
    The returned record carries the best-validation parameters, which are
    also the ones scored on the test set.
    """
    start = time.perf_counter()
    reg = config.regularizer
    record = RunRecord(config.digest(), config.network_id, reg.kind, float(reg.omega), config.seed)
    (xt, yt), (xv, yv), (xs, ys) = split_dataset(config.dataset, config.seed, config.val_frac)
    params = nncore.init_params(config.mlp, config.seed)
    best_params = params.copy()
    stopper = EarlyStopping(config.patience)
    needs_selection = reg.active and reg.kind in ACTIVATION_BASED
    iteration = 0

    for epoch in range(1, config.max_epochs + 1):
        losses, regs = [], []
        shuffle = rng.generator(config.seed, rng.SHUFFLE, epoch)
        for idx in _batches(len(xt), config.batch_size, shuffle):
            tape = nncore.Tape()
            # overflow shows up as a non-finite loss below
            with np.errstate(over="ignore", invalid="ignore"):
                logits, capture = nncore.forward(params, xt[idx].T, "train", (config.seed, iteration), tape)
                cce = nncore.cce_loss(tape, logits, yt[idx])
                reg_value = 0.0
                if reg.active:
                    selected = select_neurons(capture, config.sampler) if needs_selection else None
                    r = regularizer_node(reg, capture, selected, tape)
                    reg_value = float(r.value)
                    loss = nncore.add(tape, cce, nncore.scale(tape, r, reg.omega))
                else:
                    loss = cce
            loss_value = float(loss.value)
            if on_batch is not None:
                on_batch(iteration, loss_value, float(cce.value), reg_value)
            if not math.isfinite(loss_value):
                record.status = "diverged"
                record.message = f"non-finite loss at epoch {epoch}, iteration {iteration}"
                break
            grads = nncore.backward(tape, loss)
            nncore.sgd_momentum_step(params, grads, config.learning_rate(iteration), config.momentum)
            losses.append(loss_value)
            regs.append(reg_value)
            iteration += 1
        if record.status != "ok":
            break

        val_acc = nncore.accuracy(params, xv, yv)
        entry = {
            "epoch": epoch,
            "train_loss": float(np.mean(losses)),
            "reg_value": float(np.mean(regs)),
            "val_acc": val_acc,
        }
        if config.track_correlation:
            entry["val_hidden_corr"] = mean_abs_hidden_correlation(params, xv)
        record.epochs.append(entry)
        record.epochs_trained = epoch
        if stopper.update(epoch, val_acc):
            best_params = params.copy()
        if stopper.should_stop(epoch):
            break

    record.wall_time_s = time.perf_counter() - start
    if record.status != "ok":
        record.epochs_trained = len(record.epochs)
        log.warning("run %s diverged: %s", record.run_id, record.message)
        return record
    record.best_epoch = stopper.best_epoch
    record.best_val_acc = stopper.best
    record.test_acc = nncore.accuracy(best_params, xs, ys)
    record.final_test_acc = nncore.accuracy(params, xs, ys)
    record.params = best_params
    log.info("run %s: best val %.4f at epoch %d, test %.4f",
             record.run_id, record.best_val_acc, record.best_epoch, record.test_acc)
    return record


def default_workers() -> int:
    return max(1, int(os.environ.get("PERSREG_WORKERS", "1")))


def _with_omega(base: TrainConfig, omega: float, kind: Optional[str] = None) -> TrainConfig:
    reg = dataclasses.replace(base.regularizer, omega=float(omega), kind=kind or base.regularizer.kind)
    return dataclasses.replace(base, regularizer=reg)


def run_many(configs: Sequence[TrainConfig], workers: Optional[int] = None) -> list[RunRecord]:
    """Train each config, in a process pool when ``workers > 1``; order is preserved."""
    workers = default_workers() if workers is None else workers
    if workers <= 1 or len(configs) <= 1:
        return [train(c) for c in configs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(train, configs))


def sweep(base: TrainConfig, omegas: Sequence[float] = OMEGA_GRID, include_baseline: bool = False,
          workers: Optional[int] = None) -> list[RunRecord]:
    """One run per weight, all with the base seed; the optional baseline is ``kind='none'``."""
    if not len(omegas):
        raise ValueError("omegas must be nonempty")
    configs = []
    if include_baseline:
        configs.append(_with_omega(base, 0.0, "none"))
    configs.extend(_with_omega(base, w) for w in omegas)
    return run_many(configs, workers)


def best_record(records: Sequence[RunRecord]) -> RunRecord:
    ok = [r for r in records if r.ok]
    if not ok:
        raise ValueError("no successful runs to select from")
    return min(ok, key=lambda r: (-r.best_val_acc, r.omega))


def select_best_weight(records: Sequence[RunRecord]) -> tuple[float, float]:
    """``(omega, test_acc)`` of the run with the highest best-validation accuracy; ties go to the smaller omega."""
    r = best_record(records)
    return r.omega, r.test_acc
