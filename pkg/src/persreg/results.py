"""Persistence of run records: results CSV, JSON-lines epoch logs, checkpoints."""
from __future__ import annotations

import csv
import io
import json
import os
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .nncore import MLPSpec, Params
from .stats import AccuracyTable
from .trainer import RunRecord, best_record

RESULT_COLUMNS = [
    "network_id", "regularizer", "omega", "seed", "best_val_acc", "test_acc",
    "epochs_trained", "wall_time_s", "status", "best_epoch", "final_test_acc", "config_digest", "message",
]
FLOAT_COLUMNS = ("omega", "best_val_acc", "test_acc", "wall_time_s", "final_test_acc")
INT_COLUMNS = ("seed", "epochs_trained", "best_epoch")


class ResultsIOError(OSError):
    pass


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _row(record: RunRecord) -> dict:
    return {col: _fmt(getattr(record, col)) for col in RESULT_COLUMNS}


def format_results_csv(records: Iterable[RunRecord], exclude: Sequence[str] = ()) -> str:
    cols = [c for c in RESULT_COLUMNS if c not in exclude]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in records:
        row = _row(r)
        w.writerow([row[c] for c in cols])
    return buf.getvalue()


def save_checkpoint(path, params: Params) -> None:
    spec = params.spec
    meta = json.dumps({"input_dim": spec.input_dim, "hidden_layers": list(spec.hidden_layers),
                       "output_dim": spec.output_dim, "dropout_prob": spec.dropout_prob})
    arrays = {f"w{i}": w for i, w in enumerate(params.weights)}
    arrays.update({f"b{i}": b for i, b in enumerate(params.biases)})
    np.savez(path, spec=np.array(meta), **arrays)


def load_checkpoint(path) -> Params:
    with np.load(path) as data:
        meta = json.loads(str(data["spec"]))
        spec = MLPSpec(meta["input_dim"], tuple(meta["hidden_layers"]), meta["output_dim"],
                       dropout_prob=meta["dropout_prob"])
        n = spec.n_layers
        return Params(spec, [data[f"w{i}"].copy() for i in range(n)], [data[f"b{i}"].copy() for i in range(n)])


def write_results(records: Sequence[RunRecord], out_dir) -> Path:
    """Write ``results.csv``, ``logs/<run>.jsonl``, ``checkpoints/<run>.npz`` and ``digests.txt``.

    Returns the CSV path.
    """
    out = Path(out_dir)
    try:
        (out / "logs").mkdir(parents=True, exist_ok=True)
        (out / "checkpoints").mkdir(exist_ok=True)
        csv_path = out / "results.csv"
        csv_path.write_text(format_results_csv(records))
        with open(out / "digests.txt", "w") as f:
            for r in records:
                f.write(f"{r.run_id}\t{r.config_digest}\n")
        for r in records:
            with open(out / "logs" / f"{r.run_id}.jsonl", "w") as f:
                for entry in r.epochs:
                    f.write(json.dumps(entry) + "\n")
            if r.params is not None:
                save_checkpoint(out / "checkpoints" / f"{r.run_id}.npz", r.params)
    except OSError as exc:
        raise ResultsIOError(f"cannot write results under {out}: {exc}") from exc
    return csv_path


def _parse_row(row: dict) -> RunRecord:
    values = {}
    for col in RESULT_COLUMNS:
        cell = row.get(col, "")
        if col in FLOAT_COLUMNS:
            values[col] = float(cell) if cell != "" else None
        elif col in INT_COLUMNS:
            values[col] = int(cell) if cell != "" else 0
        else:
            values[col] = cell
    if values["wall_time_s"] is None:
        values["wall_time_s"] = 0.0
    return RunRecord(**values)


def read_results_csv(path) -> list[RunRecord]:
    with open(path, newline="") as f:
        lines = [line for line in f if line.strip() and not line.startswith("#")]
    return [_parse_row(row) for row in csv.DictReader(lines)]


def read_results(out_dir) -> list[RunRecord]:
    """Records from :func:`write_results` output, epoch logs included."""
    out = Path(out_dir)
    records = read_results_csv(out / "results.csv")
    for r in records:
        log_path = out / "logs" / f"{r.run_id}.jsonl"
        if log_path.exists():
            with open(log_path) as f:
                r.epochs = [json.loads(line) for line in f if line.strip()]
    return records


def accuracy_table(records: Sequence[RunRecord]) -> AccuracyTable:
    """Best-validation-weight test accuracy per (regularizer, network).

    Seeds of the same (network, regularizer, omega) are averaged before the
    weight is chosen.
    """
    groups: dict[tuple, list[RunRecord]] = defaultdict(list)
    methods, networks = [], []
    for r in records:
        if r.regularizer not in methods:
            methods.append(r.regularizer)
        if r.network_id not in networks:
            networks.append(r.network_id)
        if r.ok:
            groups[(r.network_id, r.regularizer, r.omega)].append(r)
    acc = np.full((len(methods), len(networks)), np.nan)
    for i, m in enumerate(methods):
        for j, net in enumerate(networks):
            pooled = []
            for (n, reg, omega), rs in groups.items():
                if n == net and reg == m:
                    pooled.append(RunRecord(
                        "", net, m, omega, 0,
                        best_val_acc=float(np.mean([r.best_val_acc for r in rs])),
                        test_acc=float(np.mean([r.test_acc for r in rs])),
                    ))
            if pooled:
                acc[i, j] = best_record(pooled).test_acc
    return AccuracyTable(methods, networks, acc)


def is_results_csv(path) -> bool:
    with open(path, newline="") as f:
        for line in f:
            if line.strip() and not line.startswith("#"):
                return line.split(",")[0].strip() == "network_id"
    return False


def ensure_writable(out_dir) -> Path:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ResultsIOError(f"cannot create {out}: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise ResultsIOError(f"{out} is not writable")
    return out
