"""Command-line interface.

Exit codes: 0 success, 1 failed checks or runs, 2 usage/config errors
(including missing paths), 3 malformed IDX files, 4 IO failures.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import results, stats, trainer, verify
from .config import ConfigError, ExperimentConfig, load_config
from .datasets import IdxError

EXIT_OK, EXIT_FAILED, EXIT_USAGE, EXIT_IDX, EXIT_IO = 0, 1, 2, 3, 4


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="persreg", description="Topologically regularized MLP training and evaluation.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="one run per regularizer kind and seed at the configured omega")
    t.add_argument("--config", required=True)
    t.add_argument("--output", help="overrides output_dir from the config")

    s = sub.add_parser("sweep", help="sweep omega for every regularizer kind and seed")
    s.add_argument("--config", required=True)
    s.add_argument("--output", help="overrides output_dir from the config")

    st = sub.add_parser("stats", help="ranks, Friedman and Nemenyi from an accuracy table or results CSV")
    st.add_argument("--input", required=True)
    st.add_argument("--output", required=True)

    cd = sub.add_parser("cd-diagram", help="critical-difference diagram data")
    cd.add_argument("--input", required=True)
    cd.add_argument("--alpha", type=float, default=0.05)
    cd.add_argument("--output", help="write the diagram data here instead of stdout")

    sub.add_parser("verify", help="run oracle, gradient and fixture checks")
    return p


def _load_table(path: str) -> stats.AccuracyTable:
    if not Path(path).exists():
        raise FileNotFoundError(path)
    if results.is_results_csv(path):
        return results.accuracy_table(results.read_results_csv(path))
    return stats.read_accuracy_csv(path)


def _run_configs(cfg: ExperimentConfig, sweep: bool, output: Optional[str]) -> int:
    dataset = cfg.load_dataset()
    configs = []
    for seed in cfg.seeds:
        if sweep and cfg.include_baseline and "none" not in cfg.regularizer:
            configs.append(cfg.train_config(dataset, "none", 0.0, seed))
        for kind in cfg.regularizer:
            if kind == "none":
                configs.append(cfg.train_config(dataset, "none", 0.0, seed))
                continue
            for omega in (cfg.omegas if sweep else [cfg.omega]):
                configs.append(cfg.train_config(dataset, kind, omega, seed))
    out_dir = results.ensure_writable(output or cfg.output_dir)
    workers = trainer.default_workers() if "PERSREG_WORKERS" in os.environ else cfg.workers
    records = trainer.run_many(configs, workers)
    csv_path = results.write_results(records, out_dir)
    failed = [r for r in records if not r.ok]
    for r in records:
        acc = "diverged" if not r.ok else f"val {r.best_val_acc:.4f} test {r.test_acc:.4f}"
        print(f"{r.network_id} {r.regularizer} omega={r.omega:g} seed={r.seed}: {acc} ({r.epochs_trained} epochs)")
    print(f"wrote {len(records)} runs to {csv_path}")
    return EXIT_FAILED if failed else EXIT_OK


def _stats(args) -> int:
    table = _load_table(args.input)
    ranks = stats.rank_table(table)
    fr = stats.friedman(ranks)
    p = stats.nemenyi(ranks)
    out = results.ensure_writable(args.output)
    try:
        (out / "accuracy_table.csv").write_text(stats.format_accuracy_csv(table))
        (out / "ranks.csv").write_text(stats.format_rank_csv(ranks))
        (out / "nemenyi.csv").write_text(stats.format_matrix_csv(ranks.methods, p))
        (out / "friedman.txt").write_text(
            f"k={ranks.k} n={ranks.n}\n"
            f"friedman_chi2={fr.chi2:.17g} df={fr.df_num} p={fr.chi2_p:.17g}\n"
            f"iman_davenport_f={fr.iman_davenport_f:.17g} df=({fr.df_num},{fr.df_den}) p={fr.iman_davenport_p:.17g}\n"
        )
    except OSError as exc:
        raise results.ResultsIOError(f"cannot write statistics under {out}: {exc}") from exc
    for m, r in zip(ranks.methods, ranks.average_ranks):
        print(f"average rank {m}: {r:.3f}")
    print(f"Friedman chi-square: {fr.chi2:.4f}, p = {fr.chi2_p:.3g}")
    print(f"Iman-Davenport F({fr.df_num}, {fr.df_den}) = {fr.iman_davenport_f:.4f}, p = {fr.iman_davenport_p:.3g}")
    return EXIT_OK


def _cd_diagram(args) -> int:
    if not 0 < args.alpha < 1:
        raise ConfigError("--alpha must lie in (0, 1)")
    cd = stats.cd_diagram_data(stats.rank_table(_load_table(args.input)), args.alpha)
    text = cd.to_text()
    if args.output:
        try:
            Path(args.output).write_text(text)
        except OSError as exc:
            raise results.ResultsIOError(f"cannot write {args.output}: {exc}") from exc
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _verify(args) -> int:
    checks = verify.run_all()
    for c in checks:
        print(c.line())
    n_pass = sum(c.passed for c in checks)
    print(f"{n_pass}/{len(checks)} checks passed")
    return EXIT_OK if n_pass == len(checks) else EXIT_FAILED


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command in ("train", "sweep"):
            return _run_configs(load_config(args.config), args.command == "sweep", args.output)
        if args.command == "stats":
            return _stats(args)
        if args.command == "cd-diagram":
            return _cd_diagram(args)
        return _verify(args)
    except IdxError as exc:
        print(f"persreg: IDX error ({exc.code}): {exc}", file=sys.stderr)
        return EXIT_IDX
    except FileNotFoundError as exc:
        print(f"persreg: path does not exist: {exc.filename or exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, ValueError) as exc:
        print(f"persreg: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"persreg: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
