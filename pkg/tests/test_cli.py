import csv
import re
from importlib.resources import files

import numpy as np

from persreg import datasets
from persreg.cli import main

TABLE = str(files("persreg").joinpath("data", "table2_accuracies.csv"))


def _write_config(path, **extra):
    body = {
        "hidden_layers": "[6]", "synth_classes": 2, "synth_per_class": 30, "synth_separation": 4.0,
        "batch_size": 16, "max_epochs": 3, "regularizer": "[T1]", "omegas": "[0.01, 0.1]", "seeds": "[0, 1]",
        "output_dir": str(path.parent / "out"),
    }
    body.update(extra)
    path.write_text("".join(f"{k}: {v}\n" for k, v in body.items()))
    return path


def test_unknown_flag_is_usage_error(capsys):
    assert main(["stats", "--bogus"]) == 2
    assert "usage" in capsys.readouterr().err
    assert main([]) == 2


def test_train(tmp_path, capsys):
    cfg = _write_config(tmp_path / "c.yaml")
    assert main(["train", "--config", str(cfg)]) == 0
    rows = list(csv.DictReader(open(tmp_path / "out" / "results.csv")))
    assert [(r["regularizer"], r["seed"]) for r in rows] == [("T1", "0"), ("T1", "1")]
    assert "wrote 2 runs" in capsys.readouterr().out


def test_sweep(tmp_path):
    cfg = _write_config(tmp_path / "c.yaml")
    out = tmp_path / "elsewhere"
    assert main(["sweep", "--config", str(cfg), "--output", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "results.csv")))
    assert len(rows) == 2 * (1 + 2)
    assert [r["regularizer"] for r in rows[:3]] == ["none", "T1", "T1"]
    assert len(list((out / "logs").iterdir())) == 6

    stats_dir = tmp_path / "stats"
    # one network only: not enough for ranking
    assert main(["stats", "--input", str(out / "results.csv"), "--output", str(stats_dir)]) == 2


def test_missing_config_and_dataset_paths(tmp_path, capsys):
    assert main(["train", "--config", str(tmp_path / "none.yaml")]) == 2
    assert "none.yaml" in capsys.readouterr().err
    missing = tmp_path / "mnist_here"
    cfg = _write_config(tmp_path / "c.yaml", dataset="mnist", mnist_dir=str(missing))
    assert main(["train", "--config", str(cfg)]) == 2
    assert str(missing) in capsys.readouterr().err


def test_malformed_config(tmp_path, capsys):
    cfg = _write_config(tmp_path / "c.yaml", colour="blue")
    assert main(["train", "--config", str(cfg)]) == 2
    assert "colour" in capsys.readouterr().err


def test_idx_error_exit_code(tmp_path, capsys):
    d = tmp_path / "mnist"
    d.mkdir()
    for key, stem in datasets.MNIST_FILES.items():
        if key.endswith("images"):
            datasets.write_idx_images(d / stem, np.zeros((3, 2, 2), dtype=np.uint8))
        else:
            datasets.write_idx_images(d / stem, np.zeros((3, 2, 2), dtype=np.uint8))  # wrong magic
    cfg = _write_config(tmp_path / "c.yaml", dataset="mnist", mnist_dir=str(d))
    assert main(["train", "--config", str(cfg)]) == 3
    assert "bad_magic" in capsys.readouterr().err


def test_io_error_exit_code(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    cfg = _write_config(tmp_path / "c.yaml", output_dir=str(blocker / "sub"))
    assert main(["train", "--config", str(cfg)]) == 4
    assert main(["stats", "--input", TABLE, "--output", str(blocker / "sub")]) == 4


def test_stats_outputs(tmp_path, capsys):
    assert main(["stats", "--input", TABLE, "--output", str(tmp_path)]) == 0
    for name in ("ranks.csv", "friedman.txt", "nemenyi.csv", "accuracy_table.csv"):
        assert (tmp_path / name).exists()
    text = (tmp_path / "friedman.txt").read_text()
    assert "friedman_chi2" in text and "iman_davenport_f" in text
    nem = list(csv.reader(open(tmp_path / "nemenyi.csv")))
    assert nem[0][1:] == ["none", "T1", "T2", "L1", "L2", "C"] and nem[1][1] == ""
    out = capsys.readouterr().out
    assert "Friedman chi-square" in out and "Iman-Davenport" in out


def test_stats_reports_published_friedman_p(tmp_path, capsys):
    assert main(["stats", "--input", TABLE, "--output", str(tmp_path)]) == 0
    p_values = [float(v) for v in re.findall(r"p = ([0-9.e+-]+)", capsys.readouterr().out)]
    assert any(0.9e-5 <= p <= 1.2e-5 for p in p_values), p_values


def test_stats_missing_input(tmp_path, capsys):
    assert main(["stats", "--input", str(tmp_path / "x.csv"), "--output", str(tmp_path)]) == 2
    assert "x.csv" in capsys.readouterr().err


def test_cd_diagram(tmp_path, capsys):
    assert main(["cd-diagram", "--input", TABLE, "--alpha", "0.05"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("# cd-diagram alpha=0.05")
    assert len([line for line in out.splitlines() if not line.startswith("#")]) == 7
    target = tmp_path / "cd.txt"
    assert main(["cd-diagram", "--input", TABLE, "--output", str(target)]) == 0
    assert target.read_text() == out
    assert main(["cd-diagram", "--input", TABLE, "--alpha", "2"]) == 2


def test_verify_clean_build(capsys):
    code = main(["verify"])
    out = capsys.readouterr().out
    assert "checks passed" in out
    assert code == 0, out
