import json

import pytest

from kalman_cl.cli import main, parse_args

FAST = ["--train-per-class", "12", "--test-per-class", "4", "--epochs", "1", "--hidden", "8"]


def run(*argv):
    return main([str(a) for a in argv])


def test_help_exits_zero(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    assert "train" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [
    ["train", "--alpha", "1.5"],
    ["train", "--alpha", "0"],
    ["train", "--bogus"],
    ["train", "--dataset", "idx"],
    ["train", "--lr", "-1"],
    ["sweep", "--alphas", ""],
    [],
])
def test_usage_errors_exit_2(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2


def test_config_file_then_flags(tmp_path):
    cfg = tmp_path / "run.conf"
    cfg.write_text("# defaults\nalpha = 0.2\nseed=7\nbatch-size = 4  # trailing\n")
    args = parse_args(["train", "--config", str(cfg), "--seed", "9"])
    assert args.alpha == 0.2 and args.batch_size == 4 and args.seed == 9


@pytest.mark.parametrize("text", ["nonsense\n", "alpha = 2\n", "optimizer = adam\n", "colour = red\n"])
def test_bad_config_file(tmp_path, text):
    cfg = tmp_path / "bad.conf"
    cfg.write_text(text)
    with pytest.raises(SystemExit) as exc:
        parse_args(["train", "--config", str(cfg)])
    assert exc.value.code == 2


def test_train_writes_artifacts_deterministically(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("train", *FAST, "--out", a) == 0
    assert run("train", *FAST, "--out", b) == 0
    assert sorted(p.name for p in a.iterdir()) == ["checkpoint.bin", "matrix.csv", "report.json"]
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
    assert (a / "checkpoint.bin").read_bytes() == (b / "checkpoint.bin").read_bytes()
    report = json.loads((a / "report.json").read_text())
    assert len(report["accuracy_matrix"]) == 5
    assert (a / "matrix.csv").read_text().count("\n") == 16


def test_refuses_to_overwrite(tmp_path, capsys):
    assert run("train", *FAST, "--out", tmp_path) == 0
    assert run("train", *FAST, "--out", tmp_path) == 1
    assert "--force" in capsys.readouterr().err
    assert run("train", *FAST, "--out", tmp_path, "--force") == 0


def test_out_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("KALMAN_CL_OUT", str(tmp_path / "env"))
    assert run("train", *FAST) == 0
    assert (tmp_path / "env" / "report.json").exists()


def test_stop_then_resume_matches_full_run(tmp_path):
    assert run("train", *FAST, "--out", tmp_path / "full") == 0
    assert run("train", *FAST, "--out", tmp_path / "part", "--stop-after", "2") == 0
    part = json.loads((tmp_path / "part" / "report.json").read_text())
    assert len(part["accuracy_matrix"]) == 2
    assert run("resume", tmp_path / "part" / "checkpoint.bin", "--out", tmp_path / "part") == 0
    assert (tmp_path / "part" / "report.json").read_bytes() == (tmp_path / "full" / "report.json").read_bytes()
    assert (tmp_path / "part" / "checkpoint.bin").read_bytes() == (tmp_path / "full" / "checkpoint.bin").read_bytes()


def test_eval_and_compare(tmp_path, capsys):
    assert run("train", *FAST, "--out", tmp_path / "k") == 0
    assert run("train", *FAST, "--optimizer", "sgd", "--out", tmp_path / "s") == 0
    assert run("eval", tmp_path / "k" / "checkpoint.bin", "--out", tmp_path / "e") == 0
    ev = json.loads((tmp_path / "e" / "eval.json").read_text())
    rep = json.loads((tmp_path / "k" / "report.json").read_text())
    assert ev["accuracy"] == rep["final_accuracies"]
    assert run("compare", tmp_path / "k" / "report.json", tmp_path / "s" / "report.json", "--out", tmp_path / "c") == 0
    cmp = json.loads((tmp_path / "c" / "comparison.json").read_text())
    assert cmp["a"] == "kalman" and cmp["b"] == "sgd" and len(cmp["average_accuracy_delta"]) == 5
    assert "stage,average_delta" in capsys.readouterr().out


def test_runtime_failures_exit_1(tmp_path):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"garbage")
    assert run("eval", bad, "--out", tmp_path) == 1
    assert run("compare", bad, bad, "--out", tmp_path) == 1
    missing = ["--train-images", tmp_path / "x", "--train-labels", tmp_path / "y",
               "--test-images", tmp_path / "x", "--test-labels", tmp_path / "y"]
    assert run("train", "--dataset", "idx", *missing, "--out", tmp_path / "o") == 1


@pytest.mark.parametrize("jobs", ["1", "2"])
def test_sweep_summary(tmp_path, jobs):
    assert run("sweep", *FAST, "--alphas", "0.1,0.5", "--jobs", jobs, "--out", tmp_path) == 0
    lines = (tmp_path / "summary.csv").read_text().splitlines()
    assert lines[0] == "alpha,final_avg_acc"
    assert [line.split(",")[0] for line in lines[1:]] == ["0.1", "0.5"]
    assert (tmp_path / "alpha_0.1" / "report.json").exists()
    assert json.loads((tmp_path / "alpha_0.5" / "report.json").read_text())["config"]["alpha"] == 0.5


def test_train_on_idx_files(tmp_path):
    import numpy as np
    from test_data import idx_images, idx_labels

    gen = np.random.default_rng(0)
    labels = np.repeat(np.arange(10), 3)
    for split in ("train", "test"):
        (tmp_path / f"{split}-img").write_bytes(idx_images(gen.integers(0, 256, size=(30, 2, 2))))
        (tmp_path / f"{split}-lab").write_bytes(idx_labels(labels))
    argv = ["train", "--dataset", "idx", "--epochs", "1", "--hidden", "5", "--out", tmp_path / "run"]
    for split in ("train", "test"):
        argv += [f"--{split}-images", tmp_path / f"{split}-img", f"--{split}-labels", tmp_path / f"{split}-lab"]
    assert run(*argv) == 0
    report = json.loads((tmp_path / "run" / "report.json").read_text())
    assert report["layer_dims"] == [4, 5, 10]
    assert run("eval", tmp_path / "run" / "checkpoint.bin", "--out", tmp_path / "ev") == 0


def test_shipped_config_matches_builtin_defaults():
    from pathlib import Path

    conf = Path(__file__).resolve().parents[1] / "configs" / "desk.conf"
    from kalman_cl.cli import dataset_spec, train_config

    shipped, builtin = parse_args(["train", "--config", str(conf)]), parse_args(["train"])
    assert train_config(shipped) == train_config(builtin)
    assert dataset_spec(shipped) == dataset_spec(builtin)
