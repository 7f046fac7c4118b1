"""Command-line runner: ``kalman-cl {train,resume,eval,compare,sweep}``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, fields
from pathlib import Path

from . import __version__
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data import load_idx, split_tasks, synthetic_split
from .errors import ContractError, KalmanCLError
from .harness import RunReport, SequenceProgress, TrainConfig, compare_runs, evaluate, run_sequence

OUT_ENV = "KALMAN_CL_OUT"
DATASET_KEYS = (
    "dataset", "num_classes", "dim", "train_per_class", "test_per_class",
    "train_images", "train_labels", "test_images", "test_labels",
    "classes_per_task", "hidden",
)
TRAIN_KEYS = tuple(f.name for f in fields(TrainConfig))
CONFIG_KEYS = DATASET_KEYS + TRAIN_KEYS + ("out", "alphas", "jobs")


class UsageError(Exception):
    pass


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _alpha(text: str) -> float:
    value = float(text)
    if not 0.0 < value <= 1.0:
        raise argparse.ArgumentTypeError(f"alpha must lie in (0, 1], got {text}")
    return value


def _alpha_list(text: str) -> list[float]:
    values = [_alpha(a) for a in text.split(",") if a.strip()]
    if not values:
        raise argparse.ArgumentTypeError("alpha list is empty")
    return values


def _dims(text: str) -> list[int]:
    return [_positive_int(d) for d in text.split(",") if d.strip()]


def read_config_file(path: str | Path) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in CONFIG_KEYS:
            raise UsageError(f"{path}:{n}: unrecognised line {line!r}")
        values[key] = value.strip()
    return values


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    d = TrainConfig()
    g = p.add_argument_group("training")
    g.add_argument("--optimizer", choices=["kalman", "sgd"], default=d.optimizer)
    g.add_argument("--alpha", type=_alpha, default=d.alpha, help="long-term memory threshold in (0, 1]")
    g.add_argument("--xi", type=float, default=d.xi, help="gain denominator guard")
    g.add_argument("--learning-rate", "--lr", dest="learning_rate", type=float, default=d.learning_rate)
    g.add_argument("--batch-size", type=_positive_int, default=d.batch_size)
    g.add_argument("--epochs-per-task", "--epochs", dest="epochs_per_task", type=_positive_int, default=d.epochs_per_task)
    g.add_argument("--seed", type=int, default=d.seed)
    g.add_argument("--uncertainty-measure", choices=["abs", "sq"], default=d.uncertainty_measure)
    g.add_argument("--fisher-batch-size", type=_positive_int, default=d.fisher_batch_size)

    g = p.add_argument_group("data")
    g.add_argument("--dataset", choices=["synthetic", "idx"], default="synthetic")
    g.add_argument("--num-classes", type=_positive_int, default=10)
    g.add_argument("--dim", type=_positive_int, default=16, help="synthetic input dimension")
    g.add_argument("--train-per-class", type=_positive_int, default=200)
    g.add_argument("--test-per-class", type=_positive_int, default=50)
    for name in ("train-images", "train-labels", "test-images", "test-labels"):
        g.add_argument(f"--{name}", default=None, help="IDX file (with --dataset idx)")
    g.add_argument("--classes-per-task", type=_positive_int, default=2)
    g.add_argument("--hidden", type=_dims, default=None,
                   help="hidden widths, comma separated (default 64,64 synthetic; 256,256 idx)")


def _add_output_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV} or ./runs)")
    p.add_argument("--force", action="store_true", help="overwrite existing outputs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kalman-cl",
        description="Continual learning on disjoint tasks with a Kalman-filtered optimiser.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("train", help="run a task sequence from scratch", formatter_class=fmt)
    p.add_argument("--config", default=None, help="key=value defaults file")
    _add_run_flags(p)
    _add_output_flags(p)
    p.add_argument("--stop-after", type=_positive_int, default=None,
                   help="stop after this many tasks (resume later from the checkpoint)")

    p = sub.add_parser("resume", help="continue a sequence from a checkpoint", formatter_class=fmt)
    p.add_argument("checkpoint")
    _add_output_flags(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint on every task", formatter_class=fmt)
    p.add_argument("checkpoint")
    _add_output_flags(p)

    p = sub.add_parser("compare", help="compare two report.json files", formatter_class=fmt)
    p.add_argument("report_a")
    p.add_argument("report_b")
    _add_output_flags(p)

    p = sub.add_parser("sweep", help="one run per alpha, plus summary.csv", formatter_class=fmt)
    p.add_argument("--config", default=None, help="key=value defaults file")
    p.add_argument("--alphas", type=_alpha_list, required=True, help="comma-separated alphas")
    p.add_argument("--jobs", type=_positive_int, default=1)
    _add_run_flags(p)
    _add_output_flags(p)
    parser.subcommands = sub.choices
    return parser


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    """Parse flags on top of an optional config file; flags win."""
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        try:
            file_values = read_config_file(args.config)
        except (OSError, UsageError) as exc:
            parser.error(str(exc))
        sub = parser.subcommands[args.command]
        known = {a.dest: a for a in sub._actions}
        defaults = {}
        for key, raw in file_values.items():
            action = known.get(key)
            if action is None:
                parser.error(f"config key {key!r} does not apply to {args.command}")
            try:
                defaults[key] = action.type(raw) if action.type else raw
            except (argparse.ArgumentTypeError, ValueError) as exc:
                parser.error(f"config {key}: {exc}")
            if action.choices is not None and defaults[key] not in action.choices:
                parser.error(f"config {key}: {raw!r} not in {sorted(action.choices)}")
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    if args.command in ("train", "sweep"):
        if args.dataset == "idx":
            missing = [k for k in ("train_images", "train_labels", "test_images", "test_labels")
                       if getattr(args, k) is None]
            if missing:
                parser.error("--dataset idx requires " + ", ".join("--" + m.replace("_", "-") for m in missing))
        try:
            train_config(args)
        except ContractError as exc:
            parser.error(str(exc))
    return args


def train_config(args: argparse.Namespace, **override) -> TrainConfig:
    values = {k: getattr(args, k) for k in TRAIN_KEYS}
    values.update(override)
    return TrainConfig(**values)


def dataset_spec(args: argparse.Namespace) -> dict:
    spec = {k: getattr(args, k) for k in DATASET_KEYS}
    if spec["hidden"] is None:
        spec["hidden"] = [256, 256] if spec["dataset"] == "idx" else [64, 64]
    if spec["dataset"] == "idx":
        for k in ("train_images", "train_labels", "test_images", "test_labels"):
            spec[k] = str(Path(spec[k]).resolve())
    return spec


def build_tasks(spec: dict, seed: int):
    if spec["dataset"] == "idx":
        train = load_idx(spec["train_images"], spec["train_labels"], spec["num_classes"])
        test = load_idx(spec["test_images"], spec["test_labels"], spec["num_classes"])
    else:
        train, test = synthetic_split(
            spec["num_classes"], spec["train_per_class"], spec["test_per_class"], spec["dim"], seed)
    tasks = split_tasks(train, spec["classes_per_task"], test)
    layer_dims = [train.dim, *spec["hidden"], spec["num_classes"]]
    return tasks, layer_dims


def _out_dir(args: argparse.Namespace) -> Path:
    return Path(args.out or os.environ.get(OUT_ENV) or "runs")


def _claim(out: Path, names: list[str], force: bool) -> None:
    out.mkdir(parents=True, exist_ok=True)
    clash = [n for n in names if (out / n).exists()]
    if clash and not force:
        raise KalmanCLError(f"{out} already holds {', '.join(clash)}; pass --force to overwrite")


def _write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


RUN_OUTPUTS = ["report.json", "matrix.csv", "checkpoint.bin"]


def _execute(tasks, layer_dims, config: TrainConfig, spec: dict, out: Path,
             progress: SequenceProgress | None = None, stop_after: int | None = None) -> RunReport:
    ckpt_path = out / "checkpoint.bin"

    def on_task_end(p: SequenceProgress) -> None:
        meta = {"train_config": asdict(config), "dataset": spec,
                "report": p.report.to_dict()}
        save_checkpoint(Checkpoint(p.params.layer_dims, p.state, p.tasks_completed, config.seed, meta), ckpt_path)

    report = run_sequence(tasks, config, layer_dims, progress, on_task_end, stop_after=stop_after)
    _write(out / "report.json", report.to_json())
    _write(out / "matrix.csv", report.matrix_csv())
    return report


def cmd_train(args: argparse.Namespace) -> int:
    out = _out_dir(args)
    _claim(out, RUN_OUTPUTS, args.force)
    config = train_config(args)
    spec = dataset_spec(args)
    tasks, dims = build_tasks(spec, config.seed)
    report = _execute(tasks, dims, config, spec, out, stop_after=args.stop_after)
    _summarise(report, out)
    return 0


def cmd_resume(args: argparse.Namespace) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    config = TrainConfig(**ckpt.meta["train_config"])
    spec = ckpt.meta["dataset"]
    tasks, dims = build_tasks(spec, config.seed)
    if list(ckpt.layer_dims) != dims:
        raise KalmanCLError("checkpoint architecture does not match its dataset settings")
    out = _out_dir(args)
    _claim(out, RUN_OUTPUTS, args.force or Path(args.checkpoint).resolve() == (out / "checkpoint.bin").resolve())
    report = RunReport.from_dict(ckpt.meta["report"])
    progress = SequenceProgress(ckpt.params, ckpt.state, report)
    report = _execute(tasks, dims, config, spec, out, progress=progress)
    _summarise(report, out)
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    config = TrainConfig(**ckpt.meta["train_config"])
    tasks, _ = build_tasks(ckpt.meta["dataset"], config.seed)
    accs = evaluate(ckpt.params, tasks)
    result = {
        "tasks_completed": ckpt.tasks_completed,
        "task_classes": [list(t.active_classes) for t in tasks],
        "accuracy": accs,
    }
    out = _out_dir(args)
    _claim(out, ["eval.json"], args.force)
    _write(out / "eval.json", json.dumps(result, indent=2, sort_keys=True) + "\n")
    for t, acc in zip(tasks, accs):
        print(f"task {t.task_id} classes {list(t.active_classes)}: {acc:.4f}")
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    reports = []
    for path in (args.report_a, args.report_b):
        try:
            reports.append(RunReport.from_dict(json.loads(Path(path).read_text())))
        except (OSError, ValueError, KeyError) as exc:
            raise KalmanCLError(f"cannot read report {path}: {exc}") from exc
    result = compare_runs(*reports)
    out = _out_dir(args)
    _claim(out, ["comparison.json"], args.force)
    _write(out / "comparison.json", json.dumps(result, indent=2, sort_keys=True) + "\n")
    print("stage,average_delta")
    for s, delta in enumerate(result["average_accuracy_delta"], start=1):
        print(f"{s},{delta:+.4f}")
    return 0


def _sweep_one(job):
    alpha, config, spec, out = job
    tasks, dims = build_tasks(spec, config.seed)
    _claim(out, RUN_OUTPUTS, True)
    return alpha, _execute(tasks, dims, config, spec, out).average_curve[-1]


def cmd_sweep(args: argparse.Namespace) -> int:
    out = _out_dir(args)
    names = ["summary.csv"] + [f"alpha_{a!r}" for a in args.alphas]
    _claim(out, names, args.force)
    spec = dataset_spec(args)
    jobs = [(a, train_config(args, alpha=a), spec, out / f"alpha_{a!r}") for a in args.alphas]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_one, jobs))
    else:
        rows = [_sweep_one(j) for j in jobs]
    _write(out / "summary.csv", "alpha,final_avg_acc\n" + "".join(f"{a!r},{v!r}\n" for a, v in rows))
    for a, v in rows:
        print(f"alpha={a}: final average accuracy {v:.4f}")
    return 0


def _summarise(report: RunReport, out: Path) -> None:
    for s, avg in enumerate(report.average_curve, start=1):
        row = " ".join(f"{a:.3f}" for a in report.accuracy_matrix[s - 1])
        print(f"stage {s}: avg {avg:.4f} | {row}")
    print(f"wrote {out}", file=sys.stderr)


COMMANDS = {"train": cmd_train, "resume": cmd_resume, "eval": cmd_eval,
            "compare": cmd_compare, "sweep": cmd_sweep}


def main(argv: list[str] | None = None) -> int:
    args = parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (KalmanCLError, OSError, KeyError) as exc:
        print(f"kalman-cl: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
