"""Command-line entry points.

Five subcommands cover the full experiment cycle:

    gen-data   synthesize a train/test CSV pair plus a manifest
    train      fit a model on the training split
    unlearn    apply contrastive unlearning or a baseline to a checkpoint
    eval       accuracy report and embedding geometry for a checkpoint
    mia        membership-inference attack report for a checkpoint

Commands read an optional JSON config; command-line flags override it.
Every command writes its fully-resolved configuration (defaults
materialized) into the output directory, and re-running from that
echoed file reproduces the outputs bit-exactly apart from wall-clock
fields. Exit codes: 0 success, 2 invalid configuration or arguments,
3 runtime failure.
"""
from __future__ import annotations

import argparse
import copy
import json
import sys
from pathlib import Path

from .data import (
    Dataset,
    TaskSpec,
    UnlearnTask,
    generate_synthetic,
    load_csv,
    make_task,
    save_csv,
    standardize_pair,
)
from .engine import (
    EngineConfig,
    retrain,
    train,
    unlearn_contrastive,
    unlearn_finetune,
    unlearn_neggrad,
)
from .errors import ParseError, UnlearnLabError, ValidationError
from .evaluation import embedding_geometry, evaluate, run_mia
from .losses import LossConfig
from .model import ModelArchitecture, load_checkpoint, save_checkpoint
from . import __version__

METHODS = ("contrastive", "retrain", "finetune", "neggrad")

_SYNTHETIC_DEFAULTS = {
    "num_classes": 4,
    "dim": 8,
    "per_class_train": 500,
    "per_class_test": 100,
    "spread": 1.0,
    "seed": 0,
}

_CSV_DEFAULTS = {"train": None, "test": None, "standardize": True}

_DEFAULTS = {
    "dataset": {"synthetic": dict(_SYNTHETIC_DEFAULTS)},
    "architecture": {"hidden": [32, 32], "embedding_dim": 16, "activation": "relu"},
    "engine": {
        "batch_size": 64,
        "remaining_resamples": 2,
        "learning_rate": 0.05,
        "max_epochs": 60,
        "max_unlearn_epochs": 50,
        "termination_every": 1,
        "seed": 0,
        "divergence_factor": 10.0,
        "anchor_resample_limit": 8,
    },
    "loss": {"temperature": 0.5, "unlearn_weight": 1.0, "ce_weight": 1.0},
    "task": None,
    "unlearn": {"method": "contrastive", "from": None},
    "eval": {"model": None, "reference": None},
    "mia": {"model": None, "split_seed": 0},
    "output_dir": "out",
}

_TASK_KEYS = {"kind", "class_id", "count", "seed", "index_file"}


def _load_json(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    try:
        loaded = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(loaded, dict):
        raise ValidationError(f"{path}: config must be a JSON object")
    return loaded


def _merge_section(defaults: dict, user, section: str, problems: list[str]) -> dict:
    if user is None:
        return copy.deepcopy(defaults)
    if not isinstance(user, dict):
        problems.append(f"{section}: must be an object")
        return copy.deepcopy(defaults)
    merged = copy.deepcopy(defaults)
    for key, value in user.items():
        if key not in defaults:
            problems.append(f"{section}.{key}: unknown field")
        else:
            merged[key] = value
    return merged


def resolve_config(user: dict) -> dict:
    """Materialize defaults and reject unknown fields, all at once."""
    problems: list[str] = []
    config = copy.deepcopy(_DEFAULTS)
    for key in user:
        if key not in _DEFAULTS:
            problems.append(f"{key}: unknown section")

    dataset = user.get("dataset")
    if dataset is not None:
        if not isinstance(dataset, dict) or set(dataset) - {"synthetic", "csv"}:
            problems.append("dataset: must contain only 'synthetic' or 'csv'")
        elif len(dataset) != 1:
            problems.append("dataset: exactly one of 'synthetic' or 'csv' is required")
        elif "synthetic" in dataset:
            config["dataset"] = {
                "synthetic": _merge_section(
                    _SYNTHETIC_DEFAULTS, dataset["synthetic"], "dataset.synthetic", problems
                )
            }
        else:
            csv_cfg = _merge_section(_CSV_DEFAULTS, dataset["csv"], "dataset.csv", problems)
            if not csv_cfg.get("train") or not csv_cfg.get("test"):
                problems.append("dataset.csv: both 'train' and 'test' paths are required")
            config["dataset"] = {"csv": csv_cfg}

    for section in ("architecture", "engine", "loss", "unlearn", "eval", "mia"):
        config[section] = _merge_section(
            _DEFAULTS[section], user.get(section), section, problems
        )

    task = user.get("task")
    if task is not None:
        if not isinstance(task, dict):
            problems.append("task: must be an object")
        else:
            for key in set(task) - _TASK_KEYS:
                problems.append(f"task.{key}: unknown field")
            merged = {"kind": None, "class_id": None, "count": None, "seed": 0, "index_file": None}
            merged.update({k: v for k, v in task.items() if k in _TASK_KEYS})
            if merged["kind"] not in ("class", "sample"):
                problems.append("task.kind: must be 'class' or 'sample'")
            elif merged["kind"] == "class" and merged["class_id"] is None:
                problems.append("task.class_id: required for a class task")
            elif merged["kind"] == "sample" and merged["count"] is None and merged["index_file"] is None:
                problems.append("task.count or task.index_file: required for a sample task")
            config["task"] = merged

    if "output_dir" in user:
        if not isinstance(user["output_dir"], str) or not user["output_dir"]:
            problems.append("output_dir: must be a non-empty string")
        else:
            config["output_dir"] = user["output_dir"]

    if problems:
        raise ValidationError(
            "invalid config: " + "; ".join(problems), problems
        )
    return config


def _resolve_from_args(args, need_task: bool = False) -> dict:
    user = _load_json(args.config) if args.config else {}
    config = resolve_config(user)
    if args.out:
        config["output_dir"] = args.out
    if args.seed is not None:
        config["engine"]["seed"] = args.seed
    if need_task and config["task"] is None:
        raise ValidationError("this command requires a 'task' section in the config", ["task"])
    return config


def _echo_config(config: dict, out_dir: Path, name: str = "config.echo.json") -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / name).write_text(json.dumps(config, indent=2, sort_keys=True) + "\n")


def _build_datasets(config: dict) -> tuple[Dataset, Dataset]:
    dataset = config["dataset"]
    if "synthetic" in dataset:
        s = dataset["synthetic"]
        return generate_synthetic(
            num_classes=int(s["num_classes"]),
            dim=int(s["dim"]),
            per_class_train=int(s["per_class_train"]),
            per_class_test=int(s["per_class_test"]),
            spread=float(s["spread"]),
            seed=int(s["seed"]),
        )
    c = dataset["csv"]
    train_ds = load_csv(c["train"])
    test_ds = load_csv(c["test"])
    if bool(c["standardize"]):
        train_ds, test_ds = standardize_pair(train_ds, test_ds)
    return train_ds, test_ds


def _build_arch(config: dict, train_ds: Dataset) -> ModelArchitecture:
    a = config["architecture"]
    return ModelArchitecture(
        input_dim=train_ds.num_features,
        hidden=tuple(int(h) for h in a["hidden"]),
        embedding_dim=int(a["embedding_dim"]),
        num_classes=train_ds.num_classes,
        activation=str(a["activation"]),
    )


def _read_index_file(path: str) -> tuple[int, ...]:
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    indices = []
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            indices.append(int(line))
        except ValueError as exc:
            raise ParseError(f"{path}: line {lineno}: {exc}") from exc
    return tuple(indices)


def _build_task(config: dict, train_ds: Dataset, test_ds: Dataset) -> UnlearnTask:
    t = config["task"]
    if t["kind"] == "class":
        spec = TaskSpec(kind="class", class_id=int(t["class_id"]), seed=int(t["seed"]))
    elif t["index_file"]:
        spec = TaskSpec(
            kind="sample",
            sample_indices=_read_index_file(t["index_file"]),
            seed=int(t["seed"]),
        )
    else:
        spec = TaskSpec(kind="sample", sample_count=int(t["count"]), seed=int(t["seed"]))
    return make_task(train_ds, test_ds, spec)


def _build_engine_cfg(config: dict, variant: str) -> EngineConfig:
    e = config["engine"]
    l = config["loss"]
    return EngineConfig(
        batch_size=int(e["batch_size"]),
        remaining_resamples=int(e["remaining_resamples"]),
        learning_rate=float(e["learning_rate"]),
        max_epochs=int(e["max_epochs"]),
        max_unlearn_epochs=int(e["max_unlearn_epochs"]),
        termination_every=int(e["termination_every"]),
        seed=int(e["seed"]),
        loss=LossConfig(
            temperature=float(l["temperature"]),
            unlearn_weight=float(l["unlearn_weight"]),
            ce_weight=float(l["ce_weight"]),
            variant=variant,
        ),
        divergence_factor=float(e["divergence_factor"]),
        anchor_resample_limit=int(e["anchor_resample_limit"]),
    )


def _load_model_for(config: dict, train_ds: Dataset, path: str):
    params = load_checkpoint(path)
    expected = _build_arch(config, train_ds)
    if params.arch != expected:
        raise ValidationError(
            f"checkpoint architecture {params.arch} does not match config {expected}"
        )
    return params


def cmd_gen_data(args) -> int:
    config = _resolve_from_args(args)
    synth = dict(config["dataset"].get("synthetic") or _SYNTHETIC_DEFAULTS)
    for flag, key in (
        ("classes", "num_classes"),
        ("dim", "dim"),
        ("train_per_class", "per_class_train"),
        ("test_per_class", "per_class_test"),
        ("spread", "spread"),
    ):
        value = getattr(args, flag)
        if value is not None:
            synth[key] = value
    if args.seed is not None:
        synth["seed"] = args.seed
    config["dataset"] = {"synthetic": synth}

    out_dir = Path(config["output_dir"])
    _echo_config(config, out_dir)
    train_ds, test_ds = _build_datasets(config)
    save_csv(train_ds, out_dir / "train.csv")
    save_csv(test_ds, out_dir / "test.csv")
    manifest = {
        "command": "gen-data",
        "parameters": synth,
        "files": {"train": "train.csv", "test": "test.csv"},
        "rows": {"train": len(train_ds), "test": len(test_ds)},
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(train_ds)} train and {len(test_ds)} test rows to {out_dir}")
    return 0


def cmd_train(args) -> int:
    config = _resolve_from_args(args)
    out_dir = Path(config["output_dir"])
    _echo_config(config, out_dir)
    train_ds, _ = _build_datasets(config)
    arch = _build_arch(config, train_ds)
    cfg = _build_engine_cfg(config, variant="sample")
    params, record = train(arch, train_ds, cfg)
    save_checkpoint(params, out_dir / "model.ckpt")
    record.write_json(out_dir / "run.json")
    last = record.rows[-1] if record.rows else {}
    print(
        f"trained {record.gradient_steps} steps; "
        f"train accuracy {last.get('train_accuracy', float('nan')):.4f}; "
        f"saved {out_dir / 'model.ckpt'}"
    )
    return 0


def cmd_unlearn(args) -> int:
    config = _resolve_from_args(args, need_task=True)
    if args.method:
        config["unlearn"]["method"] = args.method
    if getattr(args, "from_ckpt", None):
        config["unlearn"]["from"] = args.from_ckpt
    method = config["unlearn"]["method"]
    if method not in METHODS:
        raise ValidationError(f"unlearn.method must be one of {METHODS}", ["unlearn.method"])

    out_dir = Path(config["output_dir"])
    _echo_config(config, out_dir)
    train_ds, test_ds = _build_datasets(config)
    task = _build_task(config, train_ds, test_ds)
    cfg = _build_engine_cfg(config, variant=task.kind)
    arch = _build_arch(config, train_ds)

    if method == "retrain":
        if config["unlearn"]["from"]:
            print("note: retrain ignores the starting checkpoint", file=sys.stderr)
        params, record = retrain(arch, task, cfg)
    else:
        if not config["unlearn"]["from"]:
            raise ValidationError(
                f"method {method} requires a starting checkpoint (unlearn.from or --from)",
                ["unlearn.from"],
            )
        start = _load_model_for(config, train_ds, config["unlearn"]["from"])
        runner = {
            "contrastive": unlearn_contrastive,
            "finetune": unlearn_finetune,
            "neggrad": unlearn_neggrad,
        }[method]
        params, record = runner(start, task, cfg)

    save_checkpoint(params, out_dir / "model.ckpt")
    record.write_json(out_dir / "run.json")
    print(
        f"{method}: {record.termination_reason}"
        + (f" ({record.termination_detail})" if record.termination_detail else "")
        + f" after {record.gradient_steps} steps; saved {out_dir / 'model.ckpt'}"
    )
    return 0


def cmd_eval(args) -> int:
    config = _resolve_from_args(args, need_task=True)
    if args.model:
        config["eval"]["model"] = args.model
    if args.reference:
        config["eval"]["reference"] = args.reference
    if not config["eval"]["model"]:
        raise ValidationError("eval requires a model checkpoint (eval.model or --model)", ["eval.model"])

    out_dir = Path(config["output_dir"])
    _echo_config(config, out_dir)
    train_ds, test_ds = _build_datasets(config)
    task = _build_task(config, train_ds, test_ds)
    params = _load_model_for(config, train_ds, config["eval"]["model"])
    reference = None
    if config["eval"]["reference"]:
        reference = _load_model_for(config, train_ds, config["eval"]["reference"])

    report = evaluate(params, task, reference)
    report.write_json(out_dir / "eval.json")
    geometry = embedding_geometry(params, task)
    geometry.write_csv(out_dir / "geometry.csv")
    parts = ", ".join(f"{k}={v:.4f}" for k, v in sorted(report.accuracies.items()))
    print(f"eval ({task.kind}): {parts}; wrote {out_dir / 'eval.json'}")
    return 0


def cmd_mia(args) -> int:
    config = _resolve_from_args(args, need_task=True)
    if args.model:
        config["mia"]["model"] = args.model
    if not config["mia"]["model"]:
        raise ValidationError("mia requires a model checkpoint (mia.model or --model)", ["mia.model"])

    out_dir = Path(config["output_dir"])
    _echo_config(config, out_dir)
    train_ds, test_ds = _build_datasets(config)
    task = _build_task(config, train_ds, test_ds)
    params = _load_model_for(config, train_ds, config["mia"]["model"])
    report = run_mia(params, task, split_seed=int(config["mia"]["split_seed"]))
    report.write_json(out_dir / "mia.json")
    print(
        f"mia: member rate {report.member_rate_unlearn:.4f} on unlearning samples, "
        f"{report.member_rate_heldout_members:.4f} on held-out members; "
        f"wrote {out_dir / 'mia.json'}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="unlearnlab",
        description="Contrastive machine unlearning with verification.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="seed override")

    p = sub.add_parser("gen-data", help="generate a synthetic CSV dataset")
    common(p)
    p.add_argument("--classes", type=int, help="number of classes")
    p.add_argument("--dim", type=int, help="feature dimension")
    p.add_argument("--train-per-class", type=int, dest="train_per_class")
    p.add_argument("--test-per-class", type=int, dest="test_per_class")
    p.add_argument("--spread", type=float, help="class separation multiplier")
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="train a model")
    common(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("unlearn", help="unlearn a class or sample set")
    common(p)
    p.add_argument("--method", choices=METHODS, help="unlearning method")
    p.add_argument("--from", dest="from_ckpt", help="starting checkpoint")
    p.set_defaults(fn=cmd_unlearn)

    p = sub.add_parser("eval", help="accuracy report and embedding geometry")
    common(p)
    p.add_argument("--model", help="checkpoint to evaluate")
    p.add_argument("--reference", help="reference checkpoint for deltas")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("mia", help="membership-inference attack report")
    common(p)
    p.add_argument("--model", help="checkpoint to attack")
    p.set_defaults(fn=cmd_mia)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValidationError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except UnlearnLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


def entrypoint() -> None:
    sys.exit(main())
