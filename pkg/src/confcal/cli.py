"""Command line entry points and reproducible run manifests.

Every data-producing command resolves its flags, writes a manifest (resolved
flags, sha256 digests of inputs, seed, kernel backend) next to its primary
output, then runs. ``rerun`` replays a manifest and reproduces the original
output files byte for byte, re-executing under the recorded kernel backend
if the current one differs.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import subprocess
import sys

import numpy as np

from . import __version__, calibration, confidence, dataset, kernels, trainer
from .dataset import DataFormatError
from .smoothing import SmoothingConfig
from .trainer import CurriculumParams, TrainConfig, TrainingDivergedError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

OUT_DIR_ENV = "CONFCAL_OUT_DIR"


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _type_error(msg: str):
    raise argparse.ArgumentTypeError(msg)


def _pos_int(text: str) -> int:
    value = int(text)
    return value if value >= 1 else _type_error(f"must be at least 1, got {text}")


def _min2_int(text: str) -> int:
    value = int(text)
    return value if value >= 2 else _type_error(f"must be at least 2, got {text}")


def _nonneg_int(text: str) -> int:
    value = int(text)
    return value if value >= 0 else _type_error(f"must be non-negative, got {text}")


def _unit_float(text: str) -> float:
    value = float(text)
    return value if 0.0 <= value <= 1.0 else _type_error(f"must be in [0, 1], got {text}")


def _alpha_float(text: str) -> float:
    value = float(text)
    return value if 0.0 <= value < 1.0 else _type_error(f"must be in [0, 1), got {text}")


def _nonneg_float(text: str) -> float:
    value = float(text)
    return value if value >= 0.0 else _type_error(f"must be non-negative, got {text}")


def _pos_float(text: str) -> float:
    value = float(text)
    return value if value > 0.0 else _type_error(f"must be positive, got {text}")


def _fraction_float(text: str) -> float:
    value = float(text)
    return value if 0.0 < value < 1.0 else _type_error(f"must be in (0, 1), got {text}")


def _r_float(text: str) -> float:
    value = float(text)
    return value if 0.0 < value <= 1.0 else _type_error(f"must be in (0, 1], got {text}")


def _momentum_float(text: str) -> float:
    value = float(text)
    return value if 0.0 <= value < 1.0 else _type_error(f"must be in [0, 1), got {text}")


def _factor_float(text: str) -> float:
    value = float(text)
    return value if 0.0 < value <= 1.0 else _type_error(f"must be in (0, 1], got {text}")


def _add_trainer_flags(p: _Parser, default_epochs: int = 30):
    p.add_argument("--epochs", type=_pos_int, default=default_epochs)
    p.add_argument("--batch-size", type=_pos_int, default=32)
    p.add_argument("--lr", type=_pos_float, default=0.1)
    p.add_argument("--momentum", type=_momentum_float, default=0.9)
    p.add_argument("--lr-decay-factor", type=_factor_float, default=0.1)
    p.add_argument("--lr-decay-every", type=_pos_int, default=30)
    p.add_argument("--hidden", type=_pos_int, nargs="*", default=[])
    p.add_argument("--seed", type=_nonneg_int, default=0)


def _build_parser() -> _Parser:
    parser = _Parser(prog="confcal", description=__doc__)
    parser.add_argument("--version", action="version", version=f"confcal {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="synthesize a multi-rater dataset")
    p.add_argument("--classes", type=_min2_int, required=True)
    p.add_argument("--per-class", type=_pos_int, required=True)
    p.add_argument("--dim", type=_pos_int, required=True)
    p.add_argument("--raters", type=_pos_int, required=True)
    p.add_argument("--noise", type=_unit_float, required=True)
    p.add_argument("--seed", type=_nonneg_int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("split-data", help="shuffle and partition a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--train-fraction", type=_fraction_float, required=True)
    p.add_argument("--seed", type=_nonneg_int, default=0)
    p.add_argument("--out-train", required=True)
    p.add_argument("--out-test", required=True)

    p = sub.add_parser(
        "precompute-confidence", help="write a human or model confidence sidecar"
    )
    p.add_argument("--data", required=True)
    p.add_argument("--kind", choices=confidence.KINDS, required=True)
    p.add_argument("--out", required=True)
    _add_trainer_flags(p)

    p = sub.add_parser("train", help="train a classifier")
    p.add_argument("--data", required=True)
    p.add_argument("--loss", choices=trainer.LOSS_KINDS, default="ce")
    p.add_argument("--strategy", choices=trainer.STRATEGIES, default="iid")
    p.add_argument("--alpha", type=_alpha_float, default=0.0)
    p.add_argument("--gamma", type=_nonneg_float, default=0.0)
    p.add_argument("--r", type=_r_float, default=0.5)
    p.add_argument("--end-epoch", type=_pos_int, default=5)
    p.add_argument("--model-confidence", default=None)
    p.add_argument("--human-confidence", default=None)
    p.add_argument("--out-model", required=True)
    p.add_argument("--out-history", default=None)
    _add_trainer_flags(p)

    p = sub.add_parser("evaluate", help="accuracy, ECE and reliability bins")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--bins", type=_pos_int, default=calibration.DEFAULT_BINS)
    p.add_argument("--out", required=True)
    p.add_argument("--reliability-out", default=None)

    p = sub.add_parser("rerun", help="replay a run manifest byte for byte")
    p.add_argument("--manifest", required=True)
    return parser


def _resolve_out(path: str) -> str:
    """Relative output paths land under CONFCAL_OUT_DIR when it is set."""
    out_dir = os.environ.get(OUT_DIR_ENV)
    if out_dir and not os.path.isabs(path):
        return os.path.join(out_dir, path)
    return path


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(command: str, flags: dict, inputs: dict, seed, manifest_path: str):
    payload = {
        "tool": "confcal",
        "version": __version__,
        "backend": kernels.BACKEND,
        "command": command,
        "flags": flags,
        "inputs": {
            name: {"path": path, "sha256": _sha256(path)} for name, path in inputs.items()
        },
        "seed": seed,
    }
    with open(manifest_path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _manifest_path_for(primary_out: str) -> str:
    return primary_out + ".manifest.json"


def _run_gen_data(flags: dict) -> int:
    flags["out"] = _resolve_out(flags["out"])
    _write_manifest("gen-data", flags, {}, flags["seed"], _manifest_path_for(flags["out"]))
    ds = dataset.generate_synthetic(
        num_classes=flags["classes"],
        samples_per_class=flags["per_class"],
        feature_dim=flags["dim"],
        rater_count=flags["raters"],
        noise=flags["noise"],
        seed=flags["seed"],
    )
    dataset.save_dataset(ds, flags["out"])
    print(f"wrote {len(ds)} samples ({ds.num_classes} classes) to {flags['out']}")
    return EXIT_OK


def _run_split_data(flags: dict) -> int:
    flags["out_train"] = _resolve_out(flags["out_train"])
    flags["out_test"] = _resolve_out(flags["out_test"])
    ds = dataset.load_dataset(flags["data"])
    _write_manifest(
        "split-data",
        flags,
        {"data": flags["data"]},
        flags["seed"],
        _manifest_path_for(flags["out_train"]),
    )
    train_part, test_part = dataset.split(ds, flags["train_fraction"], flags["seed"])
    dataset.save_dataset(train_part, flags["out_train"])
    dataset.save_dataset(test_part, flags["out_test"])
    print(
        f"split {len(ds)} samples into {len(train_part)} train / {len(test_part)} test"
    )
    return EXIT_OK


def _baseline_config(flags: dict) -> TrainConfig:
    return TrainConfig(
        epochs=flags["epochs"],
        batch_size=flags["batch_size"],
        learning_rate=flags["lr"],
        momentum=flags["momentum"],
        lr_decay_factor=flags["lr_decay_factor"],
        lr_decay_every=flags["lr_decay_every"],
        loss_kind="ce",
        strategy="iid",
        hidden=tuple(flags["hidden"]),
        seed=flags["seed"],
    )


def _run_precompute(flags: dict) -> int:
    flags["out"] = _resolve_out(flags["out"])
    ds = dataset.load_dataset(flags["data"])
    _write_manifest(
        "precompute-confidence",
        flags,
        {"data": flags["data"]},
        flags["seed"],
        _manifest_path_for(flags["out"]),
    )
    if flags["kind"] == "human":
        table = confidence.human_confidence_table(ds)
    else:
        result = trainer.train(ds, _baseline_config(flags))
        table = confidence.precompute_model_confidence(result.model, ds)
    confidence.save_table(table, flags["out"])
    print(f"wrote {flags['kind']} confidence for {len(table)} samples to {flags['out']}")
    return EXIT_OK


def _run_train(flags: dict) -> int:
    flags["out_model"] = _resolve_out(flags["out_model"])
    if flags.get("out_history") is None:
        flags["out_history"] = os.path.splitext(flags["out_model"])[0] + ".history.jsonl"
    else:
        flags["out_history"] = _resolve_out(flags["out_history"])

    ds = dataset.load_dataset(flags["data"])
    needs_model = flags["loss"] == "mcls" or flags["strategy"] == "mccl"
    needs_human = flags["loss"] == "hcls" or flags["strategy"] == "hccl"

    inputs = {"data": flags["data"]}
    model_table = None
    human_table = None
    if needs_model:
        if not flags.get("model_confidence"):
            raise DataFormatError(
                f"--model-confidence sidecar is required for loss {flags['loss']!r} "
                f"/ strategy {flags['strategy']!r}"
            )
        model_table = confidence.load_table(flags["model_confidence"])
        if model_table.kind != "model":
            raise DataFormatError(
                f"{flags['model_confidence']}: sidecar kind is {model_table.kind!r}, expected 'model'"
            )
        inputs["model_confidence"] = flags["model_confidence"]
    if needs_human:
        if not flags.get("human_confidence"):
            raise DataFormatError(
                f"--human-confidence sidecar is required for loss {flags['loss']!r} "
                f"/ strategy {flags['strategy']!r}"
            )
        human_table = confidence.load_table(flags["human_confidence"])
        if human_table.kind != "human":
            raise DataFormatError(
                f"{flags['human_confidence']}: sidecar kind is {human_table.kind!r}, expected 'human'"
            )
        inputs["human_confidence"] = flags["human_confidence"]

    cfg = TrainConfig(
        epochs=flags["epochs"],
        batch_size=flags["batch_size"],
        learning_rate=flags["lr"],
        momentum=flags["momentum"],
        lr_decay_factor=flags["lr_decay_factor"],
        lr_decay_every=flags["lr_decay_every"],
        loss_kind=flags["loss"],
        strategy=flags["strategy"],
        smoothing=SmoothingConfig(alpha=flags["alpha"], gamma=flags["gamma"]),
        curriculum=(
            CurriculumParams(r=flags["r"], end_epoch=flags["end_epoch"])
            if flags["strategy"] != "iid"
            else None
        ),
        hidden=tuple(flags["hidden"]),
        seed=flags["seed"],
    )

    # the manifest goes out before training so a long run is replayable
    # from the moment it starts
    _write_manifest("train", flags, inputs, flags["seed"], _manifest_path_for(flags["out_model"]))
    result = trainer.train(ds, cfg, model_confidence=model_table, human_confidence=human_table)
    trainer.save_model(result.model, flags["out_model"])
    trainer.save_history(result.history, flags["out_history"])
    last = result.history[-1]
    print(
        f"trained {cfg.epochs} epochs ({cfg.strategy}/{cfg.loss_kind}): "
        f"loss={last.loss:.6f} acc={last.train_acc:.4f} -> {flags['out_model']}"
    )
    return EXIT_OK


def _run_evaluate(flags: dict) -> int:
    flags["out"] = _resolve_out(flags["out"])
    if flags.get("reliability_out") is None:
        flags["reliability_out"] = os.path.splitext(flags["out"])[0] + ".reliability.csv"
    else:
        flags["reliability_out"] = _resolve_out(flags["reliability_out"])

    model = trainer.load_model(flags["model"])
    ds = dataset.load_dataset(flags["data"])
    _write_manifest(
        "evaluate",
        flags,
        {"model": flags["model"], "data": flags["data"]},
        None,
        _manifest_path_for(flags["out"]),
    )
    predictions = trainer.predict_all(model, ds)
    probs = np.stack([p for _, p, _ in predictions])
    report = calibration.make_report(probs, ds.modal_labels(), flags["bins"])
    calibration.save_report(report, flags["out"])
    calibration.reliability_export(report.bins, flags["reliability_out"])
    print(
        f"n={report.n} accuracy={report.accuracy:.6f} ece={report.ece:.6f} "
        f"bins={report.num_bins} -> {flags['out']}"
    )
    return EXIT_OK


_COMMANDS = {
    "gen-data": _run_gen_data,
    "split-data": _run_split_data,
    "precompute-confidence": _run_precompute,
    "train": _run_train,
    "evaluate": _run_evaluate,
}


def _run_rerun(flags: dict) -> int:
    path = flags["manifest"]
    with open(path, encoding="utf-8") as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}: {exc.msg}") from None
    for key in ("command", "flags", "inputs", "backend"):
        if key not in manifest:
            raise DataFormatError(f"{path}: manifest missing field {key!r}")
    command = manifest["command"]
    if command not in _COMMANDS:
        raise DataFormatError(f"{path}: unknown command {command!r}")

    recorded = manifest["backend"]
    if recorded != kernels.BACKEND:
        # replay under the recorded backend so kernel arithmetic matches
        env = dict(os.environ, CONFCAL_BACKEND=recorded)
        return subprocess.call(
            [sys.executable, "-m", "confcal", "rerun", "--manifest", path], env=env
        )

    for name, info in manifest["inputs"].items():
        actual = _sha256(info["path"])
        if actual != info["sha256"]:
            raise DataFormatError(
                f"input {name!r} ({info['path']}) changed since the manifest was "
                f"written: sha256 {actual} != {info['sha256']}"
            )
    return _COMMANDS[command](dict(manifest["flags"]))


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    flags = {k: v for k, v in vars(args).items() if k != "command"}
    try:
        if args.command == "rerun":
            return _run_rerun(flags)
        return _COMMANDS[args.command](flags)
    except TrainingDivergedError as exc:
        print(f"confcal: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataFormatError, OSError, KeyError, ValueError) as exc:
        msg = exc.args[0] if exc.args else exc
        print(f"confcal: error: {msg}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
