"""Command-line front end: train, evaluate, predict.

Exit codes: 0 ok, 1 config error, 2 data error, 3 numeric abort,
4 archive/graph mismatch.
"""

import argparse
import os
import sys

import numpy as np

from . import data, metrics, trainer, weights_io
from .data import AugmentConfig, DataError
from .network import build_modified_vgg16, init_head, set_trainable
from .optim import HyperParams
from .trainer import NumericError
from .weights_io import ArchiveError

# Table-II-equivalent defaults
DEFAULTS = {
    "epochs": 150,
    "batch_size": 8,
    "lr": 1e-4,
    "seed": 0,
    "normalization": "scale01",
    "rotation_deg": 20.0,
    "shift_frac": 0.10,
    "zoom_frac": 0.10,
    "input_size": 150,
}

EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3
EXIT_ARCHIVE = 4


def _read_config_file(path):
    values = {}
    try:
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected key=value")
                key, val = (part.strip() for part in line.split("=", 1))
                values[key.replace("-", "_")] = val
    except OSError as e:
        raise ValueError(f"cannot read config file {path}: {e}") from e
    return values


def _resolve(args, keys):
    """Precedence: CLI flag > config file > defaults."""
    cfg = _read_config_file(args.config) if getattr(args, "config", None) else {}
    resolved = {}
    for key in keys:
        flag_val = getattr(args, key, None)
        if flag_val is not None:
            resolved[key] = flag_val
        elif key in cfg:
            default = DEFAULTS.get(key)
            caster = type(default) if default is not None else str
            resolved[key] = caster(cfg[key]) if caster is not bool else cfg[key].lower() in ("1", "true", "yes")
        else:
            resolved[key] = DEFAULTS.get(key)
    return resolved


def _echo_config(command, resolved):
    print(f"[{command}] resolved configuration:")
    for key in sorted(resolved):
        print(f"  {key} = {resolved[key]}")


def _add_shared(p):
    p.add_argument("--config", help="optional key=value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--normalization", choices=["scale01", "imagenet"])


def build_parser():
    parser = argparse.ArgumentParser(prog="dermvgg",
                                     description="Modified-VGG16 skin disease classifier")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train the model on a class-per-directory dataset")
    t.add_argument("--data-dir", required=True)
    t.add_argument("--out", required=True, help="output directory for checkpoints and logs")
    t.add_argument("--weights-in", help="pretrained base archive (loaded base_only)")
    t.add_argument("--freeze-base", action="store_true", default=None)
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--no-augment", action="store_true", default=None)
    t.add_argument("--rotation-deg", type=float)
    t.add_argument("--shift-frac", type=float)
    t.add_argument("--zoom-frac", type=float)
    _add_shared(t)

    e = sub.add_parser("evaluate", help="evaluate a model archive on the test split")
    e.add_argument("--data-dir", required=True)
    e.add_argument("--model", required=True)
    e.add_argument("--out", required=True, help="output directory for report files")
    e.add_argument("--batch-size", type=int)
    _add_shared(e)

    p = sub.add_parser("predict", help="classify a single image")
    p.add_argument("--model", required=True)
    p.add_argument("image", help="path to the image to classify")
    _add_shared(p)
    return parser


def _graph_from_archive(path):
    """Rebuild the graph described by an archive's metadata and load all tensors."""
    manifest = weights_io.read_manifest(path)
    meta = manifest.get("metadata", {})
    class_names = meta.get("class_names")
    num_classes = len(class_names) if class_names else 3
    input_size = int(meta.get("input_size", DEFAULTS["input_size"]))
    normalization = meta.get("normalization", DEFAULTS["normalization"])
    graph = build_modified_vgg16(num_classes=num_classes, input_size=input_size)
    weights_io.load(path, graph, scope="all")
    if not class_names:
        class_names = [str(i) for i in range(num_classes)]
    return graph, class_names, normalization


def cmd_train(args):
    keys = ["data_dir", "out", "weights_in", "freeze_base", "epochs", "batch_size",
            "lr", "no_augment", "rotation_deg", "shift_frac", "zoom_frac",
            "seed", "normalization"]
    resolved = _resolve(args, keys)
    resolved["freeze_base"] = bool(resolved["freeze_base"])
    resolved["no_augment"] = bool(resolved["no_augment"])
    _echo_config("train", resolved)
    if resolved["freeze_base"] and not resolved["weights_in"]:
        print("warning: --freeze-base without --weights-in trains a head on a random frozen base",
              file=sys.stderr)

    try:
        index = data.scan_dataset(resolved["data_dir"])
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA

    graph = build_modified_vgg16(num_classes=len(index.class_names),
                                 input_size=DEFAULTS["input_size"])
    init_head(graph, np.random.default_rng(resolved["seed"]))
    set_trainable(graph, freeze_base=resolved["freeze_base"])
    if resolved["weights_in"]:
        try:
            weights_io.load(resolved["weights_in"], graph, scope="base_only")
        except ArchiveError as e:
            print(f"archive error: {e}", file=sys.stderr)
            return EXIT_ARCHIVE

    hp = HyperParams(learning_rate=resolved["lr"], batch_size=resolved["batch_size"],
                     epochs=resolved["epochs"], seed=resolved["seed"])
    augment_cfg = None
    if not resolved["no_augment"]:
        augment_cfg = AugmentConfig(rotation_max_deg=resolved["rotation_deg"],
                                    shift_max_frac=resolved["shift_frac"],
                                    zoom_max_frac=resolved["zoom_frac"])
    os.makedirs(resolved["out"], exist_ok=True)
    metadata = {
        "class_names": index.class_names,
        "normalization": resolved["normalization"],
        "input_size": DEFAULTS["input_size"],
    }
    try:
        trainer.train(graph, index, hp, augment_cfg=augment_cfg,
                      checkpoint_dir=resolved["out"],
                      normalization=resolved["normalization"],
                      log_path=os.path.join(resolved["out"], "train_log.jsonl"),
                      progress=print, metadata=metadata)
    except NumericError as e:
        print(f"numeric abort: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


def cmd_evaluate(args):
    keys = ["data_dir", "model", "out", "batch_size", "seed", "normalization"]
    resolved = _resolve(args, keys)
    _echo_config("evaluate", resolved)
    try:
        graph, class_names, archive_norm = _graph_from_archive(resolved["model"])
    except (ArchiveError, OSError) as e:
        print(f"archive error: {e}", file=sys.stderr)
        return EXIT_ARCHIVE
    normalization = args.normalization or archive_norm
    try:
        index = data.scan_dataset(resolved["data_dir"])
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    if index.class_names != class_names:
        print(f"archive error: dataset classes {index.class_names} do not match "
              f"model classes {class_names}", file=sys.stderr)
        return EXIT_ARCHIVE

    true_labels, probs = [], []
    for x, y in data.batches(index, "test", resolved["batch_size"],
                             normalization=normalization):
        probs.append(graph.forward(x, mode="eval"))
        true_labels.append(np.argmax(y, axis=1))
    probs = np.concatenate(probs)
    true_labels = np.concatenate(true_labels)
    preds = np.argmax(probs, axis=1)

    cm = metrics.confusion(true_labels, preds, len(class_names), class_names)
    rep = metrics.report(cm)
    curves = [metrics.roc_auc(true_labels, probs, i, name)
              for i, name in enumerate(class_names)]
    metrics.emit_report(rep, cm, curves, resolved["out"], "json")
    metrics.emit_report(rep, cm, curves, resolved["out"], "csv")
    print(metrics.format_report(rep))
    for c in curves:
        print(f"AUC[{c.class_name}] = {c.auc:.4f}")
    return 0


def cmd_predict(args):
    keys = ["model", "seed", "normalization"]
    resolved = _resolve(args, keys)
    resolved["image"] = args.image
    _echo_config("predict", resolved)
    try:
        graph, class_names, archive_norm = _graph_from_archive(resolved["model"])
    except (ArchiveError, OSError) as e:
        print(f"archive error: {e}", file=sys.stderr)
        return EXIT_ARCHIVE
    normalization = args.normalization or archive_norm
    try:
        sample = data.load_sample(args.image, normalization)
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    probs = graph.forward(sample.pixels[None], mode="eval")[0]
    pred = int(np.argmax(probs))
    print(f"prediction: {class_names[pred]}")
    print("probabilities: " + " ".join(
        f"{name}={p:.4f}" for name, p in zip(class_names, probs)))
    return 0


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code not in (0, None) else 0
    try:
        if args.command == "train":
            return cmd_train(args)
        if args.command == "evaluate":
            return cmd_evaluate(args)
        if args.command == "predict":
            return cmd_predict(args)
    except ValueError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
