"""Training loop: forward, cross-entropy, backward, Adam; checkpoints and logs."""

import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import data, ops, weights_io
from .network import GradTape
from .optim import AdamState, adam_step


class NumericError(Exception):
    """Non-finite loss or activation during training."""


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    acc: float
    secs: float


@dataclass
class TrainLog:
    records: list = field(default_factory=list)

    def append(self, rec, path=None):
        self.records.append(rec)
        if path is not None:
            with open(path, "a", encoding="utf-8", newline="\n") as f:
                f.write(json.dumps(
                    {"epoch": rec.epoch, "loss": rec.loss, "acc": rec.acc, "secs": rec.secs}
                ) + "\n")


def _spawn_rngs(seed):
    """Independent streams for the data pipeline (shuffle+augment) and dropout."""
    data_ss, dropout_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(data_ss), np.random.default_rng(dropout_ss)


def train(graph, index, hp, augment_cfg=None, checkpoint_dir=None,
          normalization="scale01", log_path=None, progress=None, max_steps=None,
          metadata=None):
    """Run hp.epochs passes over the train split; returns (graph, TrainLog).

    Each step: train-mode forward, mean cross-entropy, backward, Adam on the
    trainable parameters. A checkpoint is written after every epoch (last
    plus best-train-loss retained) and final.wts at the end. Deterministic
    given hp.seed.
    """
    data_rng, dropout_rng = _spawn_rngs(hp.seed)
    state = AdamState()
    log = TrainLog()
    best_loss = float("inf")
    best_path = last_path = None
    step = 0
    for epoch in range(1, hp.epochs + 1):
        t0 = time.perf_counter()
        losses = []
        correct = total = 0
        for x, y in data.batches(index, "train", hp.batch_size, shuffle=True,
                                 augment_cfg=augment_cfg, rng=data_rng,
                                 normalization=normalization):
            step += 1
            tape = GradTape()
            try:
                probs = graph.forward(x, mode="train", rng=dropout_rng, tape=tape)
            except FloatingPointError as e:
                raise NumericError(f"{e} at epoch {epoch}, step {step}") from e
            loss = ops.cross_entropy(y, probs)
            if not np.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch}, step {step}")
            grads = graph.backward(tape, ops.cross_entropy_backward(y, probs))
            adam_step(graph.params, grads, state, hp)
            losses.append(loss)
            correct += int(np.sum(np.argmax(probs, axis=1) == np.argmax(y, axis=1)))
            total += x.shape[0]
            if max_steps is not None and step >= max_steps:
                break
        rec = EpochRecord(epoch=epoch, loss=float(np.mean(losses)),
                          acc=correct / total, secs=time.perf_counter() - t0)
        log.append(rec, log_path)
        if progress is not None:
            progress(f"epoch {rec.epoch}: loss={rec.loss:.6f} acc={rec.acc:.4f} ({rec.secs:.1f}s)")
        if checkpoint_dir is not None:
            path = os.path.join(checkpoint_dir, f"epoch_{epoch}.wts")
            weights_io.save(graph, path, metadata)
            if last_path is not None and last_path != best_path and os.path.exists(last_path):
                os.remove(last_path)
            last_path = path
            if rec.loss < best_loss:
                if best_path is not None and best_path != last_path and os.path.exists(best_path):
                    os.remove(best_path)
                best_loss, best_path = rec.loss, path
        if max_steps is not None and step >= max_steps:
            break
    if checkpoint_dir is not None:
        weights_io.save(graph, os.path.join(checkpoint_dir, "final.wts"), metadata)
    return graph, log


def mean_loss_and_accuracy(probs, labels):
    """Mean cross-entropy and top-1 accuracy; argmax ties go to the lowest index."""
    loss = ops.cross_entropy(labels, probs)
    acc = float(np.mean(np.argmax(probs, axis=1) == np.argmax(labels, axis=1)))
    return loss, acc


def evaluate_loss(graph, index, split, normalization="scale01", batch_size=8):
    """Eval-mode mean loss and accuracy over a split (no dropout, no augmentation)."""
    all_probs, all_labels = [], []
    for x, y in data.batches(index, split, batch_size, normalization=normalization):
        all_probs.append(graph.forward(x, mode="eval"))
        all_labels.append(y)
    return mean_loss_and_accuracy(np.concatenate(all_probs), np.concatenate(all_labels))
