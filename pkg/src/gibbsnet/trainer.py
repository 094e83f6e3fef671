"""Adam training loop with decay scheduling, metric logging and checkpoints.

The learning rate follows the hyperbolic rule lr * D / (D + epoch) by
default (step and exponential alternatives are configurable), batches are
reshuffled each epoch from the run seed, and every random draw derives
from that one seed, so two runs with the same config produce bitwise
identical metric histories.  A non-finite loss aborts immediately with the
offending batch id.
"""

import json
import os
import time
from dataclasses import dataclass

import numpy as np

from . import nets
from .autodiff import backward, make_rng
from .checkpoint import save_checkpoint
from .data import batches

OBJECTIVES = ("vae", "ace", "classifier", "ace-nongen")


class NonFiniteLossError(RuntimeError):
    def __init__(self, epoch, batch_index, parts):
        self.epoch = epoch
        self.batch_index = batch_index
        super().__init__(
            f"non-finite loss at epoch {epoch} batch {batch_index}: {parts}")


@dataclass
class TrainConfig:
    objective: str = "vae"
    learning_rate: float = 2e-4
    decay_epochs: float = 500.0
    decay_rule: str = "hyperbolic"     # hyperbolic | step | exponential
    batch_size: int = 100
    epochs: int = 10
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    dual_recon: bool = False
    binarized: bool = True
    eval_batch: int = 1000
    eval_limit: int = 0                # cap evaluation rows; 0 = all
    checkpoint_every: int = 0          # epochs between checkpoints; 0 = end only

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")


def decayed_lr(base, decay_epochs, epoch, rule="hyperbolic"):
    """Non-increasing schedule with lr(0) = base."""
    if rule == "hyperbolic":
        return base * decay_epochs / (decay_epochs + epoch)
    if rule == "step":
        return base * 0.5 ** (epoch // max(1, int(decay_epochs)))
    if rule == "exponential":
        return base * np.exp(-epoch / decay_epochs)
    raise ValueError(f"unknown decay rule {rule!r}")


class AdamState:
    """First/second moment accumulators keyed like the parameter dict."""

    def __init__(self, params):
        self.m = {k: np.zeros_like(p.value) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.value) for k, p in params.items()}
        self.t = 0


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update, in place on the parameter nodes."""
    state.t += 1
    correct1 = 1.0 - beta1 ** state.t
    correct2 = 1.0 - beta2 ** state.t
    for key, node in params.items():
        g = grads.get(key)
        if g is None:
            g = np.zeros_like(node.value)
        m = state.m[key] = beta1 * state.m[key] + (1.0 - beta1) * g
        v = state.v[key] = beta2 * state.v[key] + (1.0 - beta2) * g * g
        node.value = node.value - lr * (m / correct1) / (
            np.sqrt(v / correct2) + eps)


def _noise_for(model, count, rng):
    if model.n_lat == 0:
        return None
    return rng.uniform(low=1e-12, high=1.0 - 1e-12, size=(count, model.n_lat))


def _batch_loss(model, x, labels, noise, config):
    if config.objective == "vae":
        return nets.vae_bound(model, x, noise,
                              labels if model.n_classes > 1 else None,
                              binarized=config.binarized)
    if config.objective == "ace":
        return nets.ace_loss(model, x, labels, noise,
                             include_dual=config.dual_recon,
                             binarized=config.binarized)
    if config.objective == "classifier":
        return nets.classifier_loss(model, x, labels, include_dual=False)
    return nets.classifier_loss(model, x, labels, include_dual=True)


def evaluate(model, dataset, config, noise_seed):
    """Deterministic split metrics: bound parts plus classification error."""
    rng = make_rng(config.seed, stream=noise_seed)
    limit = dataset.count if not config.eval_limit else min(
        dataset.count, config.eval_limit)
    rows = np.arange(limit)
    chunks = np.array_split(rows, max(1, int(np.ceil(limit / config.eval_batch))))
    sums = {}
    errors = 0
    for chunk in chunks:
        x = dataset.images[chunk]
        labels = dataset.labels[chunk]
        noise = _noise_for(model, len(chunk), rng)
        if config.objective in ("classifier", "ace-nongen"):
            parts = nets.classifier_loss(model, x, labels,
                                         include_dual=config.objective == "ace-nongen")
        elif config.objective == "ace":
            parts = nets.ace_test_bound(model, x, noise,
                                        binarized=config.binarized)
        else:
            parts = nets.vae_bound(model, x, noise,
                                   labels if model.n_classes > 1 else None,
                                   binarized=config.binarized)
        for key, val in parts.as_dict().items():
            sums[key] = sums.get(key, 0.0) + val * len(chunk)
        if model.classifier is not None:
            probs = nets.classify(model, x, _allow_untrained=True)
            errors += int(np.sum(probs.argmax(axis=1) != labels))
    out = {key: val / limit for key, val in sums.items()}
    if model.classifier is not None:
        out["class_error"] = errors / limit
    return out


def train(model, train_set, test_set, config, out_dir=None):
    """Optimize, log one JSON metrics object per epoch, checkpoint, return history.

    The first history row holds the initial (epoch 0, pre-update) metrics.
    """
    params = model.parameters()
    state = AdamState(params)
    history = []
    metrics_path = os.path.join(out_dir, "metrics.jsonl") if out_dir else None
    if metrics_path:
        os.makedirs(out_dir, exist_ok=True)
        open(metrics_path, "w").close()

    def log_epoch(epoch, lr):
        row = {"epoch": epoch, "lr": lr,
               "train": evaluate(model, train_set, config, noise_seed=2),
               "test": evaluate(model, test_set, config, noise_seed=3),
               "wall_time": time.time() - started}
        history.append(row)
        if metrics_path:
            with open(metrics_path, "a") as fh:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
        return row

    started = time.time()
    log_epoch(0, decayed_lr(config.learning_rate, config.decay_epochs, 0,
                            config.decay_rule))
    for epoch in range(config.epochs):
        lr = decayed_lr(config.learning_rate, config.decay_epochs, epoch,
                        config.decay_rule)
        noise_rng = make_rng(config.seed, stream=5000 + epoch)
        for batch_index, (x, labels) in enumerate(
                batches(train_set, config.batch_size, config.seed, epoch)):
            noise = _noise_for(model, x.shape[0], noise_rng)
            parts = _batch_loss(model, x, labels, noise, config)
            if not np.isfinite(parts.value("total")):
                raise NonFiniteLossError(epoch, batch_index, parts.as_dict())
            for node in params.values():
                node.grad = None
            backward(parts.total)
            grads = {k: node.grad for k, node in params.items()}
            adam_step(params, grads, state, lr, config.beta1, config.beta2,
                      config.eps)
        log_epoch(epoch + 1, lr)
        if out_dir and config.checkpoint_every and \
                (epoch + 1) % config.checkpoint_every == 0:
            save_checkpoint(model, os.path.join(out_dir,
                                                f"checkpoint_{epoch + 1:04d}.gmck"))
    model.mark_trained()
    if out_dir:
        save_checkpoint(model, os.path.join(out_dir, "checkpoint.gmck"))
    return history
