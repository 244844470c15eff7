"""Adam updates, learning-rate schedule and the epoch loop."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Sequence, Tuple

import numpy as np

from ..errors import ArgumentError, ContractError
from .net import (
    RegressionNet,
    backward,
    forward_batch,
    update_running_stats,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    decay: float = 0.97
    adam_betas: Tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 100
    convergence_tol: float = 1e-3
    patience: int = 5
    seed: int = 0
    init_output_bias: bool = True

    def __post_init__(self):
        object.__setattr__(self, "adam_betas", tuple(float(b) for b in self.adam_betas))
        if not 0 < self.decay <= 1:
            raise ArgumentError("decay must lie in (0, 1]")
        b1, b2 = self.adam_betas
        if not (0 < b1 < 1 and 0 < b2 < 1):
            raise ArgumentError("Adam betas must lie in (0, 1)")
        if self.batch_size < 1 or self.max_epochs < 0 or self.patience < 1:
            raise ArgumentError("batch_size, patience must be >= 1 and max_epochs >= 0")
        if not self.learning_rate > 0:
            raise ArgumentError("learning_rate must be positive")

    def to_dict(self):
        d = asdict(self)
        d["adam_betas"] = list(self.adam_betas)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def lr_at(epoch: int, tconf: TrainConfig) -> float:
    if epoch < 0:
        raise ArgumentError("epoch must be >= 0")
    return tconf.learning_rate * tconf.decay ** epoch


def adam_step(net: RegressionNet, grads, tconf: TrainConfig, lr=None) -> RegressionNet:
    """Apply one bias-corrected Adam update in place and return ``net``."""
    grads = np.asarray(grads)
    if grads.shape != net.params.shape:
        raise ContractError(
            f"gradient shape {grads.shape} does not match parameters {net.params.shape}")
    lr = tconf.learning_rate if lr is None else lr
    b1, b2 = tconf.adam_betas
    grads = grads.astype(net.dtype, copy=False)
    net.step_count += 1
    t = net.step_count
    net.adam_m *= b1
    net.adam_m += (1 - b1) * grads
    net.adam_v *= b2
    net.adam_v += (1 - b2) * grads * grads
    m_hat = net.adam_m / (1 - b1 ** t)
    v_hat = net.adam_v / (1 - b2 ** t)
    net.params -= (lr * m_hat / (np.sqrt(v_hat) + tconf.adam_eps)).astype(net.dtype)
    return net


def evaluate_loss(net: RegressionNet, clouds, targets_n, batch_size=256) -> float:
    """Mean eval-mode L1 loss in scaled units."""
    total = 0.0
    for lo in range(0, len(clouds), batch_size):
        pred = forward_batch(net, clouds[lo:lo + batch_size], mode="eval").astype(np.float64)
        t = np.asarray(targets_n[lo:lo + batch_size], dtype=np.float64) * net.config.target_scale
        total += float(np.abs(pred - t).sum())
    return total / len(clouds)


def _unpack(samples):
    clouds = [getattr(s, "cloud", s) for s in samples]
    clouds = [getattr(c, "xyz", c) for c in clouds]
    targets = np.array([s.target_n for s in samples], dtype=np.float64)
    return clouds, targets


def train(net: RegressionNet, train_samples: Sequence, val_samples: Sequence,
          tconf: TrainConfig, start_epoch=0, callback=None):
    """Train ``net`` in place; return ``(net, history)``.

    Each epoch shuffles the training samples with a generator seeded by
    ``(tconf.seed, epoch)`` and takes one Adam step per mini-batch at
    ``lr_at(epoch)``. Epochs run from ``start_epoch`` up to ``max_epochs``
    (a total budget, so a resumed run continues the same schedule) or until
    the validation loss has failed to improve by ``convergence_tol`` for
    ``patience`` consecutive epochs. Without validation samples the
    training loss drives the stopping rule.

    ``history`` holds one dict per epoch with ``epoch``, ``train_loss``
    (mean mini-batch loss), ``val_loss`` and ``lr``.
    """
    if len(train_samples) == 0:
        raise ArgumentError("training corpus is empty")
    clouds, targets = _unpack(train_samples)
    val_clouds, val_targets = _unpack(val_samples) if len(val_samples) else ([], None)

    if tconf.init_output_bias and net.step_count == 0:
        # start the output at the mean scaled label so Adam need not walk there
        _, head = net.views()
        head[-1]["b"][...] = np.mean(targets) * net.config.target_scale

    history = []
    best = np.inf
    stale = 0
    n = len(clouds)
    for epoch in range(start_epoch, tconf.max_epochs):
        lr = lr_at(epoch, tconf)
        order = np.random.default_rng([tconf.seed, epoch]).permutation(n)
        batch_losses = []
        for lo in range(0, n, tconf.batch_size):
            idx = order[lo:lo + tconf.batch_size]
            loss, grad, stats = backward(net, [clouds[i] for i in idx], targets[idx],
                                         return_stats=True)
            update_running_stats(net, stats)
            adam_step(net, grad, tconf, lr=lr)
            batch_losses.append(loss)
        train_loss = float(np.mean(batch_losses))
        val_loss = evaluate_loss(net, val_clouds, val_targets) if val_clouds else float("nan")
        record = {"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss, "lr": lr}
        history.append(record)
        log.info("epoch %d train %.4f val %.4f lr %.3g", epoch, train_loss, val_loss, lr)
        if callback is not None:
            callback(record)
        monitored = val_loss if val_clouds else train_loss
        if monitored < best - tconf.convergence_tol:
            best = monitored
            stale = 0
        else:
            stale += 1
            if stale >= tconf.patience:
                break
    return net, history
