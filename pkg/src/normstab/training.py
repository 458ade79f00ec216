"""Epoch loop with clipping, NaN rollback, early stopping and dev-best selection."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .network import RecurrentNetwork, total_loss
from .optimizers import TrainConfig, TrainerState, clip_gradients, early_stop, nan_rollback
from .regularizers import RegularizerSpec
from .tensor import Rng

log = logging.getLogger(__name__)

# Rng stream ids, one per purpose, so adding a consumer never shifts another's draws
STREAM_INIT = 1
STREAM_DATA = 2
STREAM_SHUFFLE = 3
STREAM_BATCH = 4
STREAM_EVAL = 5


@dataclass
class FitHistory:
    train_loss: list = field(default_factory=list)
    dev_metric: list = field(default_factory=list)
    epochs: int = 0
    rollbacks: int = 0
    failed: bool = False
    best_epoch: int = 0
    best_dev: float = math.inf
    final_lr: float = 0.0


def fit_network(
    net: RecurrentNetwork,
    objective,
    spec: RegularizerSpec,
    config: TrainConfig,
    epoch_batches: Callable[[int], Iterable],
    evaluate: Callable[[], float] | None = None,
    *,
    stateful: bool = False,
    fault_injector: Callable[[int, int], bool] | None = None,
    on_event: Callable[[str, TrainerState], None] | None = None,
) -> FitHistory:
    """Train ``net`` in place and leave it holding the dev-best parameters.

    ``epoch_batches(epoch)`` must depend only on the epoch index so that a
    rolled-back epoch replays the same data. A non-finite training cost (or
    gradient norm) halves the learning rate and restores the last epoch
    checkpoint. ``fault_injector(epoch, batch)`` returning true forces the
    cost of that batch to NaN, for exercising the protocol.
    """
    params = net.tensors()
    state = TrainerState(params=params, config=config)
    hist = FitHistory()
    best = None
    while state.epoch < config.max_epochs:
        epoch = state.epoch
        losses = []
        nan = False
        h0 = c0 = None
        for b, batch in enumerate(epoch_batches(epoch)):
            rng = Rng(config.seed, STREAM_BATCH, epoch, b)
            res = total_loss(net, batch, spec, objective, rng=rng, train=True, h0=h0, c0=c0)
            cost = res.total
            if fault_injector is not None and fault_injector(epoch, b):
                cost = math.nan
            if not math.isfinite(cost):
                nan = True
                break
            grads, bad = clip_gradients({k: res.grads[k] for k in params}, config.clip_threshold)
            if bad:
                nan = True
                break
            state.apply(grads)
            losses.append(cost)
            if stateful:
                h0 = res.trajectory.H[-1]
                c0 = res.trajectory.C[-1] if res.trajectory.C is not None else None
        if nan:
            nan_rollback(state)
            log.info("non-finite cost in epoch %d; lr halved to %g", epoch + 1, state.lr)
            if on_event:
                on_event("rollback", state)
            if state.exhausted:
                hist.failed = True
                break
            continue
        state.epoch += 1
        state.save_checkpoint()
        hist.train_loss.append(float(np.mean(losses)) if losses else math.nan)
        dev = evaluate() if evaluate is not None else hist.train_loss[-1]
        hist.dev_metric.append(dev)
        if on_event:
            on_event("epoch_end", state)
        log.info("epoch %d train %.6g dev %.6g", state.epoch, hist.train_loss[-1], dev)
        if math.isfinite(dev) and dev < hist.best_dev:
            hist.best_dev = dev
            hist.best_epoch = state.epoch
            best = {k: v.copy() for k, v in params.items()}
        if early_stop(hist.dev_metric, config.patience):
            break
    if best is not None:
        net.load(best)
    hist.epochs = state.epoch
    hist.rollbacks = state.rollbacks
    hist.final_lr = state.lr
    return hist
