"""First-order optimizers, global-norm clipping and the NaN rollback protocol.

Parameters and gradients are ``dict[str, ndarray]``; updates happen in place so
that the arrays held by the network stay the same objects across steps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import ParameterError

OPTIMIZERS = ("sgd_momentum", "adam")


@dataclass
class TrainConfig:
    optimizer: str = "sgd_momentum"
    learning_rate: float = 0.002
    momentum: float = 0.99
    clip_threshold: float = 1.0
    max_epochs: int = 10
    patience: int = 25
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    min_learning_rate: float = 1e-12

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ParameterError(f"unknown optimizer {self.optimizer!r}; expected one of {OPTIMIZERS}")
        if not self.learning_rate > 0:
            raise ParameterError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not self.clip_threshold > 0:
            raise ParameterError(f"clip_threshold must be > 0, got {self.clip_threshold}")
        if self.patience < 0:
            raise ParameterError(f"patience must be >= 0, got {self.patience}")
        if self.max_epochs < 0:
            raise ParameterError(f"max_epochs must be >= 0, got {self.max_epochs}")


def global_norm(grads: dict[str, np.ndarray]) -> float:
    total = 0.0
    for name in sorted(grads):
        g = grads[name].ravel()
        total += float(np.dot(g, g))
    return math.sqrt(total)


def clip_gradients(grads: dict[str, np.ndarray], threshold: float):
    """Rescale ``grads`` so their joint L2 norm is at most ``threshold``.

    Returns ``(grads, nan_event)``. A non-finite norm zeroes every gradient and
    reports ``nan_event=True`` so the caller can trigger a rollback.
    """
    if not threshold > 0:
        raise ParameterError(f"clip threshold must be > 0, got {threshold}")
    with np.errstate(over="ignore", invalid="ignore"):
        g = global_norm(grads)
    if not math.isfinite(g):
        return {k: np.zeros_like(v) for k, v in grads.items()}, True
    if g > threshold:
        s = threshold / g
        return {k: v * s for k, v in grads.items()}, False
    return grads, False


def init_state(params: dict[str, np.ndarray], optimizer: str) -> dict:
    if optimizer == "sgd_momentum":
        return {"velocity": {k: np.zeros_like(v) for k, v in params.items()}}
    if optimizer == "adam":
        return {
            "m": {k: np.zeros_like(v) for k, v in params.items()},
            "v": {k: np.zeros_like(v) for k, v in params.items()},
            "t": 0,
        }
    raise ParameterError(f"unknown optimizer {optimizer!r}")


def sgd_momentum_step(params, grads, velocity, lr, mu):
    """Classical momentum: ``v <- mu*v - lr*g``; ``theta <- theta + v``."""
    for name, p in params.items():
        v = velocity[name]
        v *= mu
        v -= lr * grads[name]
        p += v
    return params, velocity


def adam_step(params, grads, moments, lr, b1=0.9, b2=0.999, eps_adam=1e-8, t=1):
    if t < 1:
        raise ParameterError(f"Adam step counter must be >= 1, got {t}")
    m, v = moments["m"], moments["v"]
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads[name]
        m[name] *= b1
        m[name] += (1.0 - b1) * g
        v[name] *= b2
        v[name] += (1.0 - b2) * g * g
        p -= lr * (m[name] / c1) / (np.sqrt(v[name] / c2) + eps_adam)
    moments["t"] = t
    return params, moments


def _copy_state(opt_state):
    out = {}
    for k, v in opt_state.items():
        out[k] = {n: a.copy() for n, a in v.items()} if isinstance(v, dict) else v
    return out


def _write_back(dst: dict[str, np.ndarray], src: dict[str, np.ndarray]):
    for name, value in src.items():
        dst[name][...] = value


@dataclass
class Snapshot:
    epoch: int
    params: dict[str, np.ndarray]
    opt_state: dict


@dataclass
class TrainerState:
    """Mutable training state; ``epoch`` counts completed epochs."""

    params: dict[str, np.ndarray]
    config: TrainConfig
    lr: float = 0.0
    epoch: int = 0
    step: int = 0
    rollbacks: int = 0
    opt_state: dict = field(default_factory=dict)
    checkpoint: Snapshot | None = None

    def __post_init__(self):
        if not self.lr:
            self.lr = self.config.learning_rate
        if not self.opt_state:
            self.opt_state = init_state(self.params, self.config.optimizer)
        if self.checkpoint is None:
            self.save_checkpoint()

    def save_checkpoint(self):
        self.checkpoint = Snapshot(
            epoch=self.epoch,
            params={k: v.copy() for k, v in self.params.items()},
            opt_state=_copy_state(self.opt_state),
        )

    def apply(self, grads):
        cfg = self.config
        self.step += 1
        if cfg.optimizer == "sgd_momentum":
            sgd_momentum_step(self.params, grads, self.opt_state["velocity"], self.lr, cfg.momentum)
        else:
            t = self.opt_state["t"] + 1
            adam_step(self.params, grads, self.opt_state, self.lr, cfg.beta1, cfg.beta2, cfg.adam_eps, t)

    @property
    def exhausted(self) -> bool:
        return self.lr < self.config.min_learning_rate


def nan_rollback(state: TrainerState, nan_event: bool = True) -> TrainerState:
    """Halve the learning rate and restart from the last epoch-boundary checkpoint.

    Parameters, velocity / Adam moments and the epoch counter all come back
    from the checkpoint, which holds the initial parameters before the first
    epoch completes.
    """
    if not nan_event:
        return state
    snap = state.checkpoint
    state.lr = state.lr / 2.0
    _write_back(state.params, snap.params)
    restored = _copy_state(snap.opt_state)
    for key, value in restored.items():
        if isinstance(value, dict):
            _write_back(state.opt_state[key], value)
        else:
            state.opt_state[key] = value
    state.epoch = snap.epoch
    state.rollbacks += 1
    return state


def early_stop(dev_history, patience: int) -> bool:
    """True once the best (lowest) dev metric is more than ``patience`` epochs old."""
    if not dev_history:
        return False
    values = np.asarray(dev_history, dtype=float)
    finite = np.where(np.isfinite(values), values, np.inf)
    best = int(np.argmin(finite))
    return (len(values) - 1) - best > patience
