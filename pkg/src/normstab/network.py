"""A recurrent cell plus a linear readout, and the combined task+penalty loss."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import cells
from .regularizers import RegularizerSpec, apply_weight_noise, dropout_mask, states_penalty, states_penalty_grad
from .tasks import softmax_xent
from .tensor import ParameterError, Rng, uniform_init

CELL_TYPES = ("srnn_tanh", "srnn_relu", "srnn_trec", "irnn", "lstm", "lstm_no_output_tanh")


def build_cell(cell: str, rng: Rng, input_size: int, hidden_size: int, init_scale=0.01,
               use_bias=True, forget_bias=1.0):
    if cell == "srnn_tanh":
        return cells.SrnnParams.init(rng, input_size, hidden_size, "tanh", use_bias, init_scale)
    if cell == "srnn_relu":
        return cells.SrnnParams.init(rng, input_size, hidden_size, "relu", use_bias, init_scale)
    if cell == "srnn_trec":
        return cells.SrnnParams.init(rng, input_size, hidden_size, "trec", False, init_scale)
    if cell == "irnn":
        return cells.SrnnParams.init(rng, input_size, hidden_size, "relu", use_bias, init_scale,
                                     identity=True)
    if cell in ("lstm", "lstm_no_output_tanh"):
        return cells.LstmParams.init(rng, input_size, hidden_size, cell == "lstm", init_scale,
                                     forget_bias)
    raise ParameterError(f"unknown cell {cell!r}; expected one of {CELL_TYPES}")


@dataclass
class RecurrentNetwork:
    """Recurrent core plus readout ``y = h @ W_out + b_out``."""

    core: cells.SrnnParams | cells.LstmParams
    W_out: np.ndarray
    b_out: np.ndarray

    @classmethod
    def create(cls, cell, rng: Rng, input_size, hidden_size, output_size, init_scale=0.01,
               use_bias=True, forget_bias=1.0):
        core = build_cell(cell, rng.child(0), input_size, hidden_size, init_scale, use_bias,
                          forget_bias)
        W_out = uniform_init(rng.child(1), (hidden_size, output_size), -init_scale, init_scale)
        return cls(core, W_out, np.zeros(output_size))

    @property
    def is_lstm(self) -> bool:
        return isinstance(self.core, cells.LstmParams)

    @property
    def hidden_size(self) -> int:
        return self.core.hidden_size

    def tensors(self) -> dict[str, np.ndarray]:
        out = dict(self.core.tensors())
        out["W_out"] = self.W_out
        out["b_out"] = self.b_out
        return out

    def load(self, tensors: dict[str, np.ndarray]):
        mine = self.tensors()
        missing = set(mine) - set(tensors)
        if missing:
            raise ParameterError(f"missing tensors {sorted(missing)}")
        for name, arr in mine.items():
            if arr.shape != tensors[name].shape:
                raise ParameterError(f"{name}: shape {tensors[name].shape} != {arr.shape}")
            arr[...] = tensors[name]
        return self

    def forward(self, x, h0=None, c0=None) -> cells.Trajectory:
        return cells.forward(self.core, x, h0, c0)


class Regression:
    """Scalar regression from the final hidden state, squared error averaged over the batch."""

    def inputs(self, batch):
        X, _ = batch
        return np.ascontiguousarray(np.swapaxes(np.asarray(X, dtype=float), 0, 1))

    def readout(self, net, H, mask=None):
        h = H[-1] if mask is None else H[-1] * mask[-1]
        return h @ net.W_out + net.b_out

    def loss(self, net, traj, batch, mask=None):
        _, y = batch
        H = traj.H
        h = H[-1] if mask is None else H[-1] * mask[-1]
        with np.errstate(over="ignore", invalid="ignore"):
            pred = (h @ net.W_out + net.b_out)[:, 0]
            diff = pred - np.asarray(y, dtype=float)
            loss = float(np.mean(diff * diff))
            dpred = (2.0 * diff / diff.size)[:, None]
            grads = {"W_out": h.T @ dpred, "b_out": dpred.sum(axis=0)}
            dH = np.zeros_like(H)
            dh = dpred @ net.W_out.T
            dH[-1] = dh if mask is None else dh * mask[-1]
        return loss, dH, grads

    def step_costs(self, net, H, batch):
        """Squared error of the readout at every step against the sequence target."""
        _, y = batch
        with np.errstate(over="ignore", invalid="ignore"):
            pred = (H[1:] @ net.W_out + net.b_out)[:, :, 0]
            return (pred - np.asarray(y, dtype=float)[None, :]) ** 2


class NextSymbol:
    """Next-symbol prediction at every step, cross-entropy in nats averaged over all steps."""

    def __init__(self, vocab_size: int):
        self.vocab_size = vocab_size

    def inputs(self, batch):
        ids, _ = batch
        ids = np.asarray(ids)
        X = np.zeros((ids.shape[1], ids.shape[0], self.vocab_size))
        T, B = ids.shape[1], ids.shape[0]
        X[np.arange(T)[:, None], np.arange(B)[None, :], ids.T] = 1.0
        return X

    def loss(self, net, traj, batch, mask=None):
        _, tgt = batch
        H = traj.H
        Hs = H[1:] if mask is None else H[1:] * mask
        T, B, n = Hs.shape
        flat = Hs.reshape(T * B, n)
        with np.errstate(over="ignore", invalid="ignore"):
            logits = flat @ net.W_out + net.b_out
            loss, dlogits = softmax_xent(logits, np.asarray(tgt).T.reshape(-1))
            grads = {"W_out": flat.T @ dlogits, "b_out": dlogits.sum(axis=0)}
            dH = np.zeros_like(H)
            dh = (dlogits @ net.W_out.T).reshape(T, B, n)
            dH[1:] = dh if mask is None else dh * mask
        return loss, dH, grads

    def step_costs(self, net, H, batch):
        """Per-step, per-sequence cross-entropy in nats, shape ``(T, B)``."""
        _, tgt = batch
        tgt = np.asarray(tgt)
        with np.errstate(over="ignore", invalid="ignore"):
            logits = H[1:] @ net.W_out + net.b_out
            shifted = logits - logits.max(axis=2, keepdims=True)
            logsum = np.log(np.exp(shifted).sum(axis=2))
            T, B = tgt.shape[1], tgt.shape[0]
            picked = shifted[np.arange(T)[:, None], np.arange(B)[None, :], tgt.T]
            cost = logsum - picked
        return np.where(np.isfinite(cost), cost, np.inf)


@dataclass
class LossResult:
    total: float
    data: float
    penalty: float
    grads: dict
    trajectory: cells.Trajectory


def total_loss(net: RecurrentNetwork, batch, spec: RegularizerSpec, objective, *,
               rng: Rng | None = None, train: bool = False, h0=None, c0=None) -> LossResult:
    """Task loss plus penalty, with gradients for every network tensor.

    Weight noise and dropout are only used when ``train`` is true and ``rng``
    is given. Gradients of both terms are summed per time step before a single
    BPTT pass.
    """
    if spec.target == "memory_cell" and not net.is_lstm:
        raise ParameterError("memory_cell penalty target requires an LSTM cell")
    tensors = net.tensors()
    noisy = train and spec.weight_noise_sigma > 0
    if noisy:
        _, handle = apply_weight_noise(tensors, spec.weight_noise_sigma, rng.child(0))
    try:
        x = objective.inputs(batch)
        out_mask = None
        if train and spec.dropout_p > 0:
            x = x * dropout_mask(rng.child(1), x.shape, spec.dropout_p)
            T, B = x.shape[:2]
            out_mask = dropout_mask(rng.child(2), (T, B, net.hidden_size), spec.dropout_p)
        traj = net.forward(x, h0, c0)
        data, dH, grads = objective.loss(net, traj, batch, out_mask)
        dC = None
        penalty = 0.0
        if spec.active:
            S = traj.C if spec.target == "memory_cell" else traj.H
            penalty = states_penalty(spec.variant, S, spec.beta, spec.target_norm, spec.skip_first_term)
            g = states_penalty_grad(spec.variant, S, spec.beta, spec.target_norm, spec.skip_first_term)
            if spec.target == "memory_cell":
                dC = g
            else:
                dH = dH + g
        core_grads = cells.backward(net.core, traj, dH, dC)
    finally:
        if noisy:
            handle.restore()
    grads.update(core_grads)
    return LossResult(data + penalty, data, penalty, grads, traj)
