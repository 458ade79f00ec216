"""Simple-RNN and LSTM cells with full backpropagation through time.

Arrays use a row-vector convention: ``h_t = act(x_t @ W_xh + h_{t-1} @ W_hh + b)``.
Forward functions accept a single sequence ``x`` of shape ``(T, d)`` or a batch
of shape ``(T, B, d)``; the returned :class:`Trajectory` keeps the same layout.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import DTYPE, DimensionError, ParameterError, Rng, identity_init, uniform_init

ACTIVATIONS = ("tanh", "relu", "trec")


class StructureError(ValueError):
    """Raised when a trajectory does not belong to the given parameters."""


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class SrnnParams:
    W_xh: np.ndarray
    W_hh: np.ndarray
    b: np.ndarray | None = None
    activation: str = "tanh"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ParameterError(f"unknown activation {self.activation!r}")
        n = self.W_hh.shape[0]
        if self.W_hh.ndim != 2 or self.W_hh.shape != (n, n):
            raise DimensionError(f"W_hh must be square, got {self.W_hh.shape}")
        if self.W_xh.ndim != 2 or self.W_xh.shape[1] != n:
            raise DimensionError(f"W_xh {self.W_xh.shape} does not match W_hh {self.W_hh.shape}")
        if self.activation == "trec" and self.b is not None:
            raise ParameterError("trec cells have no bias")
        if self.b is not None and self.b.shape != (n,):
            raise DimensionError(f"bias shape {self.b.shape} does not match hidden size {n}")

    @property
    def hidden_size(self) -> int:
        return self.W_hh.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_xh.shape[0]

    def tensors(self) -> dict[str, np.ndarray]:
        out = {"W_xh": self.W_xh, "W_hh": self.W_hh}
        if self.b is not None:
            out["b"] = self.b
        return out

    @classmethod
    def init(cls, rng: Rng, input_size, hidden_size, activation="tanh", bias=True,
             scale=0.01, identity=False):
        W_xh = uniform_init(rng, (input_size, hidden_size), -scale, scale)
        if identity:
            W_hh = identity_init(hidden_size)
        else:
            W_hh = uniform_init(rng, (hidden_size, hidden_size), -scale, scale)
        b = np.zeros(hidden_size) if bias and activation != "trec" else None
        return cls(W_xh, W_hh, b, activation)


@dataclass
class LstmParams:
    """LSTM weights with the four gates stacked as ``[input, forget, output, modulation]``."""

    W_x: np.ndarray
    W_h: np.ndarray
    b: np.ndarray
    output_tanh: bool = True

    def __post_init__(self):
        n = self.W_h.shape[0]
        if self.W_h.shape != (n, 4 * n):
            raise DimensionError(f"W_h must be n x 4n, got {self.W_h.shape}")
        if self.W_x.ndim != 2 or self.W_x.shape[1] != 4 * n:
            raise DimensionError(f"W_x {self.W_x.shape} does not match W_h {self.W_h.shape}")
        if self.b.shape != (4 * n,):
            raise DimensionError(f"bias shape {self.b.shape} does not match 4n = {4 * n}")

    @property
    def hidden_size(self) -> int:
        return self.W_h.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_x.shape[0]

    def tensors(self) -> dict[str, np.ndarray]:
        return {"W_x": self.W_x, "W_h": self.W_h, "b": self.b}

    @classmethod
    def init(cls, rng: Rng, input_size, hidden_size, output_tanh=True, scale=0.01,
             forget_bias=1.0):
        n = hidden_size
        W_x = uniform_init(rng, (input_size, 4 * n), -scale, scale)
        W_h = uniform_init(rng, (n, 4 * n), -scale, scale)
        b = np.zeros(4 * n)
        b[n:2 * n] = forget_bias
        return cls(W_x, W_h, b, output_tanh)


@dataclass
class Trajectory:
    """States ``h_0..h_T`` (and ``c_0..c_T`` for LSTM) plus what backward needs.

    Internally everything is stored with a batch axis; ``hiddens`` and
    ``cells`` drop it again for single-sequence trajectories.
    """

    H: np.ndarray
    X: np.ndarray
    C: np.ndarray | None = None
    cache: dict = field(default_factory=dict)
    batched: bool = True

    @property
    def T(self) -> int:
        return self.X.shape[0]

    @property
    def hiddens(self) -> np.ndarray:
        return self.H if self.batched else self.H[:, 0]

    @property
    def cells(self) -> np.ndarray | None:
        if self.C is None:
            return None
        return self.C if self.batched else self.C[:, 0]


def _batched(x, h0, n):
    x = np.asarray(x, dtype=DTYPE)
    if x.ndim == 2:
        batched = False
        x = x[:, None, :]
    elif x.ndim == 3:
        batched = True
    else:
        raise DimensionError(f"inputs must be (T, d) or (T, B, d), got {x.shape}")
    B = x.shape[1]
    if h0 is None:
        h0 = np.zeros((B, n))
    else:
        h0 = np.asarray(h0, dtype=DTYPE)
        if not batched:
            h0 = h0[None, :]
        if h0.shape != (B, n):
            raise DimensionError(f"initial state shape {h0.shape} does not match ({B}, {n})")
    return x, h0, batched


def srnn_forward(params: SrnnParams, x, h0=None) -> Trajectory:
    n = params.hidden_size
    X, h0, batched = _batched(x, h0, n)
    T, B, d = X.shape
    if d != params.input_size:
        raise DimensionError(f"input size {d} does not match W_xh {params.W_xh.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        drive = (X.reshape(T * B, d) @ params.W_xh).reshape(T, B, n)
        if params.b is not None:
            drive += params.b
        H = np.empty((T + 1, B, n))
        A = np.empty((T, B, n))
        H[0] = h0
        tanh = params.activation == "tanh"
        for t in range(T):
            a = drive[t] + H[t] @ params.W_hh
            A[t] = a
            H[t + 1] = np.tanh(a) if tanh else np.maximum(a, 0.0)
    return Trajectory(H=H, X=X, cache={"A": A}, batched=batched)


def lstm_forward(params: LstmParams, x, h0=None, c0=None) -> Trajectory:
    n = params.hidden_size
    X, h0, batched = _batched(x, h0, n)
    _, c0, _ = _batched(x, c0, n)
    T, B, d = X.shape
    if d != params.input_size:
        raise DimensionError(f"input size {d} does not match W_x {params.W_x.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        drive = (X.reshape(T * B, d) @ params.W_x).reshape(T, B, 4 * n) + params.b
        H = np.empty((T + 1, B, n))
        C = np.empty((T + 1, B, n))
        gates = np.empty((T, B, 4 * n))
        tc = np.empty((T, B, n))
        H[0] = h0
        C[0] = c0
        for t in range(T):
            z = drive[t] + H[t] @ params.W_h
            gz = gates[t]
            gz[:, :3 * n] = sigmoid(z[:, :3 * n])
            gz[:, 3 * n:] = np.tanh(z[:, 3 * n:])
            i, f, o, g = gz[:, :n], gz[:, n:2 * n], gz[:, 2 * n:3 * n], gz[:, 3 * n:]
            C[t + 1] = f * C[t] + i * g
            if params.output_tanh:
                tc[t] = np.tanh(C[t + 1])
                H[t + 1] = o * tc[t]
            else:
                H[t + 1] = o * C[t + 1]
    return Trajectory(H=H, X=X, C=C, cache={"gates": gates, "tanh_c": tc}, batched=batched)


def forward(params, x, h0=None, c0=None) -> Trajectory:
    if isinstance(params, LstmParams):
        return lstm_forward(params, x, h0, c0)
    return srnn_forward(params, x, h0)


def _upstream(grad, traj, like):
    if grad is None:
        return np.zeros_like(like)
    grad = np.asarray(grad, dtype=DTYPE)
    if not traj.batched:
        grad = grad[:, None, :]
    if grad.shape != like.shape:
        raise StructureError(f"upstream gradient shape {grad.shape} does not match states {like.shape}")
    return grad.copy()


def backward(params, traj: Trajectory, dh=None, dc=None) -> dict[str, np.ndarray]:
    """Reverse-mode gradients of a loss given its per-step state gradients.

    ``dh[t]`` is the direct derivative of the loss with respect to ``h_t`` for
    ``t = 0..T`` (``dc`` likewise for LSTM memory cells). Contributions from
    several loss terms can be summed before the call. Returns gradients for
    every tensor in ``params.tensors()`` plus ``h0`` (and ``c0``).
    """
    if isinstance(params, LstmParams):
        if traj.C is None or "gates" not in traj.cache:
            raise StructureError("LSTM parameters require an LSTM trajectory")
        return _lstm_backward(params, traj, dh, dc)
    if traj.C is not None or "A" not in traj.cache:
        raise StructureError("SRNN parameters require an SRNN trajectory")
    if dc is not None:
        raise StructureError("SRNN trajectories have no memory cells")
    return _srnn_backward(params, traj, dh)


def _srnn_backward(params: SrnnParams, traj: Trajectory, dh):
    H, X, A = traj.H, traj.X, traj.cache["A"]
    T, B, d = X.shape
    n = params.hidden_size
    if H.shape[2] != n or d != params.input_size:
        raise StructureError("trajectory dimensions do not match parameters")
    dH = _upstream(dh, traj, H)
    G = np.empty((T, B, n))
    W_hh_T = params.W_hh.T
    tanh = params.activation == "tanh"
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(T - 1, -1, -1):
            if tanh:
                g = dH[t + 1] * (1.0 - H[t + 1] ** 2)
            else:
                g = dH[t + 1] * (A[t] > 0.0)
            G[t] = g
            dH[t] += g @ W_hh_T
        Gf = G.reshape(T * B, n)
        grads = {
            "W_xh": X.reshape(T * B, d).T @ Gf,
            "W_hh": H[:-1].reshape(T * B, n).T @ Gf,
        }
    if params.b is not None:
        grads["b"] = Gf.sum(axis=0)
    grads["h0"] = dH[0] if traj.batched else dH[0, 0]
    return grads


def _lstm_backward(params: LstmParams, traj: Trajectory, dh, dc):
    H, C, X = traj.H, traj.C, traj.X
    gates, tanh_c = traj.cache["gates"], traj.cache["tanh_c"]
    T, B, d = X.shape
    n = params.hidden_size
    if H.shape[2] != n or d != params.input_size:
        raise StructureError("trajectory dimensions do not match parameters")
    dH = _upstream(dh, traj, H)
    dC = _upstream(dc, traj, C)
    DZ = np.empty((T, B, 4 * n))
    W_h_T = params.W_h.T
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(T - 1, -1, -1):
            gz = gates[t]
            i, f, o, g = gz[:, :n], gz[:, n:2 * n], gz[:, 2 * n:3 * n], gz[:, 3 * n:]
            dh_t = dH[t + 1]
            if params.output_tanh:
                tc = tanh_c[t]
                do = dh_t * tc
                dc_t = dC[t + 1] + dh_t * o * (1.0 - tc ** 2)
            else:
                do = dh_t * C[t + 1]
                dc_t = dC[t + 1] + dh_t * o
            dC[t] += dc_t * f
            dz = DZ[t]
            dz[:, :n] = dc_t * g * i * (1.0 - i)
            dz[:, n:2 * n] = dc_t * C[t] * f * (1.0 - f)
            dz[:, 2 * n:3 * n] = do * o * (1.0 - o)
            dz[:, 3 * n:] = dc_t * i * (1.0 - g ** 2)
            dH[t] += dz @ W_h_T
        DZf = DZ.reshape(T * B, 4 * n)
        grads = {
            "W_x": X.reshape(T * B, d).T @ DZf,
            "W_h": H[:-1].reshape(T * B, n).T @ DZf,
            "b": DZf.sum(axis=0),
        }
    grads["h0"] = dH[0] if traj.batched else dH[0, 0]
    grads["c0"] = dC[0] if traj.batched else dC[0, 0]
    return grads
