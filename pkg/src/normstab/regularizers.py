"""Norm-stability penalties on recurrent trajectories, plus weight noise and dropout.

Every penalty is computed per sequence on the states ``s_0..s_T`` (hidden
states, or LSTM memory cells) and averaged over the batch. ``penalty_backward``
returns the exact gradient with respect to every state, in the same layout as
the states, so it can be added to the task-loss gradient before BPTT.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import ParameterError, Rng

EPS = 1e-8

VARIANTS = (
    "norm_stabilizer",
    "state_diff_sq",
    "relative_norm_diff_sq",
    "l1_norm_diff_sq",
    "fixed_target_sq",
    "endpoint_diff_sq",
    "norm_diff_abs",
    "norm_sq",
    "none",
)
TARGETS = ("hidden", "memory_cell")


@dataclass
class RegularizerSpec:
    variant: str = "norm_stabilizer"
    beta: float = 0.0
    target: str = "hidden"
    target_norm: float = 5.0
    weight_noise_sigma: float = 0.0
    dropout_p: float = 0.0
    skip_first_term: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ParameterError(f"unknown penalty variant {self.variant!r}; expected one of {VARIANTS}")
        if self.target not in TARGETS:
            raise ParameterError(f"unknown penalty target {self.target!r}; expected one of {TARGETS}")
        if not self.beta >= 0:
            raise ParameterError(f"beta must be >= 0, got {self.beta}")
        if not self.weight_noise_sigma >= 0:
            raise ParameterError(f"weight noise sigma must be >= 0, got {self.weight_noise_sigma}")
        if not 0 <= self.dropout_p < 1:
            raise ParameterError(f"dropout p must be in [0, 1), got {self.dropout_p}")

    @property
    def active(self) -> bool:
        return self.variant != "none" and self.beta > 0


def _states(spec: RegularizerSpec, trajectory):
    if spec.target == "memory_cell":
        if trajectory.C is None:
            raise ParameterError("memory_cell penalties need an LSTM trajectory")
        S = trajectory.C
    else:
        S = trajectory.H
    if S.shape[0] < 2:
        raise ParameterError("penalties need at least one time step (T >= 1)")
    return S


def _step_mask(T: int, skip_first: bool) -> np.ndarray:
    # weight of the term pairing step t with t-1, for t = 1..T
    m = np.ones(T)
    if skip_first:
        m[0] = 0.0
    return m


def states_penalty(variant, S, beta, target_norm=5.0, skip_first_term=False) -> float:
    """Penalty value for states ``S`` of shape ``(T+1, B, n)``, averaged over the batch."""
    T = S.shape[0] - 1
    if T < 1:
        raise ParameterError("penalties need at least one time step (T >= 1)")
    if variant == "none" or beta == 0:
        return 0.0
    m = _step_mask(T, skip_first_term)[:, None]
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        if variant == "state_diff_sq":
            d = S[1:] - S[:-1]
            terms = m * np.sum(d * d, axis=2)
            per_seq = terms.sum(axis=0) / T
        elif variant == "l1_norm_diff_sq":
            r = np.sum(np.abs(S), axis=2)
            per_seq = (m * (r[1:] - r[:-1]) ** 2).sum(axis=0) / T
        else:
            r = np.sqrt(np.sum(S * S, axis=2))
            if variant == "norm_stabilizer":
                per_seq = (m * (r[1:] - r[:-1]) ** 2).sum(axis=0) / T
            elif variant == "relative_norm_diff_sq":
                q = (r[1:] - r[:-1]) / np.maximum(r[1:], EPS)
                per_seq = (m * q * q).sum(axis=0) / T
            elif variant == "fixed_target_sq":
                per_seq = ((r[1:] - target_norm) ** 2).sum(axis=0) / T
            elif variant == "endpoint_diff_sq":
                per_seq = (r[0] - r[T]) ** 2
            elif variant == "norm_diff_abs":
                per_seq = (m * np.abs(r[1:] - r[:-1])).sum(axis=0) / T
            elif variant == "norm_sq":
                per_seq = (r[1:] ** 2).sum(axis=0) / T
            else:
                raise ParameterError(f"unknown penalty variant {variant!r}")
    return float(beta * per_seq.mean())


def states_penalty_grad(variant, S, beta, target_norm=5.0, skip_first_term=False) -> np.ndarray:
    """Gradient of :func:`states_penalty` with respect to ``S``."""
    T = S.shape[0] - 1
    if T < 1:
        raise ParameterError("penalties need at least one time step (T >= 1)")
    B = S.shape[1]
    grad = np.zeros_like(S)
    if variant == "none" or beta == 0:
        return grad
    scale = beta / B
    m = _step_mask(T, skip_first_term)[:, None]
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        if variant == "state_diff_sq":
            d = m[:, :, None] * (S[1:] - S[:-1])
            grad[1:] += d
            grad[:-1] -= d
            return grad * (2.0 * scale / T)
        if variant == "l1_norm_diff_sq":
            r = np.sum(np.abs(S), axis=2)
            dr = np.zeros_like(r)
            e = m * (r[1:] - r[:-1])
            dr[1:] += e
            dr[:-1] -= e
            return (2.0 * scale / T) * dr[:, :, None] * np.sign(S)

        r = np.sqrt(np.sum(S * S, axis=2))
        dr = np.zeros_like(r)
        if variant == "norm_stabilizer":
            e = m * (r[1:] - r[:-1])
            dr[1:] += e
            dr[:-1] -= e
            dr *= 2.0 / T
        elif variant == "relative_norm_diff_sq":
            R = np.maximum(r[1:], EPS)
            q = m * (r[1:] - r[:-1]) / R
            # d q_t / d r_t = r_{t-1} / r_t^2 when r_t > EPS, else 1 / EPS
            dq_now = np.where(r[1:] > EPS, r[:-1] / (R * R), 1.0 / EPS)
            dr[1:] += q * dq_now
            dr[:-1] -= q / R
            dr *= 2.0 / T
        elif variant == "fixed_target_sq":
            dr[1:] = 2.0 * (r[1:] - target_norm) / T
        elif variant == "endpoint_diff_sq":
            e = r[0] - r[T]
            dr[0] = 2.0 * e
            dr[T] = -2.0 * e
        elif variant == "norm_diff_abs":
            e = m * np.sign(r[1:] - r[:-1])
            dr[1:] += e
            dr[:-1] -= e
            dr /= T
        elif variant == "norm_sq":
            grad[1:] = S[1:] * (2.0 * scale / T)
            return grad
        else:
            raise ParameterError(f"unknown penalty variant {variant!r}")
        unit = S / np.maximum(r, EPS)[:, :, None]
        return scale * dr[:, :, None] * unit


def penalty_value(spec: RegularizerSpec, trajectory) -> float:
    S = _states(spec, trajectory)
    return states_penalty(spec.variant, S, spec.beta, spec.target_norm, spec.skip_first_term)


def penalty_backward(spec: RegularizerSpec, trajectory) -> np.ndarray:
    """Per-step gradient of the penalty, shaped like ``trajectory.hiddens`` (or ``.cells``)."""
    S = _states(spec, trajectory)
    g = states_penalty_grad(spec.variant, S, spec.beta, spec.target_norm, spec.skip_first_term)
    return g if trajectory.batched else g[:, 0]


class NoiseHandle:
    """Keeps the clean weights while noisy copies are in use."""

    def __init__(self, tensors, clean):
        self._tensors = tensors
        self._clean = clean

    def restore(self):
        for name, value in self._clean.items():
            self._tensors[name][...] = value
        self._clean = {}


def apply_weight_noise(tensors: dict[str, np.ndarray], sigma: float, rng: Rng | None):
    """Add N(0, sigma^2) noise in place to every weight matrix (names starting with ``W``).

    Biases are left alone. Call ``restore()`` on the returned handle after the
    forward/backward pass so the update is applied to the clean weights.
    """
    if sigma < 0:
        raise ParameterError(f"weight noise sigma must be >= 0, got {sigma}")
    clean = {}
    if sigma > 0:
        for name in sorted(tensors):
            if name.startswith("W"):
                w = tensors[name]
                clean[name] = w.copy()
                w += rng.normal(0.0, sigma, w.shape)
    return tensors, NoiseHandle(tensors, clean)


def dropout_mask(rng: Rng | None, shape, p: float, train: bool = True) -> np.ndarray:
    """Inverted-dropout mask: 0 with probability ``p``, else ``1/(1-p)``."""
    if not 0 <= p < 1:
        raise ParameterError(f"dropout p must be in [0, 1), got {p}")
    if not train or p == 0:
        return np.ones(shape)
    keep = rng.random(shape) >= p
    return keep / (1.0 - p)
