"""Stability diagnostics: norm trajectories past the training horizon, W_hh spectra,
LSTM forget-gate averages, and their CSV exports."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cells import LstmParams, SrnnParams, lstm_forward
from .eigen import eigvals
from .estimators import CharRNNLanguageModel, RNNRegressor, unwrap
from .network import RecurrentNetwork
from .tensor import ParameterError

NORM_HEADER = ["t", "mean_h_norm", "std_h_norm", "mean_cost"]
CELL_HEADER = ["mean_c_norm", "std_c_norm"]
SPECTRUM_HEADER = ["rank", "modulus"]
FORGET_HEADER = ["rank", "avg_forget_gate"]


@dataclass
class NormTrajectoryReport:
    """Per-step statistics for ``t = 1..horizon`` over the evaluation batch."""

    horizon: int
    mean_h_norm: np.ndarray
    std_h_norm: np.ndarray
    mean_cost: np.ndarray
    mean_c_norm: np.ndarray | None = None
    std_c_norm: np.ndarray | None = None
    # average over sequences of log ||h_t||; -inf once any sequence has a zero state
    mean_log_h_norm: np.ndarray | None = None

    def __len__(self):
        return self.horizon


@dataclass
class SpectrumReport:
    moduli: np.ndarray
    eigenvalues: np.ndarray
    trace: float
    eigenvalue_sum: complex
    abs_det: float
    modulus_product: float

    def __len__(self):
        return len(self.moduli)


@dataclass
class ForgetGateReport:
    values: np.ndarray

    def __len__(self):
        return len(self.values)


def _model(model, objective=None):
    if isinstance(model, (RNNRegressor, CharRNNLanguageModel)):
        return unwrap(model)
    if isinstance(model, RecurrentNetwork):
        if objective is None:
            raise ParameterError("a bare RecurrentNetwork needs an objective")
        return model, objective
    raise ParameterError(f"unsupported model type {type(model).__name__}")


def lm_eval_batch(ids, horizon: int, count: int = 16):
    """``count`` windows of ``horizon`` steps from evenly spaced offsets of ``ids``.

    The text is repeated end to end when it is shorter than one window.
    """
    ids = np.asarray(ids)
    need = horizon + 1
    if len(ids) < need + count:
        reps = (need + count) // len(ids) + 1
        ids = np.tile(ids, reps)
    offsets = np.linspace(0, len(ids) - need, count).astype(np.int64)
    idx = offsets[:, None] + np.arange(need)[None, :]
    win = ids[idx]
    return win[:, :-1], win[:, 1:]


def _truncate(batch, horizon):
    inp, tgt = batch
    inp = np.asarray(inp)
    if inp.shape[1] < horizon:
        raise ParameterError(f"evaluation sequences have {inp.shape[1]} steps, need {horizon}")
    inp = inp[:, :horizon]
    if tgt is not None and np.ndim(tgt) == 2:
        tgt = np.asarray(tgt)[:, :horizon]
    return inp, tgt


def _norms(S):
    with np.errstate(over="ignore", invalid="ignore"):
        return np.sqrt(np.sum(S * S, axis=2))


def _norm_stats(S):
    r = _norms(S)
    with np.errstate(over="ignore", invalid="ignore"):
        return r.mean(axis=1), r.std(axis=1)


def norm_trajectory(model, eval_sequences, horizon: int, objective=None, h0=None,
                    c0=None) -> NormTrajectoryReport:
    """Run one uninterrupted forward pass of ``horizon`` steps and record per-step statistics.

    ``eval_sequences`` is a batch in the model's format: ``(X, y)`` for the
    regressor, ``(input_ids, target_ids)`` for the language model. Non-finite
    costs are reported as ``inf``. ``h0``/``c0`` default to zero states.
    """
    if horizon < 1:
        raise ParameterError(f"horizon must be >= 1, got {horizon}")
    net, objective = _model(model, objective)
    batch = _truncate(eval_sequences, horizon)
    traj = net.forward(objective.inputs(batch), h0, c0)
    mean_h, std_h = _norm_stats(traj.H[1:])
    costs = objective.step_costs(net, traj.H, batch)
    with np.errstate(invalid="ignore", over="ignore"):
        mean_cost = costs.mean(axis=1)
    mean_cost = np.where(np.isfinite(mean_cost), mean_cost, np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        mean_log = np.log(_norms(traj.H[1:])).mean(axis=1)
    report = NormTrajectoryReport(horizon, mean_h, std_h, mean_cost, mean_log_h_norm=mean_log)
    if traj.C is not None:
        report.mean_c_norm, report.std_c_norm = _norm_stats(traj.C[1:])
    return report


def eig_moduli(W) -> SpectrumReport:
    W = np.asarray(W, dtype=float)
    lam = eigvals(W)
    moduli = np.sort(np.abs(lam))[::-1]
    return SpectrumReport(
        moduli=moduli,
        eigenvalues=lam,
        trace=float(np.trace(W)),
        eigenvalue_sum=complex(lam.sum()),
        abs_det=float(np.exp(np.linalg.slogdet(W)[1])),
        modulus_product=float(np.prod(moduli)),
    )


def transition_matrix(model) -> np.ndarray:
    if isinstance(model, (RNNRegressor, CharRNNLanguageModel)):
        model = unwrap(model)[0]
    core = model.core if isinstance(model, RecurrentNetwork) else model
    if isinstance(core, SrnnParams):
        return core.W_hh
    raise ParameterError("spectra are defined for simple-RNN transition matrices only")


def forget_gate_stats(model, eval_sequences, objective=None) -> ForgetGateReport:
    """Average forget-gate activation of every memory cell over steps and sequences, sorted ascending."""
    if isinstance(model, (RNNRegressor, CharRNNLanguageModel, RecurrentNetwork)):
        net, objective = _model(model, objective)
        core = net.core
        x = objective.inputs(eval_sequences)
    else:
        core = model
        x = np.asarray(eval_sequences, dtype=float)
    if not isinstance(core, LstmParams):
        raise TypeError("forget-gate statistics need an LSTM model")
    traj = lstm_forward(core, x)
    n = core.hidden_size
    f = traj.cache["gates"][:, :, n:2 * n]
    return ForgetGateReport(np.sort(f.mean(axis=(0, 1))))


def _fmt(v) -> str:
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.12g}"


def export_csv(report, path) -> Path:
    path = Path(path)
    if isinstance(report, NormTrajectoryReport):
        header = list(NORM_HEADER)
        cols = [report.mean_h_norm, report.std_h_norm, report.mean_cost]
        if report.mean_c_norm is not None:
            header += CELL_HEADER
            cols += [report.mean_c_norm, report.std_c_norm]
        rows = [[str(t + 1)] + [_fmt(c[t]) for c in cols] for t in range(report.horizon)]
    elif isinstance(report, SpectrumReport):
        header = SPECTRUM_HEADER
        rows = [[str(i + 1), _fmt(m)] for i, m in enumerate(report.moduli)]
    elif isinstance(report, ForgetGateReport):
        header = FORGET_HEADER
        rows = [[str(i + 1), _fmt(v)] for i, v in enumerate(report.values)]
    else:
        raise TypeError(f"cannot export {type(report).__name__}")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc
    return path


def read_csv(path) -> dict[str, np.ndarray]:
    """Parse a report CSV back into float columns keyed by header name."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    return {name: np.array([float(r[i]) for r in body]) for i, name in enumerate(header)}
