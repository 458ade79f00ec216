"""Adding-task generator, character corpora and the two task losses."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .tensor import ParameterError, Rng


@dataclass(frozen=True)
class AddingExample:
    values: np.ndarray
    markers: np.ndarray
    target: float

    @property
    def inputs(self) -> np.ndarray:
        return np.stack([self.values, self.markers], axis=1)


@dataclass
class AddingData:
    """A batch of adding-task examples held as arrays.

    ``values`` and ``markers`` have shape ``(count, T)``; ``targets`` has shape ``(count,)``.
    """

    values: np.ndarray
    markers: np.ndarray
    targets: np.ndarray

    def __len__(self):
        return len(self.targets)

    def __getitem__(self, i) -> AddingExample:
        return AddingExample(self.values[i], self.markers[i], float(self.targets[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def X(self) -> np.ndarray:
        """Inputs as ``(count, T, 2)``: the value and marker at each step."""
        return np.stack([self.values, self.markers], axis=2)


def gen_adding(rng: Rng, T: int, count: int, restricted: bool = False) -> AddingData:
    """Draw ``count`` adding-task sequences of length ``T``.

    Values are i.i.d. U[0, 1). Two distinct marker positions are drawn
    uniformly over all ``T`` steps, or with ``restricted=True`` one in each
    half of the sequence.
    """
    if T < 2:
        raise ParameterError(f"adding task needs T >= 2, got {T}")
    if count < 0:
        raise ParameterError(f"count must be >= 0, got {count}")
    values = rng.uniform(0.0, 1.0, (count, T))
    if restricted:
        half = T // 2
        first = rng.integers(0, half, count)
        second = rng.integers(half, T, count)
    else:
        first = rng.integers(0, T, count)
        second = rng.integers(0, T - 1, count)
        second = second + (second >= first)
    markers = np.zeros((count, T))
    rows = np.arange(count)
    markers[rows, first] = 1.0
    markers[rows, second] = 1.0
    targets = values[rows, first] + values[rows, second]
    return AddingData(values, markers, targets)


def adding_baselines() -> dict[str, float]:
    """Expected MSE of the two reference predictors.

    ``short_sighted`` predicts one marked value plus 0.5 (the mean of the
    other), leaving the variance of a single U[0, 1) draw. ``constant_predictor``
    always answers 1.0 and pays the variance of the sum of two draws.
    """
    return {"short_sighted": 1.0 / 12.0, "constant_predictor": 1.0 / 6.0}


def mse_loss(pred, target):
    diff = np.asarray(pred, dtype=float) - np.asarray(target, dtype=float)
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def softmax_xent(logits, target_ids):
    """Mean cross-entropy in nats and its gradient with respect to ``logits``.

    ``logits`` is ``(V,)`` with a scalar target, or ``(N, V)`` with ``N`` targets.
    """
    logits = np.asarray(logits, dtype=float)
    single = logits.ndim == 1
    Z = logits[None, :] if single else logits
    ids = np.atleast_1d(np.asarray(target_ids, dtype=np.int64))
    N, V = Z.shape
    if V < 2:
        raise ParameterError(f"need at least two classes, got {V}")
    if ids.shape != (N,) or ids.min() < 0 or ids.max() >= V:
        raise ParameterError("target ids out of range or mismatched with logits")
    with np.errstate(over="ignore", invalid="ignore"):
        shifted = Z - Z.max(axis=1, keepdims=True)
        logsum = np.log(np.exp(shifted).sum(axis=1))
        rows = np.arange(N)
        nll = logsum - shifted[rows, ids]
        probs = np.exp(shifted - logsum[:, None])
    grad = probs
    grad[rows, ids] -= 1.0
    grad /= N
    loss = float(nll.mean())
    return loss, (grad[0] if single else grad)


def bits_per_character(total_nats: float, total_symbols: int) -> float:
    return total_nats / total_symbols / math.log(2.0)


@dataclass
class CharCorpus:
    """A byte corpus split into train/dev/test with a vocabulary built from train.

    Symbols are byte values. Ids ``0..len(symbols)-1`` follow sorted byte order;
    the last id (``unk_id``) stands for any byte not seen in the train split.
    """

    text: bytes
    symbols: list[int]
    splits: tuple[int, int]

    @classmethod
    def from_bytes(cls, text: bytes, fractions=(0.9, 0.05)) -> "CharCorpus":
        if isinstance(text, str):
            text = text.encode("utf-8")
        n = len(text)
        a = int(n * fractions[0])
        b = a + int(n * fractions[1])
        symbols = sorted(set(text[:a]))
        if not symbols:
            raise ParameterError("train split is empty")
        return cls(text, symbols, (a, b))

    @classmethod
    def from_file(cls, path, fractions=(0.9, 0.05), max_bytes=None) -> "CharCorpus":
        data = Path(path).read_bytes()
        if max_bytes:
            data = data[:max_bytes]
        return cls.from_bytes(data, fractions)

    @property
    def unk_id(self) -> int:
        return len(self.symbols)

    @property
    def vocab_size(self) -> int:
        return len(self.symbols) + 1

    def encode(self, text) -> np.ndarray:
        if isinstance(text, str):
            text = text.encode("utf-8")
        lut = np.full(256, self.unk_id, dtype=np.int64)
        lut[self.symbols] = np.arange(len(self.symbols))
        return lut[np.frombuffer(bytes(text), dtype=np.uint8)]

    def split(self, name: str) -> np.ndarray:
        a, b = self.splits
        part = {"train": self.text[:a], "dev": self.text[a:b], "test": self.text[b:]}[name]
        return self.encode(part)

    def write_vocab(self, path) -> None:
        lines = [f"{i}\t{s}" for i, s in enumerate(self.symbols)]
        lines.append(f"{self.unk_id}\tunk")
        Path(path).write_text("\n".join(lines) + "\n")


def read_vocab(path) -> list[int]:
    symbols = []
    for i, line in enumerate(Path(path).read_text().splitlines()):
        idx, sym = line.split("\t")
        if int(idx) != i:
            raise ParameterError(f"{path}: ids must be dense, line {i + 1} has id {idx}")
        if sym != "unk":
            symbols.append(int(sym))
    return symbols


def char_windows(ids: np.ndarray, seq_len: int):
    """Non-overlapping windows: ``(inputs, targets)`` arrays of shape ``(W, seq_len)``.

    Window ``k`` reads ``ids[k*L : k*L+L]`` and predicts ``ids[k*L+1 : k*L+L+1]``.
    Symbols left over at the end are dropped.
    """
    if seq_len < 1:
        raise ParameterError(f"seq_len must be >= 1, got {seq_len}")
    ids = np.asarray(ids)
    if len(ids) < seq_len + 1:
        raise ParameterError(f"corpus of {len(ids)} symbols is shorter than seq_len + 1 = {seq_len + 1}")
    count = (len(ids) - 1) // seq_len
    starts = np.arange(count) * seq_len
    idx = starts[:, None] + np.arange(seq_len)[None, :]
    return ids[idx], ids[idx + 1]


def char_batches(ids, seq_len: int, batch_size: int, order=None):
    """Yield ``(inputs, targets)`` batches of shape ``(B, seq_len)`` over the windows.

    ``order`` permutes the windows (one epoch's shuffle); the last batch may be short.
    """
    inp, tgt = char_windows(ids, seq_len)
    if order is None:
        order = np.arange(len(inp))
    for k in range(0, len(order), batch_size):
        sel = order[k:k + batch_size]
        yield inp[sel], tgt[sel]


def char_streams(ids, seq_len: int, batch_size: int):
    """Yield batches for stateful training: ``batch_size`` contiguous streams read in lockstep.

    Batch ``k`` row ``j`` continues exactly where batch ``k-1`` row ``j`` ended.
    """
    inp, tgt = char_windows(ids, seq_len)
    per_stream = len(inp) // batch_size
    if per_stream == 0:
        raise ParameterError("corpus too short for the requested number of streams")
    rows = np.arange(batch_size)[:, None] * per_stream
    for k in range(per_stream):
        sel = (rows + k).ravel()
        yield inp[sel], tgt[sel]
