"""Experiment configuration: INI-style ``key = value`` files with one section per component.

Recognised keys (anything else is rejected)::

    [experiment]  task, seeds, eval_horizon, eval_sequences, out_dir
    [cell]        cell, hidden_size, init_scale, use_bias, forget_bias
    [regularizer] variant, beta, target, target_norm, weight_noise_sigma,
                  dropout_p, skip_first_term
    [train]       optimizer, learning_rate, momentum, clip_threshold,
                  max_epochs, patience, batch_size
    [task]        seq_len, train_size, dev_size, test_size, restricted_markers,
                  corpus, corpus_max_bytes, carry_state
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .network import CELL_TYPES
from .optimizers import TrainConfig
from .regularizers import RegularizerSpec
from .tensor import ParameterError

TASKS = ("adding", "char_lm")


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _seeds(text: str) -> list[int]:
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(s) for s in text.replace(",", " ").split()]


def _opt_str(text: str):
    return text.strip() or None


# (section, key) -> (group, attribute, parser); group None means ExperimentConfig itself
KEYS = {
    ("experiment", "task"): (None, "task", str),
    ("experiment", "seeds"): (None, "seeds", _seeds),
    ("experiment", "eval_horizon"): (None, "eval_horizon", int),
    ("experiment", "eval_sequences"): (None, "eval_sequences", int),
    ("experiment", "out_dir"): (None, "out_dir", str),
    ("cell", "cell"): (None, "cell", str),
    ("cell", "hidden_size"): (None, "hidden_size", int),
    ("cell", "init_scale"): (None, "init_scale", float),
    ("cell", "use_bias"): (None, "use_bias", _bool),
    ("cell", "forget_bias"): (None, "forget_bias", float),
    ("regularizer", "variant"): ("regularizer", "variant", str),
    ("regularizer", "beta"): ("regularizer", "beta", float),
    ("regularizer", "target"): ("regularizer", "target", str),
    ("regularizer", "target_norm"): ("regularizer", "target_norm", float),
    ("regularizer", "weight_noise_sigma"): ("regularizer", "weight_noise_sigma", float),
    ("regularizer", "dropout_p"): ("regularizer", "dropout_p", float),
    ("regularizer", "skip_first_term"): ("regularizer", "skip_first_term", _bool),
    ("train", "optimizer"): ("train", "optimizer", str),
    ("train", "learning_rate"): ("train", "learning_rate", float),
    ("train", "momentum"): ("train", "momentum", float),
    ("train", "clip_threshold"): ("train", "clip_threshold", float),
    ("train", "max_epochs"): ("train", "max_epochs", int),
    ("train", "patience"): ("train", "patience", int),
    ("train", "batch_size"): (None, "batch_size", int),
    ("task", "seq_len"): (None, "seq_len", int),
    ("task", "train_size"): (None, "train_size", int),
    ("task", "dev_size"): (None, "dev_size", int),
    ("task", "test_size"): (None, "test_size", int),
    ("task", "restricted_markers"): (None, "restricted_markers", _bool),
    ("task", "corpus"): (None, "corpus", _opt_str),
    ("task", "corpus_max_bytes"): (None, "corpus_max_bytes", int),
    ("task", "carry_state"): (None, "carry_state", _bool),
}


@dataclass
class ExperimentConfig:
    task: str = "adding"
    cell: str = "irnn"
    hidden_size: int = 100
    regularizer: RegularizerSpec = field(default_factory=RegularizerSpec)
    train: TrainConfig = field(default_factory=lambda: TrainConfig(learning_rate=0.01, momentum=0.9))
    seq_len: int = 100
    batch_size: int | None = None
    seeds: list = field(default_factory=lambda: [0])
    eval_horizon: int = 1000
    eval_sequences: int = 16
    init_scale: float = 0.01
    use_bias: bool = True
    forget_bias: float = 1.0
    train_size: int = 10000
    dev_size: int = 1000
    test_size: int = 1000
    restricted_markers: bool = False
    corpus: str | None = None
    corpus_max_bytes: int = 0
    carry_state: bool = False
    out_dir: str = "runs"

    def __post_init__(self):
        self.validate()

    @property
    def effective_batch_size(self) -> int:
        if self.batch_size is not None:
            return self.batch_size
        return 32 if self.task == "char_lm" else 16

    def validate(self):
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.cell not in CELL_TYPES:
            raise ConfigError(f"unknown cell {self.cell!r}; expected one of {CELL_TYPES}")
        if self.hidden_size < 1:
            raise ConfigError("hidden_size must be >= 1")
        if self.seq_len < (2 if self.task == "adding" else 1):
            raise ConfigError(f"seq_len too small for task {self.task}: {self.seq_len}")
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if any(s < 0 or s >= 2**64 for s in self.seeds):
            raise ConfigError("seeds must be 64-bit unsigned integers")
        if self.eval_horizon < self.seq_len:
            raise ConfigError("eval_horizon must be at least the training sequence length")
        if self.regularizer.target == "memory_cell" and not self.cell.startswith("lstm"):
            raise ConfigError("memory_cell penalty target requires an LSTM cell")
        if self.task == "char_lm" and not self.corpus:
            raise ConfigError("char_lm experiments need a corpus path")
        if self.task == "adding" and self.carry_state:
            raise ConfigError("carry_state only applies to char_lm")

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def with_beta(self, beta: float) -> "ExperimentConfig":
        return self.replace(regularizer=dataclasses.replace(self.regularizer, beta=float(beta)))


def apply_settings(config: ExperimentConfig, settings: dict[tuple[str, str], str]) -> ExperimentConfig:
    """Apply raw ``(section, key) -> text`` settings and re-validate."""
    top, reg, train = {}, {}, {}
    for (section, key), text in settings.items():
        entry = KEYS.get((section, key))
        if entry is None:
            raise ConfigError(f"unknown config key [{section}] {key}")
        group, attr, parse = entry
        try:
            value = parse(text)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key}: {exc}") from exc
        {None: top, "regularizer": reg, "train": train}[group][attr] = value
    try:
        if reg:
            top["regularizer"] = dataclasses.replace(config.regularizer, **reg)
        if train:
            top["train"] = dataclasses.replace(config.train, **train)
        return dataclasses.replace(config, **top)
    except ParameterError as exc:
        raise ConfigError(str(exc)) from exc


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    parser.read_string(text)
    settings = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            settings[(section, key)] = value
    base = base or ExperimentConfig()
    # defaults for the LM task differ from the adding task when not set explicitly
    if settings.get(("experiment", "task"), base.task).strip() == "char_lm" and base == ExperimentConfig():
        base = default_lm_config(settings.get(("task", "corpus"), "").strip() or "corpus.txt")
    return apply_settings(base, settings)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def default_lm_config(corpus: str) -> ExperimentConfig:
    return ExperimentConfig(
        task="char_lm", cell="lstm", hidden_size=64, seq_len=50, corpus=corpus,
        train=TrainConfig(learning_rate=0.002, momentum=0.99, clip_threshold=1.0),
        eval_horizon=1000,
    )


def dump_config(config: ExperimentConfig) -> str:
    """Render ``config`` in the file format accepted by :func:`parse_config`."""
    sections: dict[str, list[str]] = {}
    for (section, key), (group, attr, _) in KEYS.items():
        obj = config if group is None else getattr(config, group)
        value = getattr(obj, attr)
        if attr == "batch_size":
            value = config.effective_batch_size
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, list):
            value = ",".join(str(v) for v in value)
        elif value is None:
            value = ""
        elif isinstance(value, float):
            value = repr(value)
        sections.setdefault(section, []).append(f"{key} = {value}")
    return "\n".join(f"[{s}]\n" + "\n".join(lines) + "\n" for s, lines in sections.items())
