"""Multi-seed experiments and beta sweeps with CSV summaries."""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

from .analysis import eig_moduli, export_csv, forget_gate_stats, lm_eval_batch, norm_trajectory
from .checkpoint import Checkpoint, save_checkpoint
from .config import ExperimentConfig
from .estimators import CharRNNLanguageModel, RNNRegressor
from .tasks import CharCorpus, gen_adding
from .tensor import Rng
from .training import STREAM_DATA, STREAM_EVAL

log = logging.getLogger(__name__)

SUMMARY_HEADER = ["seed", "beta", "cell", "dev_metric", "test_metric", "epochs", "rollbacks"]


@dataclass
class SeedResult:
    seed: int
    beta: float
    cell: str
    dev_metric: float
    test_metric: float
    epochs: int
    rollbacks: int
    failed: bool = False
    checkpoint: Path | None = None
    reports: dict = field(default_factory=dict)

    def row(self) -> list[str]:
        if self.failed:
            dev = test = "failed"
        else:
            dev, test = _num(self.dev_metric), _num(self.test_metric)
        return [str(self.seed), _num(self.beta), self.cell, dev, test, str(self.epochs),
                str(self.rollbacks)]


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    seeds: list[SeedResult]
    summary_path: Path | None = None

    def summary_csv(self) -> str:
        return summary_csv(self.seeds)


def _num(v: float) -> str:
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def summary_csv(results) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    for r in results:
        w.writerow(r.row())
    return buf.getvalue()


def make_estimator(config: ExperimentConfig, seed: int):
    reg, tr = config.regularizer, config.train
    common = dict(
        cell=config.cell, hidden_size=config.hidden_size, penalty=reg.variant, beta=reg.beta,
        penalty_target=reg.target, target_norm=reg.target_norm,
        skip_first_term=reg.skip_first_term, weight_noise=reg.weight_noise_sigma,
        dropout=reg.dropout_p, optimizer=tr.optimizer, learning_rate=tr.learning_rate,
        momentum=tr.momentum, clip_threshold=tr.clip_threshold, max_epochs=tr.max_epochs,
        patience=tr.patience, batch_size=config.effective_batch_size,
        init_scale=config.init_scale, use_bias=config.use_bias,
        forget_bias=config.forget_bias, random_state=seed,
    )
    if config.task == "adding":
        return RNNRegressor(**common)
    return CharRNNLanguageModel(seq_len=config.seq_len, carry_state=config.carry_state, **common)


def adding_data(config: ExperimentConfig, seed: int):
    T = config.seq_len
    r = config.restricted_markers
    train = gen_adding(Rng(seed, STREAM_DATA, 0), T, config.train_size, r)
    dev = gen_adding(Rng(seed, STREAM_DATA, 1), T, config.dev_size, r)
    test = gen_adding(Rng(seed, STREAM_DATA, 2), T, config.test_size, r)
    return train, dev, test


def load_corpus(config: ExperimentConfig) -> CharCorpus:
    return CharCorpus.from_file(config.corpus, max_bytes=config.corpus_max_bytes or None)


def _corpus_texts(corpus: CharCorpus):
    a, b = corpus.splits
    return corpus.text[:a], corpus.text[a:b], corpus.text[b:]


def run_seed(config: ExperimentConfig, seed: int, out_dir: Path | None = None,
             corpus: CharCorpus | None = None, **fit_kw) -> SeedResult:
    est = make_estimator(config, seed)
    beta = config.regularizer.beta
    if config.task == "adding":
        train, dev, test = adding_data(config, seed)
        est.fit(train.X, train.targets, eval_set=(dev.X, dev.targets), **fit_kw)
        dev_metric = est.history_.best_dev
        test_metric = est.mse(test.X, test.targets)
        eval_data = gen_adding(Rng(seed, STREAM_EVAL), config.eval_horizon, config.eval_sequences,
                               config.restricted_markers)
        eval_batch = (eval_data.X, eval_data.targets)
    else:
        corpus = corpus or load_corpus(config)
        train_text, dev_text, test_text = _corpus_texts(corpus)
        est.fit(train_text, eval_text=dev_text, symbols=corpus.symbols, **fit_kw)
        dev_metric = est.history_.best_dev
        test_metric = est.bits_per_character(test_text)
        eval_batch = lm_eval_batch(est.encode(test_text), config.eval_horizon,
                                   config.eval_sequences)
    result = SeedResult(seed, beta, config.cell, dev_metric, test_metric, est.n_epochs_,
                        est.n_rollbacks_, failed=est.failed_)
    result.estimator = est
    if out_dir is not None:
        _write_artifacts(result, est, config, eval_batch, out_dir, corpus)
    return result


def _write_artifacts(result, est, config, eval_batch, out_dir: Path, corpus):
    run_dir = Path(out_dir) / f"seed{result.seed}_beta{_num(result.beta)}"
    run_dir.mkdir(parents=True, exist_ok=True)
    ckpt = Checkpoint(epoch=est.history_.best_epoch, learning_rate=est.history_.final_lr,
                      seed=result.seed, rng_counter=0,
                      tensors={k: v for k, v in est.network_.tensors().items()})
    result.checkpoint = run_dir / "best.ckpt"
    save_checkpoint(ckpt, result.checkpoint)
    if corpus is not None:
        corpus.write_vocab(run_dir / "vocab.txt")
    report = norm_trajectory(est, eval_batch, config.eval_horizon)
    result.reports["norms"] = export_csv(report, run_dir / "norms.csv")
    if est.network_.is_lstm:
        fg = forget_gate_stats(est, eval_batch)
        result.reports["forget_gates"] = export_csv(fg, run_dir / "forget_gates.csv")
    else:
        spec = eig_moduli(est.network_.core.W_hh)
        result.reports["spectrum"] = export_csv(spec, run_dir / "spectrum.csv")


def run_experiment(config: ExperimentConfig, out_dir=None, **fit_kw) -> ExperimentResult:
    """Train one model per seed and collect the summary table.

    Seeds that exhaust the NaN-rollback budget are kept in the table and
    marked ``failed``; the remaining seeds still run.
    """
    corpus = load_corpus(config) if config.task == "char_lm" else None
    results = []
    for seed in config.seeds:
        log.info("seed %d beta %g cell %s", seed, config.regularizer.beta, config.cell)
        results.append(run_seed(config, seed, Path(out_dir) if out_dir else None, corpus, **fit_kw))
    res = ExperimentResult(config, results)
    if out_dir is not None:
        res.summary_path = Path(out_dir) / "summary.csv"
        res.summary_path.write_text(res.summary_csv())
    return res


def sweep(config: ExperimentConfig, beta_values, out_dir=None, **fit_kw) -> list[ExperimentResult]:
    """Run :func:`run_experiment` for each beta, in the given order, and write one table."""
    beta_values = list(beta_values)
    if not beta_values:
        raise ValueError("sweep needs at least one beta value")
    out = []
    for beta in beta_values:
        sub = Path(out_dir) / f"beta{_num(float(beta))}" if out_dir else None
        out.append(run_experiment(config.with_beta(beta), sub, **fit_kw))
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "sweep.csv").write_text(summary_csv([r for e in out for r in e.seeds]))
    return out
