"""Command-line entry point: ``normstab <subcommand> [options]``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .analysis import (eig_moduli, export_csv, forget_gate_stats, lm_eval_batch,
                       norm_trajectory)
from .checkpoint import load_checkpoint
from .config import ConfigError, ExperimentConfig, apply_settings, default_lm_config, load_config
from .network import NextSymbol, RecurrentNetwork, Regression
from .runner import adding_data, run_experiment, summary_csv, sweep
from .tasks import CharCorpus, adding_baselines, gen_adding, read_vocab
from .tensor import Rng
from .training import STREAM_EVAL


def _common(p):
    p.add_argument("--config", help="experiment config file (key = value, with sections)")
    p.add_argument("--seed", type=int, help="run a single seed instead of the configured list")
    p.add_argument("--out-dir", help="directory for summaries, checkpoints and reports")
    p.add_argument("--beta", type=float, help="penalty weight")
    p.add_argument("--cell", help="cell type")
    p.add_argument("--corpus", help="text corpus for char_lm")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override any config key")


def _config(args) -> ExperimentConfig:
    if args.config:
        config = load_config(args.config)
    elif args.corpus:
        config = default_lm_config(args.corpus)
    else:
        config = ExperimentConfig()
    settings = {}
    for item in args.set:
        key, _, value = item.partition("=")
        section, _, name = key.partition(".")
        settings[(section.strip(), name.strip())] = value
    if args.seed is not None:
        settings[("experiment", "seeds")] = str(args.seed)
    if args.beta is not None:
        settings[("regularizer", "beta")] = repr(args.beta)
    if args.cell:
        settings[("cell", "cell")] = args.cell
    if args.corpus:
        settings[("task", "corpus")] = args.corpus
    if args.out_dir:
        settings[("experiment", "out_dir")] = args.out_dir
    return apply_settings(config, settings)


def _load_network(config: ExperimentConfig, ckpt_path, vocab_path=None):
    ckpt = load_checkpoint(ckpt_path)
    if config.task == "char_lm":
        vocab_path = vocab_path or Path(ckpt_path).with_name("vocab.txt")
        symbols = read_vocab(vocab_path)
        V = len(symbols) + 1
        net = RecurrentNetwork.create(config.cell, Rng(0), V, config.hidden_size, V,
                                      use_bias=config.use_bias)
        objective = NextSymbol(V)
    else:
        net = RecurrentNetwork.create(config.cell, Rng(0), 2, config.hidden_size, 1,
                                      use_bias=config.use_bias)
        objective = Regression()
        symbols = None
    net.load(ckpt.tensors)
    return net, objective, symbols, ckpt


def _eval_batch(config, symbols, horizon, seed):
    if config.task == "adding":
        data = gen_adding(Rng(seed, STREAM_EVAL), horizon, config.eval_sequences,
                          config.restricted_markers)
        return data.X, data.targets
    corpus = CharCorpus.from_file(config.corpus, max_bytes=config.corpus_max_bytes or None)
    corpus.symbols = symbols
    a, b = corpus.splits
    return lm_eval_batch(corpus.encode(corpus.text[b:]), horizon, config.eval_sequences)


def cmd_train(args):
    config = _config(args)
    res = run_experiment(config, config.out_dir)
    sys.stdout.write(res.summary_csv())


def cmd_sweep(args):
    config = _config(args)
    betas = [float(b) for b in args.betas.split(",")]
    results = sweep(config, betas, config.out_dir)
    sys.stdout.write(summary_csv([r for e in results for r in e.seeds]))


def cmd_eval_horizon(args):
    config = _config(args)
    net, objective, symbols, ckpt = _load_network(config, args.checkpoint, args.vocab)
    horizon = args.horizon or config.eval_horizon
    batch = _eval_batch(config, symbols, horizon, ckpt.seed)
    report = norm_trajectory(net, batch, horizon, objective=objective)
    out = export_csv(report, args.output or Path(config.out_dir) / "norms.csv")
    print(out)


def cmd_spectrum(args):
    ckpt = load_checkpoint(args.checkpoint)
    if "W_hh" not in ckpt.tensors:
        raise SystemExit("checkpoint has no W_hh (spectra are for simple RNNs)")
    report = eig_moduli(ckpt.tensors["W_hh"])
    out = export_csv(report, args.output or Path(args.out_dir or ".") / "spectrum.csv")
    print(out)


def cmd_forget_gates(args):
    config = _config(args)
    net, objective, symbols, ckpt = _load_network(config, args.checkpoint, args.vocab)
    batch = _eval_batch(config, symbols, config.seq_len, ckpt.seed)
    report = forget_gate_stats(net, batch, objective=objective)
    out = export_csv(report, args.output or Path(config.out_dir) / "forget_gates.csv")
    print(out)


def cmd_adding_baselines(args):
    base = adding_baselines()
    print(f"short_sighted,{base['short_sighted']!r}")
    print(f"constant_predictor,{base['constant_predictor']!r}")
    if args.samples:
        data = gen_adding(Rng(args.seed or 0, STREAM_EVAL), args.length, args.samples)
        first = np.argmax(data.markers, axis=1)
        guess = data.values[np.arange(len(data)), first] + 0.5
        print(f"short_sighted_mc,{float(np.mean((guess - data.targets) ** 2))!r}")
        print(f"constant_predictor_mc,{float(np.mean((1.0 - data.targets) ** 2))!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="normstab", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train every configured seed and write summary.csv")
    _common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="run train for several beta values")
    _common(p)
    p.add_argument("--betas", default="0,50,500")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("eval-horizon", help="per-step norms and cost past the training horizon")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab")
    p.add_argument("--horizon", type=int)
    p.add_argument("--output")
    p.set_defaults(func=cmd_eval_horizon)

    p = sub.add_parser("spectrum", help="sorted eigenvalue moduli of W_hh")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--output")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("forget-gates", help="sorted average forget-gate activations")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab")
    p.add_argument("--output")
    p.set_defaults(func=cmd_forget_gates)

    p = sub.add_parser("adding-baselines", help="expected MSE of the reference predictors")
    _common(p)
    p.add_argument("--samples", type=int, default=0, help="also estimate by Monte Carlo")
    p.add_argument("--length", type=int, default=400)
    p.set_defaults(func=cmd_adding_baselines)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        raise SystemExit(f"config error: {exc}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
