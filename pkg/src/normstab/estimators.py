"""scikit-learn compatible estimators around the recurrent network and trainer."""
from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, column_or_1d

from .network import NextSymbol, RecurrentNetwork, Regression, total_loss
from .optimizers import TrainConfig
from .regularizers import RegularizerSpec
from .tasks import CharCorpus, char_batches, char_streams, char_windows
from .tensor import ParameterError, Rng
from .training import STREAM_INIT, STREAM_SHUFFLE, fit_network


class _RecurrentBase(BaseEstimator):
    def _regularizer(self) -> RegularizerSpec:
        return RegularizerSpec(
            variant=self.penalty,
            beta=float(self.beta),
            target=self.penalty_target,
            target_norm=float(self.target_norm),
            weight_noise_sigma=float(self.weight_noise),
            dropout_p=float(self.dropout),
            skip_first_term=bool(self.skip_first_term),
        )

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            optimizer=self.optimizer,
            learning_rate=float(self.learning_rate),
            momentum=float(self.momentum),
            clip_threshold=float(self.clip_threshold),
            max_epochs=int(self.max_epochs),
            patience=int(self.patience),
            seed=int(self.random_state),
        )

    def _build(self, input_size, output_size):
        rng = Rng(int(self.random_state), STREAM_INIT)
        return RecurrentNetwork.create(
            self.cell, rng, input_size, int(self.hidden_size), output_size,
            init_scale=float(self.init_scale), use_bias=bool(self.use_bias),
            forget_bias=float(self.forget_bias),
        )

    def _store_history(self, hist):
        self.history_ = hist
        self.n_epochs_ = hist.epochs
        self.n_rollbacks_ = hist.rollbacks
        self.failed_ = hist.failed


class RNNRegressor(RegressorMixin, _RecurrentBase):
    """Sequence-to-scalar regression read out from the last hidden state.

    ``X`` has shape ``(n_samples, T, n_features)``; ``y`` has shape ``(n_samples,)``.
    Defaults follow the adding-task setup: IRNN, uniform init in [-0.01, 0.01],
    learning rate 0.01 and gradient clipping at 1.
    """

    def __init__(self, cell="irnn", hidden_size=100, penalty="norm_stabilizer", beta=0.0,
                 penalty_target="hidden", target_norm=5.0, skip_first_term=False,
                 weight_noise=0.0, dropout=0.0, optimizer="sgd_momentum", learning_rate=0.01,
                 momentum=0.0, clip_threshold=1.0, max_epochs=10, patience=25, batch_size=16,
                 init_scale=0.01, use_bias=True, forget_bias=1.0, random_state=0):
        self.cell = cell
        self.hidden_size = hidden_size
        self.penalty = penalty
        self.beta = beta
        self.penalty_target = penalty_target
        self.target_norm = target_norm
        self.skip_first_term = skip_first_term
        self.weight_noise = weight_noise
        self.dropout = dropout
        self.optimizer = optimizer
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.clip_threshold = clip_threshold
        self.max_epochs = max_epochs
        self.patience = patience
        self.batch_size = batch_size
        self.init_scale = init_scale
        self.use_bias = use_bias
        self.forget_bias = forget_bias
        self.random_state = random_state

    def _check_X(self, X):
        X = check_array(X, allow_nd=True, dtype=np.float64, ensure_all_finite=True)
        if X.ndim != 3:
            raise ValueError(f"expected X of shape (n_samples, T, n_features), got {X.shape}")
        return X

    def fit(self, X, y, eval_set=None, **fit_kw):
        X = self._check_X(X)
        y = column_or_1d(y).astype(np.float64)
        if len(y) != len(X):
            raise ValueError(f"X has {len(X)} samples but y has {len(y)}")
        spec = self._regularizer()
        config = self._train_config()
        self.n_features_in_ = X.shape[2]
        self.network_ = self._build(X.shape[2], 1)
        objective = Regression()
        bs = int(self.batch_size)

        def batches(epoch):
            order = Rng(config.seed, STREAM_SHUFFLE, epoch).permutation(len(X))
            for k in range(0, len(order), bs):
                sel = order[k:k + bs]
                yield X[sel], y[sel]

        evaluate = None
        if eval_set is not None:
            Xd = self._check_X(eval_set[0])
            yd = column_or_1d(eval_set[1]).astype(np.float64)
            evaluate = lambda: self._mse(Xd, yd)  # noqa: E731
        hist = fit_network(self.network_, objective, spec, config, batches, evaluate, **fit_kw)
        self._store_history(hist)
        return self

    def _predict(self, X, chunk=512):
        out = []
        objective = Regression()
        for k in range(0, len(X), chunk):
            xb = objective.inputs((X[k:k + chunk], None))
            traj = self.network_.forward(xb)
            with np.errstate(over="ignore", invalid="ignore"):
                out.append(objective.readout(self.network_, traj.H)[:, 0])
        return np.concatenate(out) if out else np.zeros(0)

    def predict(self, X):
        check_is_fitted(self, "network_")
        return self._predict(self._check_X(X))

    def _mse(self, X, y):
        with np.errstate(over="ignore", invalid="ignore"):
            d = self._predict(X) - y
            v = float(np.mean(d * d))
        return v if math.isfinite(v) else math.inf

    def mse(self, X, y) -> float:
        check_is_fitted(self, "network_")
        return self._mse(self._check_X(X), column_or_1d(y).astype(np.float64))


class CharRNNLanguageModel(_RecurrentBase):
    """Character-level language model over byte text.

    ``fit`` takes the training text (``bytes`` or ``str``) and builds the
    vocabulary from it; ``score`` returns negative bits per character so that
    higher is better, as scikit-learn expects.
    """

    def __init__(self, cell="lstm", hidden_size=64, penalty="norm_stabilizer", beta=0.0,
                 penalty_target="hidden", target_norm=5.0, skip_first_term=False,
                 weight_noise=0.0, dropout=0.0, optimizer="sgd_momentum", learning_rate=0.002,
                 momentum=0.99, clip_threshold=1.0, max_epochs=10, patience=25, batch_size=32,
                 seq_len=50, carry_state=False, init_scale=0.01, use_bias=True, forget_bias=1.0,
                 random_state=0):
        self.cell = cell
        self.hidden_size = hidden_size
        self.penalty = penalty
        self.beta = beta
        self.penalty_target = penalty_target
        self.target_norm = target_norm
        self.skip_first_term = skip_first_term
        self.weight_noise = weight_noise
        self.dropout = dropout
        self.optimizer = optimizer
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.clip_threshold = clip_threshold
        self.max_epochs = max_epochs
        self.patience = patience
        self.batch_size = batch_size
        self.seq_len = seq_len
        self.carry_state = carry_state
        self.init_scale = init_scale
        self.use_bias = use_bias
        self.forget_bias = forget_bias
        self.random_state = random_state

    def encode(self, text) -> np.ndarray:
        check_is_fitted(self, "vocab_")
        return self.vocab_.encode(text)

    def _batches(self, ids, epoch=None):
        bs = int(self.batch_size)
        if self.carry_state:
            return char_streams(ids, int(self.seq_len), bs)
        order = None
        if epoch is not None:
            n = len(char_windows(ids, int(self.seq_len))[0])
            order = Rng(int(self.random_state), STREAM_SHUFFLE, epoch).permutation(n)
        return char_batches(ids, int(self.seq_len), bs, order)

    def fit(self, X, eval_text=None, symbols=None, **fit_kw):
        """Train on text ``X``; ``eval_text`` drives early stopping and model selection."""
        self.vocab_ = CharCorpus.from_bytes(X, fractions=(1.0, 0.0))
        if symbols is not None:
            self.vocab_.symbols = sorted(symbols)
        ids = self.vocab_.encode(X)
        V = self.vocab_.vocab_size
        self.network_ = self._build(V, V)
        spec = self._regularizer()
        config = self._train_config()
        objective = NextSymbol(V)
        evaluate = None
        if eval_text is not None:
            dev_ids = self.vocab_.encode(eval_text)
            evaluate = lambda: self._bpc_ids(dev_ids)  # noqa: E731
        hist = fit_network(self.network_, objective, spec, config,
                           lambda epoch: self._batches(ids, epoch), evaluate,
                           stateful=bool(self.carry_state), **fit_kw)
        self._store_history(hist)
        return self

    @property
    def objective(self) -> NextSymbol:
        check_is_fitted(self, "vocab_")
        return NextSymbol(self.vocab_.vocab_size)

    def _bpc_ids(self, ids) -> float:
        objective = self.objective
        spec = RegularizerSpec(variant="none")
        nats = 0.0
        count = 0
        h0 = c0 = None
        for batch in self._batches(ids):
            res = total_loss(self.network_, batch, spec, objective, h0=h0, c0=c0)
            n = batch[1].size
            nats += res.data * n
            count += n
            if self.carry_state:
                h0 = res.trajectory.H[-1]
                c0 = res.trajectory.C[-1] if res.trajectory.C is not None else None
        v = nats / count / math.log(2.0)
        return v if math.isfinite(v) else math.inf

    def bits_per_character(self, text) -> float:
        return self._bpc_ids(self.encode(text))

    def score(self, X, y=None) -> float:
        return -self.bits_per_character(X)


def unwrap(model):
    """Return ``(network, objective)`` for a fitted estimator."""
    if isinstance(model, CharRNNLanguageModel):
        check_is_fitted(model, "network_")
        return model.network_, model.objective
    if isinstance(model, RNNRegressor):
        check_is_fitted(model, "network_")
        return model.network_, Regression()
    raise ParameterError(f"expected a fitted estimator, got {type(model).__name__}")
