import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from normstab.optimizers import (TrainConfig, TrainerState, adam_step, clip_gradients,
                                 early_stop, global_norm, init_state, nan_rollback,
                                 sgd_momentum_step)
from normstab.tensor import ParameterError, Rng


def test_clip_examples():
    g = {"a": np.array([0.3, 0.4])}
    out, bad = clip_gradients(g, 1.0)
    assert not bad and np.array_equal(out["a"], [0.3, 0.4])
    out, _ = clip_gradients({"a": np.array([3.0, 4.0])}, 1.0)
    np.testing.assert_allclose(out["a"], [0.6, 0.8], rtol=0, atol=1e-15)


def test_clip_is_joint_over_tensors():
    out, _ = clip_gradients({"a": np.array([3.0]), "b": np.array([[4.0]])}, 1.0)
    assert out["a"][0] == pytest.approx(0.6) and out["b"][0, 0] == pytest.approx(0.8)


def test_clip_nonfinite_zeroes_and_signals():
    out, bad = clip_gradients({"a": np.array([1.0, np.nan]), "b": np.ones(3)}, 1.0)
    assert bad
    assert not any(np.any(v) for v in out.values())
    _, bad = clip_gradients({"a": np.array([np.inf])}, 1.0)
    assert bad
    with pytest.raises(ParameterError):
        clip_gradients({"a": np.ones(2)}, 0.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32), st.floats(1e-3, 1e3), st.floats(1e-3, 10.0))
def test_clip_properties(seed, scale, thr):
    r = Rng(seed)
    g = {"a": r.normal(0, scale, (3, 4)), "b": r.normal(0, scale, 5)}
    once, _ = clip_gradients(g, thr)
    assert global_norm(once) <= thr + 1e-12
    twice, _ = clip_gradients(once, thr)
    for k in g:
        np.testing.assert_allclose(twice[k], once[k], rtol=1e-12, atol=0)
    flat = np.concatenate([g[k].ravel() for k in sorted(g)])
    flat1 = np.concatenate([once[k].ravel() for k in sorted(g)])
    cos = flat @ flat1 / (np.linalg.norm(flat) * np.linalg.norm(flat1))
    assert abs(cos - 1.0) < 1e-12


def test_sgd_without_momentum_is_plain_sgd():
    p = {"w": np.array([1.0, -2.0])}
    vel = init_state(p, "sgd_momentum")["velocity"]
    sgd_momentum_step(p, {"w": np.array([0.5, 1.0])}, vel, 0.1, 0.0)
    np.testing.assert_allclose(p["w"], [0.95, -2.1], rtol=0, atol=1e-15)


def test_sgd_momentum_two_steps_on_quadratic():
    # f(w) = w^2 / 2, g = w; w0 = 1, lr = .1, mu = .9
    # v1 = -.1, w1 = .9; v2 = .9*(-.1) - .1*.9 = -.18, w2 = .72
    p = {"w": np.array([1.0])}
    vel = {"w": np.zeros(1)}
    for _ in range(2):
        sgd_momentum_step(p, {"w": p["w"].copy()}, vel, 0.1, 0.9)
    assert p["w"][0] == pytest.approx(0.72, abs=1e-15)
    assert vel["w"][0] == pytest.approx(-0.18, abs=1e-15)


def test_sgd_residual_velocity_decays_geometrically():
    p = {"w": np.array([0.0])}
    vel = {"w": np.array([1.0])}
    mu = 0.5
    for _ in range(10):
        sgd_momentum_step(p, {"w": np.zeros(1)}, vel, 0.1, mu)
    assert vel["w"][0] == mu ** 10
    # drift = sum_{k=1..10} mu^k
    assert p["w"][0] == pytest.approx(mu * (1 - mu ** 10) / (1 - mu), rel=1e-15)


def test_adam_first_step_magnitude_is_lr():
    p = {"w": np.array([1.0, 1.0])}
    mom = init_state(p, "adam")
    adam_step(p, {"w": np.array([3.0, -0.02])}, mom, 0.001, t=1)
    np.testing.assert_allclose(p["w"], [0.999, 1.001], rtol=0, atol=1e-9)


def test_adam_zero_gradient_no_update():
    p = {"w": np.array([0.3])}
    mom = init_state(p, "adam")
    adam_step(p, {"w": np.zeros(1)}, mom, 0.1, t=1)
    assert p["w"][0] == 0.3
    with pytest.raises(ParameterError):
        adam_step(p, {"w": np.zeros(1)}, mom, 0.1, t=0)


def test_adam_matches_scalar_reference_loop():
    lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
    w_ref, m, v = 2.0, 0.0, 0.0
    p = {"w": np.array([2.0])}
    mom = init_state(p, "adam")
    for t in range(1, 11):
        g = math.sin(w_ref) + 0.5 * w_ref
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w_ref -= lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
        gp = math.sin(p["w"][0]) + 0.5 * p["w"][0]
        adam_step(p, {"w": np.array([gp])}, mom, lr, b1, b2, eps, t)
        assert abs(p["w"][0] - w_ref) < 1e-12


def _state(lr=0.002, optimizer="sgd_momentum"):
    params = {"W": Rng(0).normal(0, 1, (3, 3)), "b": np.zeros(3)}
    return TrainerState(params=params, config=TrainConfig(optimizer=optimizer, learning_rate=lr))


@pytest.mark.parametrize("optimizer", ["sgd_momentum", "adam"])
def test_rollback_restores_epoch_checkpoint_bit_exactly(optimizer):
    s = _state(optimizer=optimizer)
    s.apply({"W": np.ones((3, 3)), "b": np.ones(3)})
    s.epoch += 1
    s.save_checkpoint()
    saved = {k: v.tobytes() for k, v in s.params.items()}
    saved_opt = {k: {n: a.tobytes() for n, a in v.items()} if isinstance(v, dict) else v
                 for k, v in s.opt_state.items()}
    ids = {k: id(v) for k, v in s.params.items()}
    for _ in range(3):
        s.apply({"W": np.full((3, 3), 5.0), "b": np.ones(3)})
    nan_rollback(s)
    assert s.lr == 0.001
    assert {k: v.tobytes() for k, v in s.params.items()} == saved
    assert {k: id(v) for k, v in s.params.items()} == ids
    for k, v in s.opt_state.items():
        if isinstance(v, dict):
            assert {n: a.tobytes() for n, a in v.items()} == saved_opt[k]
        else:
            assert v == saved_opt[k]
    assert s.epoch == 1 and s.rollbacks == 1


def test_rollback_in_first_epoch_restores_initial_parameters():
    s = _state()
    init = {k: v.copy() for k, v in s.params.items()}
    s.apply({"W": np.ones((3, 3)), "b": np.ones(3)})
    nan_rollback(s)
    assert all(np.array_equal(s.params[k], init[k]) for k in init)
    assert not np.any(s.opt_state["velocity"]["W"])


def test_rollback_halving_composes():
    s = _state(lr=0.002)
    nan_rollback(s)
    nan_rollback(s)
    assert s.lr == 0.0005
    lrs = [s.lr]
    for k in range(20):
        nan_rollback(s)
        lrs.append(s.lr)
        assert s.lr == 0.002 / 2 ** (k + 3)
    assert all(b < a for a, b in zip(lrs, lrs[1:]))
    nan_rollback(s, nan_event=False)
    assert s.lr == lrs[-1]


def test_early_stop_examples():
    assert not early_stop([5, 4, 3, 2, 1], 0)
    assert not early_stop([], 3)
    hist = [10, 9, 8, 1] + [2] * 26          # best at epoch index 3, 30 epochs total
    assert early_stop(hist[:30], 25)
    assert not early_stop(hist[:29], 25)
    assert early_stop([3, 3], 0)             # equal is not an improvement
    assert early_stop([1, 2], 0)
    assert not early_stop([2, 1], 0)


def test_train_config_validation():
    for kw in [dict(learning_rate=0), dict(clip_threshold=-1), dict(patience=-1),
               dict(optimizer="rmsprop")]:
        with pytest.raises(ParameterError):
            TrainConfig(**kw)
