import numpy as np
import pytest

from normstab.network import CELL_TYPES, NextSymbol, RecurrentNetwork, Regression, total_loss
from normstab.regularizers import RegularizerSpec
from normstab.tensor import ParameterError, Rng

from conftest import fd_grad, rel_err


def _reg_batch(rng, B=3, T=6, d=2):
    return rng.normal(0, 1, (B, T, d)), rng.normal(0, 1, B)


@pytest.mark.parametrize("cell", CELL_TYPES)
@pytest.mark.parametrize("variant", ["norm_stabilizer", "norm_sq", "none"])
def test_total_loss_gradients_regression(cell, variant):
    rng = Rng(11)
    net = RecurrentNetwork.create(cell, rng, 2, 5, 1, init_scale=0.5)
    batch = _reg_batch(rng)
    spec = RegularizerSpec(variant, beta=0.7)
    res = total_loss(net, batch, spec, Regression())
    for name, arr in net.tensors().items():
        num = fd_grad(lambda: total_loss(net, batch, spec, Regression()).total, arr)
        assert rel_err(res.grads[name], num) < 1e-4, name


@pytest.mark.parametrize("target", ["hidden", "memory_cell"])
def test_total_loss_gradients_language_model(target):
    rng = Rng(12)
    V = 5
    net = RecurrentNetwork.create("lstm", rng, V, 4, V, init_scale=0.5)
    ids = rng.integers(0, V, (2, 7))
    batch = (ids[:, :-1], ids[:, 1:])
    spec = RegularizerSpec("norm_stabilizer", beta=2.0, target=target)
    obj = NextSymbol(V)
    res = total_loss(net, batch, spec, obj)
    for name, arr in net.tensors().items():
        num = fd_grad(lambda: total_loss(net, batch, spec, obj).total, arr)
        assert rel_err(res.grads[name], num) < 1e-4, name


def test_zero_beta_equals_unregularized():
    rng = Rng(13)
    net = RecurrentNetwork.create("irnn", rng, 2, 6, 1, init_scale=0.3)
    batch = _reg_batch(rng)
    a = total_loss(net, batch, RegularizerSpec("norm_stabilizer", beta=0.0), Regression())
    b = total_loss(net, batch, RegularizerSpec("none"), Regression())
    assert a.total == b.total and a.penalty == 0.0
    for k in a.grads:
        assert np.array_equal(a.grads[k], b.grads[k])


def test_noise_and_dropout_only_in_training():
    rng = Rng(14)
    net = RecurrentNetwork.create("srnn_tanh", rng, 2, 6, 1, init_scale=0.3)
    batch = _reg_batch(rng)
    clean = {k: v.copy() for k, v in net.tensors().items()}
    spec = RegularizerSpec("none", weight_noise_sigma=0.1, dropout_p=0.3)
    ev = total_loss(net, batch, spec, Regression(), rng=Rng(1), train=False)
    base = total_loss(net, batch, RegularizerSpec("none"), Regression())
    assert ev.total == base.total
    tr = total_loss(net, batch, spec, Regression(), rng=Rng(1), train=True)
    assert tr.total != base.total
    assert all(np.array_equal(v, clean[k]) for k, v in net.tensors().items())


def test_memory_cell_target_needs_lstm():
    rng = Rng(0)
    net = RecurrentNetwork.create("irnn", rng, 2, 3, 1)
    with pytest.raises(ParameterError):
        total_loss(net, _reg_batch(rng), RegularizerSpec(target="memory_cell"), Regression())


def test_create_is_deterministic_and_load_checks_shapes():
    a = RecurrentNetwork.create("lstm", Rng(5), 3, 4, 2)
    b = RecurrentNetwork.create("lstm", Rng(5), 3, 4, 2)
    assert all(np.array_equal(a.tensors()[k], b.tensors()[k]) for k in a.tensors())
    with pytest.raises(ParameterError):
        a.load({"W_x": np.zeros((3, 16))})
    with pytest.raises(ParameterError):
        RecurrentNetwork.create("gru", Rng(0), 1, 1, 1)
