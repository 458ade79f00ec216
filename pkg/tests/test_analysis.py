import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from normstab.analysis import (ForgetGateReport, NormTrajectoryReport, eig_moduli, export_csv,
                               forget_gate_stats, lm_eval_batch, norm_trajectory, read_csv,
                               transition_matrix)
from normstab.cells import LstmParams, SrnnParams
from normstab.eigen import ConvergenceError, eigvals, hessenberg
from normstab.network import NextSymbol, RecurrentNetwork, Regression, total_loss
from normstab.regularizers import RegularizerSpec
from normstab.tensor import ParameterError, Rng


def test_eig_examples():
    np.testing.assert_allclose(eig_moduli(np.eye(5)).moduli, np.ones(5), atol=1e-14)
    np.testing.assert_allclose(eig_moduli(np.diag([3.0, -2.0, 0.5])).moduli, [3, 2, 0.5], atol=1e-14)
    th = 0.7
    rot = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
    rep = eig_moduli(rot)
    np.testing.assert_allclose(rep.moduli, [1, 1], atol=1e-14)
    assert abs(rep.eigenvalues.imag).max() == pytest.approx(math.sin(th), abs=1e-14)


def test_hessenberg_is_similar_and_upper_hessenberg():
    A = Rng(2).normal(0, 1, (7, 7))
    H = hessenberg(A)
    assert np.all(np.tril(H, -2) == 0)
    assert np.trace(H) == pytest.approx(np.trace(A), abs=1e-12)
    assert np.linalg.norm(H) == pytest.approx(np.linalg.norm(A), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 64))
def test_trace_and_determinant_consistency(seed, n):
    W = Rng(seed).normal(0, 1, (n, n)) + 3.0 * np.eye(n)
    rep = eig_moduli(W)
    assert len(rep) == n and np.all(rep.moduli >= 0)
    assert np.all(np.diff(rep.moduli) <= 0)
    assert abs(rep.eigenvalue_sum - rep.trace) <= 1e-6 * n * np.abs(W).max()
    assert rep.modulus_product == pytest.approx(rep.abs_det, rel=1e-6)
    # LU determinant computed independently of the QR iteration
    assert rep.abs_det == pytest.approx(abs(np.linalg.det(W)), rel=1e-9)


def test_eig_iteration_cap_raises_with_diagnostics():
    W = Rng(0).normal(0, 1, (12, 12))
    with pytest.raises(ConvergenceError) as info:
        eigvals(W, max_iter_per_dim=0)
    assert info.value.unresolved > 0
    assert "iteration" in str(info.value)


def _srnn(Whh, n_in=1, act="relu"):
    n = Whh.shape[0]
    return SrnnParams(np.zeros((n_in, n)), np.asarray(Whh, float), np.zeros(n), act)


def _net(core, out=1):
    return RecurrentNetwork(core, np.zeros((core.hidden_size, out)), np.zeros(out))


def test_identity_dynamics_flat_trajectory():
    net = _net(_srnn(np.eye(2)))
    X = np.zeros((3, 40, 1))
    rep = norm_trajectory(net, (X, np.zeros(3)), 40, objective=Regression(), h0=np.tile([0.6, 0.8], (3, 1)))
    assert len(rep) == 40
    np.testing.assert_array_equal(rep.mean_h_norm, np.ones(40))
    assert not np.any(rep.std_h_norm)


def test_doubling_dynamics_linear_in_log_scale():
    net = _net(_srnn(2 * np.eye(2)))
    rep = norm_trajectory(net, (np.zeros((1, 30, 1)), np.zeros(1)), 30, objective=Regression(),
                          h0=np.array([[1.0, 0.0]]))
    np.testing.assert_allclose(np.diff(rep.mean_log_h_norm), math.log(2), rtol=0, atol=1e-12)
    assert rep.mean_h_norm[-1] == 2.0 ** 30


def test_explosion_becomes_inf_cost():
    net = _net(_srnn(1e3 * np.eye(2)))
    net.W_out[:] = 1.0
    rep = norm_trajectory(net, (np.zeros((2, 120, 1)), np.ones(2)), 120, objective=Regression(),
                          h0=np.ones((2, 2)))
    assert np.isinf(rep.mean_cost[-1])
    assert np.isfinite(rep.mean_cost[0])


def test_horizon_checks():
    net = _net(_srnn(np.eye(2)))
    with pytest.raises(ParameterError):
        norm_trajectory(net, (np.zeros((1, 5, 1)), np.zeros(1)), 0, objective=Regression())
    with pytest.raises(ParameterError):
        norm_trajectory(net, (np.zeros((1, 5, 1)), np.zeros(1)), 6, objective=Regression())


def test_trajectory_matches_training_forward():
    rng = Rng(8)
    V = 6
    net = RecurrentNetwork.create("lstm", rng, V, 5, V, init_scale=0.3)
    ids = rng.integers(0, V, (4, 13))
    batch = (ids[:, :-1], ids[:, 1:])
    obj = NextSymbol(V)
    res = total_loss(net, batch, RegularizerSpec(), obj)
    rep = norm_trajectory(net, batch, 12, objective=obj)
    train_norms = np.linalg.norm(res.trajectory.H[1:], axis=2).mean(axis=1)
    np.testing.assert_allclose(rep.mean_h_norm, train_norms, rtol=0, atol=1e-10)
    assert rep.mean_cost.mean() == pytest.approx(res.data, abs=1e-10)
    assert rep.mean_c_norm is not None and len(rep.mean_c_norm) == 12


def test_lm_eval_batch_windows():
    ids = np.arange(100)
    inp, tgt = lm_eval_batch(ids, 20, count=4)
    assert inp.shape == tgt.shape == (4, 20)
    np.testing.assert_array_equal(tgt, inp + 1)
    inp, _ = lm_eval_batch(np.arange(10), 50, count=3)
    assert inp.shape == (3, 50)


def _lstm(n=2, d=1, rng=None, scale=0.0):
    if rng is None:
        return LstmParams(np.zeros((d, 4 * n)), np.zeros((n, 4 * n)), np.zeros(4 * n))
    return LstmParams(rng.normal(0, scale, (d, 4 * n)), rng.normal(0, scale, (n, 4 * n)),
                      rng.normal(0, scale, 4 * n))


def test_forget_gates_at_zero_preactivation():
    rep = forget_gate_stats(_lstm(3, 2), Rng(0).normal(0, 1, (4, 7, 2)))
    np.testing.assert_array_equal(rep.values, np.full(3, 0.5))


def test_forget_gates_match_scalar_loop():
    n, d, T = 2, 1, 3
    p = _lstm(n, d, Rng(5), 1.0)
    x = np.array([[0.5], [-1.0], [2.0]])
    h, c = [0.0] * n, [0.0] * n
    sums = [0.0] * n
    for t in range(T):
        z = [p.b[k] + x[t, 0] * p.W_x[0, k] + sum(h[j] * p.W_h[j, k] for j in range(n))
             for k in range(4 * n)]
        i = [1 / (1 + math.exp(-z[k])) for k in range(n)]
        f = [1 / (1 + math.exp(-z[n + k])) for k in range(n)]
        o = [1 / (1 + math.exp(-z[2 * n + k])) for k in range(n)]
        g = [math.tanh(z[3 * n + k]) for k in range(n)]
        c = [f[k] * c[k] + i[k] * g[k] for k in range(n)]
        h = [o[k] * math.tanh(c[k]) for k in range(n)]
        sums = [sums[k] + f[k] for k in range(n)]
    expected = sorted(s / T for s in sums)
    rep = forget_gate_stats(p, x[None, :, :].transpose(1, 0, 2))
    np.testing.assert_allclose(rep.values, expected, rtol=0, atol=1e-12)
    assert np.all((rep.values > 0) & (rep.values < 1))
    assert np.all(np.diff(rep.values) >= 0)


def test_forget_gates_reject_srnn():
    with pytest.raises(TypeError):
        forget_gate_stats(_srnn(np.eye(2)), np.zeros((3, 1, 1)))
    with pytest.raises(ParameterError):
        transition_matrix(_lstm())
    assert transition_matrix(_srnn(np.eye(3))).shape == (3, 3)


def test_csv_round_trip(tmp_path):
    rep = NormTrajectoryReport(3, np.array([1.0, 2.5, 1e10 / 3]), np.array([0.0, 0.1, 0.2]),
                               np.array([0.5, 1 / 3, np.inf]))
    path = export_csv(rep, tmp_path / "norms.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "t,mean_h_norm,std_h_norm,mean_cost"
    assert len(lines) == 4 and lines[-1].endswith(",inf")
    back = read_csv(path)
    np.testing.assert_allclose(back["mean_h_norm"], rep.mean_h_norm, rtol=1e-10)
    np.testing.assert_allclose(back["mean_cost"][:2], rep.mean_cost[:2], rtol=1e-10)
    assert np.isinf(back["mean_cost"][2])

    spec = eig_moduli(Rng(1).normal(0, 1, (6, 6)))
    path = export_csv(spec, tmp_path / "spectrum.csv")
    assert path.read_text().splitlines()[0] == "rank,modulus"
    np.testing.assert_allclose(read_csv(path)["modulus"], spec.moduli, rtol=1e-10)

    fg = ForgetGateReport(np.array([0.1, 0.2]))
    path = export_csv(fg, tmp_path / "fg.csv")
    assert path.read_text().splitlines() == ["rank,avg_forget_gate", "1,0.1", "2,0.2"]


def test_csv_cell_columns_and_errors(tmp_path):
    rep = NormTrajectoryReport(1, np.ones(1), np.zeros(1), np.ones(1), np.ones(1), np.zeros(1))
    path = export_csv(rep, tmp_path / "n.csv")
    assert path.read_text().splitlines()[0] == "t,mean_h_norm,std_h_norm,mean_cost,mean_c_norm,std_c_norm"
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match="file"):
        export_csv(rep, blocker / "n.csv")
    with pytest.raises(TypeError):
        export_csv(object(), tmp_path / "x.csv")
