import math

import numpy as np
import pytest

from magpinn import kernels, _kernels_py
from magpinn.network import NetworkConfig, NetworkParams, ShapeMismatch, glorot_init
from magpinn.problem import Problem
from magpinn.scaling import NU0, PARAM_NAMES
from magpinn.training import (OptimizerState, TrainConfig, TrainingDiverged, adam_step, decay_factor,
                              learning_rate, loss_and_grad, loss_estimate, sample_loss, stream, train)


def _net(rng, d_xi, L=2, d=8, m=1):
    cfg = NetworkConfig(L, d, m, d_xi)
    p = glorot_init(cfg, rng)
    for a in p.arrays:
        if a.ndim == 1:
            a[:] = rng.normal(scale=0.1, size=a.shape)
    return cfg, p


@pytest.fixture(params=["compiled", "python"])
def backend(request, monkeypatch):
    if request.param == "python":
        for name in ("act_forward", "act_backward", "gate_forward", "gate_backward", "steel_eval",
                     "classify", "element_tangent"):
            monkeypatch.setattr(kernels, name, getattr(_kernels_py, name))
    elif kernels.BACKEND != "cython":
        pytest.skip("compiled extension not built")
    return request.param


def test_fused_matches_tape(rng, backend):
    problem = Problem(free=("g", "f_c", "w_w"))
    cfg, p = _net(rng, 3)
    batch = problem.sample_batch(3, 40, stream(1, 1), stream(1, 2))
    l1, g1 = loss_and_grad(p, problem, batch, engine="tape")
    l2, g2 = loss_and_grad(p, problem, batch, engine="fused")
    assert l2 == pytest.approx(l1, rel=1e-13)
    for a, b in zip(g1, g2):
        np.testing.assert_allclose(b, a, rtol=1e-10, atol=1e-14 * np.max(np.abs(a)))


def test_threads_match_serial(rng):
    problem = Problem(free=("g",))
    cfg, p = _net(rng, 1)
    batch = problem.sample_batch(2, 64, stream(2, 1), stream(2, 2))
    l1, g1 = loss_and_grad(p, problem, batch, threads=1)
    l4, g4 = loss_and_grad(p, problem, batch, threads=4)
    assert l4 == pytest.approx(l1, rel=1e-12)
    for a, b in zip(g1, g4):
        np.testing.assert_allclose(b, a, rtol=1e-10, atol=1e-15)


def test_zero_theta_loss_is_zero(rng):
    problem = Problem()
    cfg = NetworkConfig(1, 4, 1, 10)
    p = NetworkParams.zeros(cfg)
    batch = problem.sample_batch(2, 20, stream(0, 1), stream(0, 2))
    assert loss_estimate(p, cfg, problem, batch) == 0.0


def test_sample_loss_in_air_linear(rng):
    problem = Problem(free=(), steel="linear")
    cfg, p = _net(rng, 0)
    from magpinn.network import evaluate_mvp

    c = problem.scaling
    lens = problem.scaled_lengths(np.zeros((1, 0)))[0]
    pt = np.array([0.002, 0.002]) / c.x_star  # bottom-left air margin
    _, g = evaluate_mvp(p, cfg, pt[None], np.zeros((1, 0)), lens)
    expected = lens[0] * lens[1] * 0.5 * (NU0 / c.nu_star) * float(np.sum(g**2))
    assert sample_loss(pt, np.zeros(0), p, cfg, problem) == pytest.approx(expected, rel=1e-13)


def test_gamma_and_schedule():
    assert decay_factor(0.3e-3, 0.3e-6, 1_800_000) == pytest.approx(0.9999961624, abs=1e-10)
    tc = TrainConfig(n_ite=100, eta_1=1e-2, eta_final=1e-4)
    assert 0 < tc.gamma < 1
    assert learning_rate(1, 1e-2, 1e-4, 100) == 1e-2
    for k in (2, 50, 100):
        assert learning_rate(k, 1e-2, 1e-4, 100) == pytest.approx(1e-2 * tc.gamma ** (k - 1), rel=1e-13)
    assert learning_rate(101, 1e-2, 1e-4, 100) == pytest.approx(1e-4, rel=1e-14)
    with pytest.raises(ValueError):
        TrainConfig(eta_1=1e-4, eta_final=1e-3)


def test_adam_first_step_sign(rng):
    cfg = NetworkConfig(1, 3, 0, 0)
    p = glorot_init(cfg, rng)
    before = p.copy()
    g = [rng.normal(size=a.shape) for a in p.arrays]
    st = OptimizerState.zeros_like(p)
    adam_step(st, p, g, 1e-3)
    for a, b, gg in zip(p.arrays, before.arrays, g):
        np.testing.assert_allclose(a - b, -1e-3 * np.sign(gg), rtol=1e-4, atol=1e-10)
    assert st.step == 1


def test_adam_zero_gradient(rng):
    cfg = NetworkConfig(1, 3, 0, 0)
    p = glorot_init(cfg, rng)
    st = OptimizerState.zeros_like(p)
    adam_step(st, p, [np.ones_like(a) for a in p.arrays], 1e-3)
    before = p.copy()
    m0 = [m.copy() for m in st.m]
    adam_step(st, p, [np.zeros_like(a) for a in p.arrays], 0.0)
    assert all(np.array_equal(a, b) for a, b in zip(p.arrays, before.arrays))
    assert all(np.all(np.abs(m1) < np.abs(m) + 1e-300) for m1, m in zip(st.m, m0))
    with pytest.raises(ShapeMismatch):
        adam_step(st, p, [np.zeros(7)] * len(p), 1e-3)


def test_zero_iterations_returns_init():
    problem = Problem(free=())
    net = NetworkConfig(1, 4, 1, 0)
    res = train(TrainConfig(n_ite=0, eta_1=1e-3, eta_final=1e-4), net, problem)
    init = glorot_init(net, stream(0, 0))
    assert all(np.array_equal(a, b) for a, b in zip(res.params.arrays, init.arrays))


def test_train_writes_outputs_and_is_deterministic(tmp_path):
    problem = Problem(free=("g", "f_c"))
    net = NetworkConfig(1, 8, 1, 2)
    tc = TrainConfig(n_ite=10, n_xi=2, n_x=30, eta_1=1e-3, eta_final=1e-5, seed=5, checkpoint_every=5)
    train(tc, net, problem, out_dir=tmp_path / "a")
    train(tc, net, problem, out_dir=tmp_path / "b")
    for name in ("loss.csv", "checkpoint_00000005.json", "final.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rows = (tmp_path / "a" / "loss.csv").read_text().splitlines()
    assert rows[0] == "iteration,eta,loss" and len(rows) == 11


def test_shape_mismatch_between_net_and_problem():
    with pytest.raises(ShapeMismatch):
        train(TrainConfig(n_ite=1), NetworkConfig(1, 4, 1, 3), Problem(free=("g",)))


def test_divergence_aborts(rng):
    problem = Problem(free=())
    net = NetworkConfig(1, 4, 1, 0)
    p = glorot_init(net, rng)
    p.arrays[-2][...] = np.nan
    with pytest.raises(TrainingDiverged) as exc:
        train(TrainConfig(n_ite=3), net, problem, params=p)
    assert exc.value.iteration == 1


def test_loss_decreases_on_toy_problem():
    problem = Problem(free=(), steel="linear")
    net = NetworkConfig(2, 16, 2, 0)
    tc = TrainConfig(n_ite=300, n_x=200, eta_1=3e-3, eta_final=1e-3, seed=0)
    res = train(tc, net, problem)
    first = np.mean([h[2] for h in res.history[:20]])
    last = np.mean([h[2] for h in res.history[-20:]])
    assert last < first and last < 0


def test_stream_isolation():
    a = stream(3, 1).random(5)
    b = stream(3, 2).random(5)
    assert not np.array_equal(a, b)
    assert np.array_equal(a, stream(3, 1).random(5))
