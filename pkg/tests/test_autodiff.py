import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from magpinn import autodiff as ad
from magpinn.autodiff import Dual2, UnsupportedPrimitive, Var


def test_spatial_gradient_examples():
    assert ad.spatial_gradient(lambda x, y: x * y, (2.0, 3.0)) == (6.0, 3.0, 2.0)
    _, dx, _ = ad.spatial_gradient(lambda x, y: ad.sin(x), (0.0, 0.0))
    assert dx == 1.0


def test_unsupported_primitive():
    with pytest.raises(UnsupportedPrimitive):
        ad.spatial_gradient(lambda x, y: np.tanh(x), (0.1, 0.2))
    with pytest.raises(UnsupportedPrimitive):
        np.tanh(Var(1.0))


PRIMS = [
    (ad.exp, np.exp, np.exp),
    (ad.cos, np.cos, lambda z: -np.sin(z)),
    (ad.sin, np.sin, np.cos),
    (ad.silu, lambda z: z / (1 + np.exp(-z)),
     lambda z: (1 / (1 + np.exp(-z))) * (1 + z * (1 - 1 / (1 + np.exp(-z))))),
]


@pytest.mark.parametrize("prim,f,df", PRIMS)
def test_dual_matches_analytic(prim, f, df, rng):
    z = rng.uniform(-5, 5, 1000)
    d = prim(Dual2(z, np.ones_like(z), np.zeros_like(z)))
    np.testing.assert_allclose(d.val, f(z), rtol=4 * np.finfo(float).eps, atol=1e-300)
    np.testing.assert_allclose(d.dx, df(z), rtol=8 * np.finfo(float).eps, atol=1e-15)


@pytest.mark.parametrize("prim,f,df", PRIMS)
def test_var_matches_analytic(prim, f, df, rng):
    z = rng.uniform(-5, 5, 200)
    _, (g,) = ad.theta_gradient(lambda th: ad.vsum(prim(th[0])), [z])
    np.testing.assert_allclose(g, df(z), rtol=8 * np.finfo(float).eps, atol=1e-15)


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.5, 3))
def test_dual_arithmetic_chain_rule(a, b, c):
    x = Dual2(a, 1.0, 0.0)
    y = Dual2(b, 0.0, 1.0)
    r = (x * y + x / c - y) / (1.0 + x * x)
    h = 1e-6
    f = lambda u, v: (u * v + u / c - v) / (1.0 + u * u)
    assert r.dx == pytest.approx((f(a + h, b) - f(a - h, b)) / (2 * h), rel=1e-6, abs=1e-8)
    assert r.dy == pytest.approx((f(a, b + h) - f(a, b - h)) / (2 * h), rel=1e-6, abs=1e-8)


def test_theta_gradient_matmul_and_broadcast(rng):
    W = rng.normal(size=(3, 4))
    b = rng.normal(size=3)
    h = rng.normal(size=(5, 4))
    _, (gW, gb) = ad.theta_gradient(lambda th: ad.vsum(ad.linear(h, th[0], th[1]) * 2.0), [W, b])
    np.testing.assert_allclose(gW, 2.0 * np.tile(h.sum(axis=0), (3, 1)))
    np.testing.assert_allclose(gb, np.full(3, 10.0))


def test_linear_loss_gradient_independent_of_theta(rng):
    h = rng.normal(size=(4, 3))

    def grad(W):
        return ad.theta_gradient(lambda th: ad.vsum(ad.linear(h, th[0])), [W])[1][0]

    np.testing.assert_array_equal(grad(rng.normal(size=(2, 3))), grad(rng.normal(size=(2, 3))))


def test_sum_of_samples_linearity(rng):
    W = rng.normal(size=(2, 3))
    xs = rng.normal(size=(6, 3))

    def loss(th, x):
        return ad.vsum(ad.silu(ad.linear(x, th[0])) * ad.silu(ad.linear(x, th[0])))

    _, (g_all,) = ad.theta_gradient(lambda th: loss(th, xs), [W])
    parts = sum(ad.theta_gradient(lambda th: loss(th, xs[i:i + 1]), [W])[1][0] for i in range(6))
    np.testing.assert_allclose(g_all, parts, rtol=8 * np.finfo(float).eps * 10, atol=1e-15)


def test_forward_over_reverse_mixed_terms(rng):
    # l = (d/dx (w * sin(a x)))^2 = (w a cos(a x))^2 ; dl/dw = 2 w (a cos(a x))^2
    a, x0, w = 1.3, 0.4, 0.7
    X = Dual2(np.array([x0]), np.array([1.0]), np.array([0.0]))

    def loss(th):
        f = th[0] * ad.sin(X * a)
        return ad.vsum(f.dx * f.dx)

    val, (g,) = ad.theta_gradient(loss, [np.array([w])])
    assert val == pytest.approx((w * a * np.cos(a * x0)) ** 2, rel=1e-14)
    assert g[0] == pytest.approx(2 * w * (a * np.cos(a * x0)) ** 2, rel=1e-14)


def test_threads_do_not_interleave(rng):
    from concurrent.futures import ThreadPoolExecutor

    Ws = [rng.normal(size=(8, 8)) for _ in range(8)]
    x = rng.normal(size=(16, 8))

    def job(W):
        return ad.theta_gradient(lambda th: ad.vsum(ad.silu(ad.linear(x, th[0]))), [W])[1][0]

    serial = [job(W) for W in Ws]
    with ThreadPoolExecutor(4) as pool:
        par = list(pool.map(job, Ws))
    for s, p in zip(serial, par):
        np.testing.assert_array_equal(s, p)
