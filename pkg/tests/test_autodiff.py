import numpy as np
import pytest

from stabprop import autodiff as ad
from stabprop.errors import UnrecordedNode


def numeric_grad(f, x, h=1e-6):
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def check(fn, x, rtol=1e-6, atol=1e-8):
    t = ad.Tensor(x, requires_grad=True)
    with ad.GradTape() as tape:
        out = ad.sum_(fn(t))
    (g,) = tape.gradient(out, [t])
    ref = numeric_grad(lambda v: float(np.sum(fn(v))), x)
    np.testing.assert_allclose(g, ref, rtol=rtol, atol=atol)


RNG = np.random.default_rng(7)
X = RNG.uniform(0.3, 1.5, (3, 4)) * RNG.choice([-1.0, 1.0], (3, 4))
POS = np.abs(X) + 0.1


@pytest.mark.parametrize(
    "name,fn,x",
    [
        ("add", lambda t: t + 2.0 * t, X),
        ("mul", lambda t: t * t * 3.0, X),
        ("div", lambda t: 1.0 / (t * t + 1.0), X),
        ("exp", ad.exp, X),
        ("log", ad.log, POS),
        ("sqrt", ad.sqrt, POS),
        ("abs", ad.abs_, X),
        ("erf", ad.erf, X),
        ("arctan", ad.arctan, X),
        ("tanh", ad.tanh, X),
        ("normal_cdf", ad.normal_cdf, X),
        ("normal_pdf", ad.normal_pdf, X),
        ("sigmoid", ad.sigmoid, X),
        ("relu", ad.relu, X),
        ("leaky_relu", lambda t: ad.leaky_relu(t, 0.1), X),
        ("power", lambda t: ad.power(t, 3.0), X),
        ("maximum", lambda t: ad.maximum(t, 0.2 * t), X),
        ("clip", lambda t: ad.clip(t, -0.9, 0.9), X),
        ("mean", lambda t: ad.mean(t * t, axis=0), X),
        ("reshape", lambda t: ad.reshape(t, (4, 3)) * np.arange(12.0).reshape(4, 3), X),
        ("getitem", lambda t: t[1:, ::2] * 2.0, X),
        ("swapaxes", lambda t: ad.swapaxes(t, 0, 1) @ np.ones((3, 2)), X),
        ("take", lambda t: ad.take_along_axis(t, np.array([[0], [2], [3]]), -1) * 5.0, X),
        ("stack", lambda t: ad.stack([t, t * t], axis=0) * 1.5, X),
    ],
)
def test_elementwise_gradients(name, fn, x):
    check(fn, x)


def test_matmul_gradients():
    A = RNG.standard_normal((3, 4))
    B = RNG.standard_normal((4, 2))
    v = RNG.standard_normal(4)
    check(lambda t: ad.matmul(t, B), A)
    check(lambda t: ad.matmul(A, t), B)
    check(lambda t: ad.matmul(A, t), v)
    check(lambda t: ad.matmul(t, B), v)


def test_diagonal_and_batched_matmul():
    C = RNG.standard_normal((2, 3, 3))
    check(lambda t: ad.diagonal(t) ** 2, C)
    check(lambda t: ad.matmul(t, ad.swapaxes(t, -1, -2)), C)


def test_sum_of_squares_gradient():
    p = RNG.standard_normal((5, 3))
    t = ad.Tensor(p, requires_grad=True)
    with ad.GradTape() as tape:
        loss = ad.sum_(t * t)
    (g,) = ad.grad(tape, loss, [t])
    np.testing.assert_allclose(g, 2 * p)


def test_unrecorded_loss_raises():
    t = ad.Tensor([1.0, 2.0], requires_grad=True)
    loss = ad.sum_(t * t)  # outside any tape
    with ad.GradTape() as tape:
        pass
    with pytest.raises(UnrecordedNode):
        tape.gradient(loss, [t])
    with pytest.raises(UnrecordedNode):
        tape.gradient(np.float64(1.0), [t])


def test_subgradient_conventions():
    t = ad.Tensor([0.0, 0.0, 0.0], requires_grad=True)
    with ad.GradTape() as tape:
        loss = ad.sum_(ad.relu(t)) + ad.sum_(ad.abs_(t))
    (g,) = tape.gradient(loss, [t])
    np.testing.assert_array_equal(g, [1.0, 1.0, 1.0])


def test_plain_arrays_stay_arrays():
    out = ad.exp(np.zeros(3))
    assert isinstance(out, np.ndarray)
    np.testing.assert_array_equal(out, np.ones(3))


def test_unused_source_gets_zero_gradient():
    a = ad.Tensor([1.0], requires_grad=True)
    b = ad.Tensor([2.0, 3.0], requires_grad=True)
    with ad.GradTape() as tape:
        loss = ad.sum_(a * 3.0)
    ga, gb = tape.gradient(loss, [a, b])
    np.testing.assert_array_equal(ga, [3.0])
    np.testing.assert_array_equal(gb, [0.0, 0.0])
