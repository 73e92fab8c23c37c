"""Gradient checks for the reverse-mode engine against central differences."""

import numpy as np
import pytest

from pincflow import autodiff as ad

RNG = np.random.default_rng(42)


def numeric_grad(fn, x, h=1e-6):
    grad = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        step = np.zeros_like(x)
        step[i] = h
        grad[i] = (fn(x + step) - fn(x - step)) / (2 * h)
    return grad


def check(fn_ops, fn_np, x):
    var = ad.Var(x)
    grad = ad.backward(ad.mean(fn_ops(var)))[var]
    fd = numeric_grad(lambda v: np.mean(fn_np(v)), x)
    assert np.allclose(grad, fd, rtol=1e-6, atol=1e-9)


@pytest.mark.parametrize(
    "fn_ops, fn_np",
    [
        (ad.tanh, np.tanh),
        (ad.sin, np.sin),
        (ad.cos, np.cos),
        (ad.exp, np.exp),
        (ad.sigmoid, lambda v: 1 / (1 + np.exp(-v))),
        (lambda x: ad.power(x, 3.0), lambda v: v**3),
        (lambda x: x * x + 2.0 * x - 0.5, lambda v: v * v + 2 * v - 0.5),
        (lambda x: 1.0 / (x + 3.0), lambda v: 1 / (v + 3)),
        (lambda x: ad.absolute(x) * x, lambda v: np.abs(v) * v),
    ],
)
def test_elementwise_gradients(fn_ops, fn_np):
    check(fn_ops, fn_np, RNG.standard_normal((4, 3)))


def test_log_ops_gradients():
    x = RNG.random((5,)) + 0.5
    check(ad.log, np.log, x)
    check(ad.log10, np.log10, x)


def test_clamp_passes_gradient_only_inside():
    x = ad.Var(np.array([-2.0, 0.5, 3.0]))
    y = ad.total(ad.clamp(x, 0.0, 1.0) * 2.0)
    grad = ad.backward(y)[x]
    assert np.array_equal(grad, [0.0, 2.0, 0.0])


def test_absolute_subgradient_zero_at_kink():
    x = ad.Var(np.array([0.0, -1.0, 2.0]))
    grad = ad.backward(ad.total(ad.absolute(x)))[x]
    assert np.array_equal(grad, [0.0, -1.0, 1.0])


def test_broadcast_unbroadcast():
    a = ad.Var(RNG.standard_normal((4, 3, 1)))
    b = ad.Var(RNG.standard_normal((3, 5)))
    loss = ad.mean(a * b)
    grads = ad.backward(loss)
    fd_a = numeric_grad(lambda v: np.mean(v * b.value), a.value)
    fd_b = numeric_grad(lambda v: np.mean(a.value * v), b.value)
    assert np.allclose(grads[a], fd_a)
    assert np.allclose(grads[b], fd_b)


def test_linear_vjps():
    x = ad.Var(RNG.standard_normal((6, 4)))
    w = ad.Var(RNG.standard_normal((3, 4)))
    b = ad.Var(RNG.standard_normal(3))
    loss = ad.mean(ad.linear(x, w, b) ** 2.0)
    grads = ad.backward(loss)
    for var in (x, w, b):
        fd = numeric_grad(
            lambda v, var=var: np.mean(
                (
                    (v if var is x else x.value)
                    @ (v if var is w else w.value).T
                    + (v if var is b else b.value)
                )
                ** 2
            ),
            var.value,
        )
        assert np.allclose(grads[var], fd, rtol=1e-6, atol=1e-9)


def test_tangent_linear_vjps():
    t = ad.Var(RNG.standard_normal((5, 4, 2)))
    w = ad.Var(RNG.standard_normal((3, 4)))
    loss = ad.mean(ad.tangent_linear(w, t) ** 2.0)
    grads = ad.backward(loss)

    def ref(wv, tv):
        return np.mean(np.einsum("oi,nik->nok", wv, tv) ** 2)

    fd_w = numeric_grad(lambda v: ref(v, t.value), w.value)
    fd_t = numeric_grad(lambda v: ref(w.value, v), t.value)
    assert np.allclose(grads[w], fd_w, rtol=1e-6, atol=1e-9)
    assert np.allclose(grads[t], fd_t, rtol=1e-6, atol=1e-9)


def test_getitem_scatters_gradient():
    x = ad.Var(RNG.standard_normal((4, 3)))
    loss = ad.total(ad.getitem(x, (slice(None), 1)) ** 2.0)
    grad = ad.backward(loss)[x]
    expected = np.zeros_like(x.value)
    expected[:, 1] = 2 * x.value[:, 1]
    assert np.allclose(grad, expected)


def test_plain_values_pass_through_untouched():
    x = np.array([1.0, 2.0])
    assert isinstance(ad.tanh(x), np.ndarray)
    assert isinstance(ad.linear(x[None, :], np.eye(2), np.zeros(2)), np.ndarray)
    assert ad.mean(x) == 1.5


def test_backward_requires_scalar_root():
    x = ad.Var(np.ones(3))
    with pytest.raises(ValueError):
        ad.backward(x * 2.0)
