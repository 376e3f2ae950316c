import numpy as np
import pytest

from trajflow.autodiff import make_rng, parameter
from trajflow.nn import Adam, cosine_lr, flatten_params, init_linear, params_close


def test_init_linear_shapes_and_scale():
    rng = make_rng(0)
    w, b = init_linear(rng, 100, 50)
    assert w.value.shape == (100, 50)
    assert np.array_equal(b.value, np.zeros(50))
    assert w.value.std() == pytest.approx(np.sqrt(2.0 / 100), rel=0.1)


def test_cosine_lr_endpoints():
    assert cosine_lr(0, 100, 1e-3, 1e-5) == pytest.approx(1e-3)
    assert cosine_lr(99, 100, 1e-3, 1e-5) == pytest.approx(1e-5)
    mid = cosine_lr(50, 101, 1e-3, 1e-5)
    assert mid == pytest.approx(0.5 * (1e-3 + 1e-5), rel=1e-6)
    assert cosine_lr(0, 1, 1e-3, 1e-5) == 1e-3  # degenerate schedule


def test_cosine_lr_monotone_decreasing():
    values = [cosine_lr(i, 50, 1e-2, 1e-6) for i in range(50)]
    assert all(b <= a for a, b in zip(values, values[1:]))


def test_adam_first_step_size():
    # with a fresh optimizer the bias-corrected update is exactly
    # lr * g / (|g| + eps), i.e. approximately lr in magnitude
    p = parameter(np.array([1.0, -2.0]))
    p.grad = np.array([0.5, -3.0])
    Adam([p]).step(1e-2)
    assert np.allclose(p.value, [1.0 - 1e-2, -2.0 + 1e-2], atol=1e-6)


def test_adam_skips_missing_grads():
    p = parameter(np.array([1.0]))
    opt = Adam([p])
    opt.step(1e-2)
    assert np.array_equal(p.value, [1.0])


def test_adam_converges_on_quadratic():
    p = parameter(np.array([5.0, -3.0]))
    opt = Adam([p])
    for _ in range(500):
        opt.zero_grad()
        p.grad = 2.0 * p.value
        opt.step(5e-2)
    assert np.allclose(p.value, 0.0, atol=1e-3)


def test_flatten_and_compare():
    a = [parameter(np.ones((2, 2))), parameter(np.zeros(3))]
    b = [parameter(np.ones((2, 2))), parameter(np.zeros(3))]
    assert flatten_params(a).shape == (7,)
    assert params_close(a, b)
    b[1].value = b[1].value + 1e-9
    assert not params_close(a, b)
    assert params_close(a, b, tol=1e-8)
