"""Adam optimizer behavior."""

import numpy as np
import pytest

from flightpatchnet import tensor as T
from flightpatchnet.errors import UsageError
from flightpatchnet.nn import Parameter
from flightpatchnet.optim import Adam
from flightpatchnet.tensor import Tensor


def test_first_step_is_signed_lr():
    rng = np.random.default_rng(0)
    g = rng.uniform(0.05, 2.0, size=(4, 3)) * rng.choice([-1.0, 1.0], size=(4, 3))
    p = Parameter(np.zeros((4, 3)), name="p")
    opt = Adam([p], lr=0.01)
    p.value.grad = g.copy()
    opt.step()
    np.testing.assert_allclose(p.value.data, -0.01 * np.sign(g), atol=0.01 * 1e-6)


def test_zero_gradient_leaves_parameters_unchanged():
    p = Parameter(np.array([1.0, -2.0, 3.0]), name="p")
    opt = Adam([p], lr=0.1)
    p.value.grad = np.zeros(3)
    opt.step()
    np.testing.assert_array_equal(p.value.data, [1.0, -2.0, 3.0])


def test_scalar_descent_on_square():
    p = Parameter(np.array([1.0]), name="x")
    opt = Adam([p], lr=0.1)
    trail = []
    for _ in range(100):
        opt.zero_grad()
        loss = T.mse_loss(p.value, Tensor([0.0]))
        loss.backward()
        opt.step()
        trail.append(abs(float(p.value.data[0])))
    assert trail[-1] < 0.5
    assert max(trail[-10:]) < min(trail[:10])


def test_missing_grad_names_parameter():
    p = Parameter(np.ones(2), name="encoder.weight")
    opt = Adam([p])
    with pytest.raises(UsageError) as err:
        opt.step()
    assert "encoder.weight" in str(err.value)


def test_step_counter_and_moment_shapes():
    p = Parameter(np.ones((2, 2)), name="p")
    opt = Adam([p], lr=0.01)
    for i in range(3):
        p.value.grad = np.full((2, 2), 0.5)
        opt.step()
        assert opt.state.step == i + 1
    assert opt.state.m["p"].shape == (2, 2)
    assert opt.state.v["p"].shape == (2, 2)
