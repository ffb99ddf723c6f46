"""Elementwise ops, reductions and the backward pass of the tensor core."""

import numpy as np
import pytest

from flightpatchnet import tensor as T
from flightpatchnet.errors import ConfigError, ShapeError, UsageError
from flightpatchnet.tensor import Tensor

from helpers import mse_oracle

# frozen independent oracle values (40-digit erf/exp evaluation)
GELU_ORACLE = {
    1.0: 0.84134474606854294859,
    0.5: 0.34573123063700655182,
    -1.3: -0.1258406299612934331,
    2.7: 2.6906391707317901951,
    -0.2: -0.084148058112179395392,
}
SOFTMAX_123 = [0.090030573170380457998, 0.24472847105479765247, 0.66524095577482188953]


def test_gelu_zero_and_asymptote():
    out = T.gelu(Tensor([0.0, 10.0]))
    assert out.data[0] == 0.0
    assert abs(out.data[1] - 10.0) < 1e-9


def test_gelu_matches_erf_oracle():
    xs = np.array(sorted(GELU_ORACLE))
    out = T.gelu(Tensor(xs))
    for x, y in zip(xs, out.data):
        assert abs(y - GELU_ORACLE[x]) < 1e-14


def test_softmax_symmetry_and_shift_invariance():
    assert np.allclose(T.softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])
    a = T.softmax(Tensor([0.3, -1.2, 4.0])).data
    b = T.softmax(Tensor([0.3 + 7.5, -1.2 + 7.5, 4.0 + 7.5])).data
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_softmax_matches_exp_oracle():
    out = T.softmax(Tensor([1.0, 2.0, 3.0])).data
    np.testing.assert_allclose(out, SOFTMAX_123, atol=1e-15)


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(3)
    out = T.softmax(Tensor(rng.standard_normal((7, 5, 9)) * 20)).data
    assert np.all(out >= 0) and np.all(out <= 1)
    np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-9)


def test_layer_norm_constant_vector_is_zero():
    out = T.layer_norm(Tensor([5.0, 5.0, 5.0]), Tensor(np.ones(3)), Tensor(np.zeros(3)))
    np.testing.assert_allclose(out.data, 0.0, atol=1e-12)


def test_layer_norm_unit_variance_vector():
    eps = 1e-5
    out = T.layer_norm(Tensor([1.0, -1.0]), Tensor(np.ones(2)), Tensor(np.zeros(2)), eps)
    np.testing.assert_allclose(out.data, np.array([1.0, -1.0]) / np.sqrt(1 + eps), atol=1e-12)


def test_layer_norm_moments():
    rng = np.random.default_rng(11)
    x = rng.standard_normal(8) * 3 + 2
    out = T.layer_norm(Tensor(x), Tensor(np.ones(8)), Tensor(np.zeros(8)), 0.0).data
    assert abs(out.mean()) < 1e-12
    assert abs(out.var() - 1.0) < 1e-6


def test_dropout_eval_mode_is_identity():
    rng = np.random.default_rng(0)
    x = Tensor(rng.standard_normal((13, 7)))
    out = T.dropout(x, 0.5, training=False, rng=rng)
    assert out is x


def test_dropout_zero_rate_is_identity():
    rng = np.random.default_rng(0)
    x = Tensor(rng.standard_normal(64))
    out = T.dropout(x, 0.0, training=True, rng=rng)
    assert out is x


def test_dropout_survivor_fraction_and_scaling():
    rng = np.random.default_rng(1234)
    x = Tensor(np.full(100_000, 3.0))
    out = T.dropout(x, 0.5, training=True, rng=rng).data
    survivors = out != 0.0
    assert abs(survivors.mean() - 0.5) < 0.01
    np.testing.assert_allclose(out[survivors], 6.0)


def test_dropout_rejects_rate_one():
    with pytest.raises(ConfigError):
        T.dropout(Tensor([1.0]), 1.0, training=True, rng=np.random.default_rng(0))


def test_mse_trivial_values():
    assert T.mse_loss(Tensor([1.0, 2.0]), Tensor([1.0, 2.0])).item() == 0.0
    assert T.mse_loss(Tensor([0.0, 0.0]), Tensor([1.0, 1.0])).item() == 1.0


def test_mse_matches_two_pass_oracle():
    rng = np.random.default_rng(5)
    a, b = rng.standard_normal((6, 4)), rng.standard_normal((6, 4))
    got = T.mse_loss(Tensor(a), Tensor(b)).item()
    assert abs(got - mse_oracle(a, b)) < 1e-12


def test_mse_shape_mismatch_names_both_shapes():
    with pytest.raises(ShapeError) as err:
        T.mse_loss(Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 2))))
    assert "(2, 3)" in str(err.value) and "(3, 2)" in str(err.value)


def test_backward_of_sum_is_ones():
    p = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    p.sum().backward()
    np.testing.assert_array_equal(p.grad, np.ones((2, 3)))


def test_backward_of_mse_against_zero():
    vals = np.array([1.0, -2.0, 0.5, 3.0])
    p = Tensor(vals, requires_grad=True)
    T.mse_loss(p, Tensor(np.zeros(4))).backward()
    np.testing.assert_allclose(p.grad, 2 * vals / 4, atol=1e-15)


def test_backward_requires_scalar():
    p = Tensor(np.zeros((2, 2)), requires_grad=True)
    with pytest.raises(UsageError):
        (p + 1.0).backward()


def test_gradients_accumulate_until_zeroed():
    p = Tensor([2.0], requires_grad=True)
    (p * 3.0).sum().backward()
    (p * 3.0).sum().backward()
    np.testing.assert_allclose(p.grad, [6.0])
    p.zero_grad()
    assert p.grad is None


def test_matmul_shape_mismatch_reports_shapes():
    with pytest.raises(ShapeError) as err:
        T.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))
    assert "(2, 3)" in str(err.value)


def test_pad_front_and_slice_roundtrip():
    x = Tensor(np.arange(12.0).reshape(3, 4), requires_grad=True)
    padded = T.pad_front(x, 2, axis=-1)
    assert padded.shape == (3, 6)
    np.testing.assert_array_equal(padded.data[:, :2], 0.0)
    back = T.slice_axis(padded, 2, None, axis=-1)
    np.testing.assert_array_equal(back.data, x.data)
    back.sum().backward()
    np.testing.assert_array_equal(x.grad, np.ones((3, 4)))


def test_stack_backward_splits_gradient():
    a = Tensor([1.0, 2.0], requires_grad=True)
    b = Tensor([3.0, 4.0], requires_grad=True)
    s = T.stack([a, b], axis=0)
    (s * Tensor([[1.0, 2.0], [3.0, 4.0]])).sum().backward()
    np.testing.assert_array_equal(a.grad, [1.0, 2.0])
    np.testing.assert_array_equal(b.grad, [3.0, 4.0])


def test_strict_finite_mode_flags_nan():
    T.set_strict_finite(True)
    try:
        with pytest.raises(UsageError):
            Tensor([np.nan])
    finally:
        T.set_strict_finite(False)


def test_no_grad_skips_recording():
    p = Tensor([1.0], requires_grad=True)
    with T.no_grad():
        out = (p * 2.0) + 1.0
    assert out._parents == () and not out.requires_grad
