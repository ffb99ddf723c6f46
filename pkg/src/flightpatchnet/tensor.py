"""Dense float64 tensors with reverse-mode automatic differentiation.

Every value is a numpy array in row-major order. Operations record a
closure that knows how to push gradients back to their inputs; calling
:meth:`Tensor.backward` on a scalar walks the recorded graph in reverse
topological order and accumulates gradients into ``.grad`` buffers.
Gradients accumulate across backward calls until explicitly zeroed.
"""

from __future__ import annotations

import math
import threading

import numpy as np
from scipy.special import erf

from .errors import ConfigError, ShapeError, UsageError

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

# When enabled, every new tensor is scanned for NaN/Inf. Slow; meant for
# tests and debugging, not the training loop.
_strict_finite = False


class _GradMode(threading.local):
    # per-thread so concurrent inference cannot disable recording globally
    enabled: bool = True


_grad_mode = _GradMode()


def set_strict_finite(enabled: bool) -> None:
    global _strict_finite
    _strict_finite = enabled


class no_grad:
    """Context manager that suspends graph recording on this thread."""

    def __enter__(self):
        self._saved = _grad_mode.enabled
        _grad_mode.enabled = False
        return self

    def __exit__(self, *exc):
        _grad_mode.enabled = self._saved
        return False


def assert_finite(array: np.ndarray, context: str) -> None:
    if not np.all(np.isfinite(array)):
        raise UsageError(f"non-finite values encountered in {context}")


class Tensor:
    """A float64 array plus an optional gradient and autodiff record."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        if _strict_finite:
            assert_finite(self.data, "tensor construction")

    # -- introspection ---------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return np.array(self.data, copy=True)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- gradient bookkeeping --------------------------------------------

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            # copy: some callers pass the same buffer to several parents
            self.grad = np.array(g)
        else:
            self.grad += g

    def backward(self) -> None:
        """Backpropagate from a scalar through the recorded graph."""
        if self.data.size != 1:
            raise UsageError(
                f"backward requires a scalar, got shape {self.data.shape}"
            )
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operator sugar ----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Tensor) else -other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape) -> "Tensor":
        return reshape(self, shape if len(shape) != 1 else shape[0])

    def swap_last_axes(self) -> "Tensor":
        return swapaxes(self, -1, -2)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return reduce_mean(self, axis=axis, keepdims=keepdims)


def _as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(np.asarray(value, dtype=np.float64))


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(data)
    if _grad_mode.enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# -- arithmetic -----------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data + b.data

    def backward(g):
        a._accumulate(_unbroadcast(g, a.data.shape))
        b._accumulate(_unbroadcast(g, b.data.shape))

    return _make(data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data * b.data

    def backward(g):
        a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return _make(data, (a, b), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.shape[-1] != b.data.shape[-2 if b.data.ndim > 1 else 0]:
        raise ShapeError(
            f"matmul dimension mismatch: {a.data.shape} @ {b.data.shape}"
        )
    data = np.matmul(a.data, b.data)

    def backward(g):
        if b.data.ndim == 2:
            # common linear-layer path: flatten the batch for one big GEMM
            ga = np.matmul(g, b.data.T)
            a2 = a.data.reshape(-1, a.data.shape[-1])
            g2 = g.reshape(-1, g.shape[-1])
            gb = a2.T @ g2
        else:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
            gb = _unbroadcast(gb, b.data.shape)
        a._accumulate(_unbroadcast(ga, a.data.shape))
        b._accumulate(gb)

    return _make(data, (a, b), backward)


# -- shape manipulation ----------------------------------------------------


def reshape(t: Tensor, shape) -> Tensor:
    t = _as_tensor(t)
    data = t.data.reshape(shape)

    def backward(g):
        t._accumulate(g.reshape(t.data.shape))

    return _make(data, (t,), backward)


def swapaxes(t: Tensor, axis1: int, axis2: int) -> Tensor:
    t = _as_tensor(t)
    data = np.swapaxes(t.data, axis1, axis2)
    # force a contiguous copy so later reshapes never alias the source
    data = np.ascontiguousarray(data)

    def backward(g):
        t._accumulate(np.swapaxes(g, axis1, axis2))

    return _make(data, (t,), backward)


def pad_front(t: Tensor, amount: int, axis: int = -1) -> Tensor:
    """Prepend `amount` zeros along `axis`."""
    t = _as_tensor(t)
    if amount == 0:
        return t
    widths = [(0, 0)] * t.data.ndim
    widths[axis % t.data.ndim] = (amount, 0)
    data = np.pad(t.data, widths)

    def backward(g):
        index = [slice(None)] * g.ndim
        index[axis % g.ndim] = slice(amount, None)
        t._accumulate(g[tuple(index)])

    return _make(data, (t,), backward)


def slice_axis(t: Tensor, start: int, stop: int | None, axis: int = -1) -> Tensor:
    t = _as_tensor(t)
    index = [slice(None)] * t.data.ndim
    index[axis % t.data.ndim] = slice(start, stop)
    index = tuple(index)
    data = np.ascontiguousarray(t.data[index])

    def backward(g):
        buf = np.zeros_like(t.data)
        buf[index] = g
        t._accumulate(buf)

    return _make(data, (t,), backward)


def stack(tensors: list[Tensor], axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    data = np.stack([t.data for t in tensors], axis=axis)

    def backward(g):
        parts = np.moveaxis(g, axis, 0)
        for t, part in zip(tensors, parts):
            t._accumulate(np.ascontiguousarray(part))

    return _make(data, tuple(tensors), backward)


# -- reductions -------------------------------------------------------------


def reduce_sum(t: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    t = _as_tensor(t)
    data = t.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            t._accumulate(np.broadcast_to(g, t.data.shape).copy())
        else:
            if not keepdims:
                g = np.expand_dims(g, axis)
            t._accumulate(np.broadcast_to(g, t.data.shape).copy())

    return _make(np.asarray(data), (t,), backward)


def reduce_mean(t: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    t = _as_tensor(t)
    count = t.data.size if axis is None else t.data.shape[axis]
    return mul(reduce_sum(t, axis=axis, keepdims=keepdims), 1.0 / count)


# -- nonlinearities ---------------------------------------------------------


def gelu(t: Tensor) -> Tensor:
    """Gaussian error linear unit, exact erf form: x * Phi(x)."""
    t = _as_tensor(t)
    cdf = 0.5 * (1.0 + erf(t.data * _INV_SQRT2))
    data = t.data * cdf

    def backward(g):
        pdf = np.exp(-0.5 * t.data * t.data) * _INV_SQRT_2PI
        t._accumulate(g * (cdf + t.data * pdf))

    return _make(data, (t,), backward)


def softmax(t: Tensor, axis: int = -1) -> Tensor:
    """Max-shifted softmax along `axis`; rows sum to one."""
    t = _as_tensor(t)
    shifted = t.data - t.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * data).sum(axis=axis, keepdims=True)
        t._accumulate((g - dot) * data)

    return _make(data, (t,), backward)


def layer_norm(t: Tensor, gamma: Tensor, beta: Tensor, epsilon: float = 1e-5) -> Tensor:
    """Normalize the trailing axis to mean 0 / biased variance 1, then affine."""
    t, gamma, beta = _as_tensor(t), _as_tensor(gamma), _as_tensor(beta)
    dim = t.data.shape[-1]
    if gamma.data.shape != (dim,) or beta.data.shape != (dim,):
        raise ShapeError(
            f"layer_norm affine shape {gamma.data.shape}/{beta.data.shape} "
            f"does not match trailing extent {dim}"
        )
    mu = t.data.mean(axis=-1, keepdims=True)
    var = t.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + epsilon)
    xhat = (t.data - mu) * inv
    data = gamma.data * xhat + beta.data

    def backward(g):
        lead = tuple(range(g.ndim - 1))
        gamma._accumulate((g * xhat).sum(axis=lead))
        beta._accumulate(g.sum(axis=lead))
        dxhat = g * gamma.data
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        t._accumulate((dxhat - m1 - xhat * m2) * inv)

    return _make(data, (t, gamma, beta), backward)


def dropout(t: Tensor, rate: float, training: bool, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout: eval mode is the exact identity.

    In training mode each element is zeroed with probability `rate` and
    survivors are scaled by 1/(1-rate). Mask randomness comes only from
    the supplied generator.
    """
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    t = _as_tensor(t)
    if not training or rate == 0.0:
        return t
    if rng is None:
        raise UsageError("dropout in training mode requires a random generator")
    mask = (rng.random(t.data.shape) >= rate) / (1.0 - rate)
    data = t.data * mask

    def backward(g):
        t._accumulate(g * mask)

    return _make(data, (t,), backward)


def mse_loss(prediction: Tensor, target: Tensor) -> Tensor:
    """Mean of squared differences over all elements."""
    prediction, target = _as_tensor(prediction), _as_tensor(target)
    if prediction.data.shape != target.data.shape:
        raise ShapeError(
            f"mse_loss shapes differ: prediction {prediction.data.shape} "
            f"vs target {target.data.shape}"
        )
    diff = prediction.data - target.data
    n = diff.size
    data = np.asarray((diff * diff).sum() / n)

    def backward(g):
        scaled = (2.0 / n) * diff * g
        prediction._accumulate(scaled)
        target._accumulate(-scaled)

    return _make(data, (prediction, target), backward)
