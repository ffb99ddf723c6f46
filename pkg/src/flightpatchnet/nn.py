"""Neural-network building blocks on top of the autodiff tensor.

Weights are initialized uniformly in +/- sqrt(6 / (fan_in + fan_out)),
biases and layer-norm shifts at zero, all drawn from a generator passed
into each constructor so a model is a pure function of its seed.
"""

from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError
from .tensor import Tensor


class Parameter:
    """A named, trainable tensor. Names are assigned by the owning model."""

    def __init__(self, data: np.ndarray, name: str = ""):
        self.value = Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)
        self.name = name

    @property
    def grad(self) -> np.ndarray | None:
        return self.value.grad

    def zero_grad(self) -> None:
        self.value.zero_grad()

    def __repr__(self) -> str:
        return f"Parameter({self.name or '<unnamed>'}, shape={self.value.shape})"


class Module:
    """Container tracking parameters and submodules in definition order."""

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_modules", {})

    def __setattr__(self, key, value):
        if isinstance(value, Parameter):
            self._params[key] = value
        elif isinstance(value, Module):
            self._modules[key] = value
        object.__setattr__(self, key, value)

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Parameter]]:
        """Walk the module tree; also stamps each parameter's name."""
        out: list[tuple[str, Parameter]] = []
        for key, param in self._params.items():
            name = f"{prefix}{key}"
            param.name = name
            out.append((name, param))
        for key, child in self._modules.items():
            out.extend(child.named_parameters(prefix=f"{prefix}{key}."))
        return out

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def parameter_count(self) -> int:
        return sum(p.value.size for p in self.parameters())

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        """Replace parameter values from a name -> array mapping."""
        for name, param in self.named_parameters():
            if name not in state:
                raise ShapeError(f"missing parameter in state: {name}")
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != param.value.shape:
                raise ShapeError(
                    f"parameter {name}: checkpoint shape {arr.shape} "
                    f"does not match model shape {param.value.shape}"
                )
            param.value.data = arr.copy()

    def state(self) -> dict[str, np.ndarray]:
        return {name: p.value.numpy() for name, p in self.named_parameters()}


class ModuleList(Module):
    """A list of submodules registered under their index."""

    def __init__(self, modules=()):
        super().__init__()
        self._items: list[Module] = []
        for m in modules:
            self.append(m)

    def append(self, module: Module) -> None:
        self._modules[str(len(self._items))] = module
        self._items.append(module)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int,
                   shape: tuple[int, ...]) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Linear(Module):
    """Affine map on the trailing axis: y = x @ W + b, W of shape (in, out)."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator,
                 bias: bool = True):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        self.weight = Parameter(
            glorot_uniform(rng, in_features, out_features, (in_features, out_features))
        )
        self.bias = Parameter(np.zeros(out_features)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_features:
            raise ShapeError(
                f"linear expects trailing extent {self.in_features} "
                f"(weight {self.weight.value.shape}), got input {x.shape}"
            )
        out = T.matmul(x, self.weight.value)
        if self.bias is not None:
            out = out + self.bias.value
        return out

    __call__ = forward


class LayerNorm(Module):
    """Trailing-axis normalization (biased variance) with learned affine."""

    def __init__(self, dim: int, epsilon: float = 1e-5):
        super().__init__()
        self.dim = dim
        self.epsilon = epsilon
        self.gain = Parameter(np.ones(dim))
        self.shift = Parameter(np.zeros(dim))

    def forward(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gain.value, self.shift.value, self.epsilon)

    __call__ = forward


class Dropout(Module):
    def __init__(self, rate: float):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate

    def forward(self, x: Tensor, training: bool, rng: np.random.Generator | None) -> Tensor:
        return T.dropout(x, self.rate, training, rng)

    __call__ = forward


class MultiHeadSelfAttention(Module):
    """Scaled dot-product self-attention over the second-to-last axis.

    Input (..., S, D) is projected to queries/keys/values, split into
    `heads` slices of width D/heads, attended with scale 1/sqrt(D/heads),
    concatenated and projected back to width D.
    """

    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        super().__init__()
        if dim % heads != 0:
            raise ConfigError(f"attention width {dim} not divisible by {heads} heads")
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        self.query = Linear(dim, dim, rng)
        # a key bias shifts every score in a row equally and is cancelled
        # by the softmax, so it would be a permanently dead parameter
        self.key = Linear(dim, dim, rng, bias=False)
        self.value = Linear(dim, dim, rng)
        self.out = Linear(dim, dim, rng)

    def _split_heads(self, x: Tensor, seq: int) -> Tensor:
        # (..., S, D) -> (..., heads, S, head_dim)
        shape = x.shape[:-2] + (seq, self.heads, self.head_dim)
        return T.swapaxes(T.reshape(x, shape), -2, -3)

    def forward(self, x: Tensor, return_attn: bool = False):
        if x.shape[-1] != self.dim:
            raise ShapeError(f"attention expects width {self.dim}, got {x.shape}")
        seq = x.shape[-2]
        q = self._split_heads(self.query(x), seq)
        k = self._split_heads(self.key(x), seq)
        v = self._split_heads(self.value(x), seq)
        scores = T.matmul(q, T.swapaxes(k, -1, -2)) * (1.0 / math.sqrt(self.head_dim))
        attn = T.softmax(scores, axis=-1)
        context = T.matmul(attn, v)
        merged = T.reshape(T.swapaxes(context, -2, -3), x.shape[:-2] + (seq, self.dim))
        out = self.out(merged)
        if return_attn:
            return out, attn
        return out

    __call__ = forward


class MixerMLP(Module):
    """Residual two-layer MLP with GELU and dropout on the trailing axis."""

    def __init__(self, dim: int, hidden: int, dropout_rate: float, rng: np.random.Generator):
        super().__init__()
        self.fc1 = Linear(dim, hidden, rng)
        self.fc2 = Linear(hidden, dim, rng)
        self.drop = Dropout(dropout_rate)

    def forward(self, x: Tensor, training: bool, rng: np.random.Generator | None) -> Tensor:
        return x + self.drop(self.fc2(T.gelu(self.fc1(x))), training, rng)

    __call__ = forward
