"""The trajectory prediction network.

Pipeline for one coded window X of shape (C, L):

  1. per-step embedding of the transposed series into width d, then a
     post-norm attention stack over the L time tokens, projected back to
     a mixed series Z of shape (C, L);
  2. K patch mixer blocks, one per configured patch length, largest
     scale first: zero-pad the series front to a multiple of P, reshape
     into (C, P, N) patches, mix across patches (N axis) and within
     patches (P axis) with residual MLPs, squeeze to (C, P, 1) and
     rebuild back to (C, P, N) with a mirrored decoder;
  3. aggregation: the K rebuilt series are flattened channel-major into
     tokens of width C*L and attended over the scale axis, regrouped
     per variable into tokens of width K*L and attended over the
     channel axis, giving the fused representation H of shape (C, L, K);
  4. K direct predictors, one per scale slice of H, each a channel MLP
     (C -> C') followed by a time MLP (L -> T), summed left to right
     into the final (C', T) prediction.

All blocks accept an arbitrary number of leading batch dimensions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError
from .nn import (
    Linear, LayerNorm, MixerMLP, Module, ModuleList, MultiHeadSelfAttention,
)
from .tensor import Tensor


@dataclass
class ModelConfig:
    """Architecture hyper-parameters; defaults follow the reference setup."""

    input_channels: int = 6
    output_channels: int = 3
    lookback: int = 60
    horizon: int = 15
    embed_dim: int = 128
    heads: int = 8
    temporal_layers: int = 3
    scale_layers: int = 3
    channel_layers: int = 3
    patch_sizes: tuple[int, ...] = (30, 20, 10, 6, 2)
    dropout: float = 0.1
    mlp_hidden_factor: int = 2
    predictor_hidden: int = 128
    seed: int = 0

    def __post_init__(self):
        self.patch_sizes = tuple(int(p) for p in self.patch_sizes)
        self.validate()

    def validate(self) -> None:
        if not self.patch_sizes:
            raise ConfigError("patch_sizes must not be empty")
        for p in self.patch_sizes:
            if not 1 <= p <= self.lookback:
                raise ConfigError(
                    f"patch size {p} outside [1, lookback={self.lookback}]"
                )
        if self.embed_dim % self.heads != 0:
            raise ConfigError(
                f"embed_dim {self.embed_dim} not divisible by heads {self.heads}"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.mlp_hidden_factor < 1:
            raise ConfigError("mlp_hidden_factor must be >= 1")
        for name in ("input_channels", "output_channels", "lookback", "horizon",
                     "embed_dim", "heads", "predictor_hidden"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        for name in ("temporal_layers", "scale_layers", "channel_layers"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")

    @property
    def num_scales(self) -> int:
        return len(self.patch_sizes)

    def patch_counts(self) -> tuple[int, ...]:
        return tuple(math.ceil(self.lookback / p) for p in self.patch_sizes)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = list(value) if isinstance(value, tuple) else value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        kwargs = {f.name: data[f.name] for f in fields(cls) if f.name in data}
        if "patch_sizes" in kwargs:
            kwargs["patch_sizes"] = tuple(kwargs["patch_sizes"])
        return cls(**kwargs)


@dataclass
class ScaleTrace:
    """Intermediates of one patch mixer block."""

    patched: Tensor        # (C, P, N)
    inter_mixed: Tensor    # (C, P, N)
    intra_mixed: Tensor    # (C, N, P)
    encoded: Tensor        # (C, P, 1)
    expanded: Tensor       # (C, P, N)
    intra_rebuilt: Tensor  # (C, N, P)
    rebuilt: Tensor        # (C, P, N)


@dataclass
class ForwardTrace:
    """Every named intermediate of one forward pass."""

    embeddings: list[Tensor]          # time tokens, layer 0..l
    time_mixed: Tensor                # (C, L)
    scales: list[ScaleTrace] = field(default_factory=list)
    scale_tokens: list[Tensor] = field(default_factory=list)    # (K, C*L) 0..l
    channel_tokens: list[Tensor] = field(default_factory=list)  # (C, K*L) 0..l
    fused: Tensor | None = None       # (C, L, K)
    per_predictor: list[Tensor] = field(default_factory=list)   # K x (C', T)
    prediction: Tensor | None = None  # (C', T)


def effective_heads(width: int, requested: int) -> int:
    """Largest head count <= requested that divides the token width.

    The fusion stages attend over tokens of width C*L and K*L, which the
    default configuration does not make divisible by the requested head
    count (e.g. K*L = 300 vs 8 heads); dividing the width evenly keeps
    the attention well-formed without rejecting the standard setup.
    """
    for h in range(min(requested, width), 0, -1):
        if width % h == 0:
            return h
    return 1


def patchify(z: Tensor, patch_len: int) -> Tensor:
    """(..., C, L) -> (..., C, P, N) with front zero padding to N*P."""
    length = z.shape[-1]
    n_patches = math.ceil(length / patch_len)
    pad = n_patches * patch_len - length
    padded = T.pad_front(z, pad, axis=-1)
    grouped = T.reshape(padded, padded.shape[:-1] + (n_patches, patch_len))
    return T.swapaxes(grouped, -1, -2)


def depatchify(zp: Tensor, length: int) -> Tensor:
    """Inverse of patchify: strip the zero padding, back to (..., C, L)."""
    patch_len, n_patches = zp.shape[-2], zp.shape[-1]
    grouped = T.swapaxes(zp, -1, -2)
    flat = T.reshape(grouped, grouped.shape[:-2] + (n_patches * patch_len,))
    return T.slice_axis(flat, n_patches * patch_len - length, None, axis=-1)


class AttentionBlock(Module):
    """Post-norm residual pair: LN(x + MSA(x)), then LN(x + FC(x))."""

    def __init__(self, width: int, heads: int, rng: np.random.Generator):
        super().__init__()
        self.attn = MultiHeadSelfAttention(width, effective_heads(width, heads), rng)
        self.fc = Linear(width, width, rng)
        self.norm1 = LayerNorm(width)
        self.norm2 = LayerNorm(width)

    def forward(self, x: Tensor) -> Tensor:
        x = self.norm1(x + self.attn(x))
        return self.norm2(x + self.fc(x))

    __call__ = forward


class AttentionStack(Module):
    def __init__(self, width: int, heads: int, layers: int, rng: np.random.Generator):
        super().__init__()
        self.blocks = ModuleList([AttentionBlock(width, heads, rng) for _ in range(layers)])

    def forward(self, x: Tensor, collect: list[Tensor] | None = None) -> Tensor:
        for block in self.blocks:
            x = block(x)
            if collect is not None:
                collect.append(x)
        return x

    __call__ = forward


class PatchMixer(Module):
    """Encoder-decoder mixer for one patch length."""

    def __init__(self, cfg: ModelConfig, patch_len: int, rng: np.random.Generator):
        super().__init__()
        self.patch_len = patch_len
        self.length = cfg.lookback
        n = math.ceil(cfg.lookback / patch_len)
        factor = cfg.mlp_hidden_factor
        self.inter = MixerMLP(n, factor * n, cfg.dropout, rng)
        self.intra = MixerMLP(patch_len, factor * patch_len, cfg.dropout, rng)
        self.squeeze = Linear(n, 1, rng)
        self.expand = Linear(1, n, rng)
        self.dec_intra = MixerMLP(patch_len, factor * patch_len, cfg.dropout, rng)
        self.dec_inter = MixerMLP(n, factor * n, cfg.dropout, rng)

    def forward(self, z: Tensor, training: bool, rng) -> tuple[Tensor, ScaleTrace]:
        patched = patchify(z, self.patch_len)                       # (C, P, N)
        inter_mixed = self.inter(patched, training, rng)            # mix over N
        intra_mixed = self.intra(T.swapaxes(inter_mixed, -1, -2), training, rng)
        encoded = self.squeeze(T.swapaxes(intra_mixed, -1, -2))     # (C, P, 1)
        expanded = self.expand(encoded)                             # (C, P, N)
        intra_rebuilt = self.dec_intra(T.swapaxes(expanded, -1, -2), training, rng)
        rebuilt = self.dec_inter(T.swapaxes(intra_rebuilt, -1, -2), training, rng)
        return rebuilt, ScaleTrace(
            patched=patched, inter_mixed=inter_mixed, intra_mixed=intra_mixed,
            encoded=encoded, expanded=expanded, intra_rebuilt=intra_rebuilt,
            rebuilt=rebuilt,
        )

    __call__ = forward


class Predictor(Module):
    """Channel MLP (C -> C') then time MLP (L -> T) for one scale slice."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        super().__init__()
        hidden = cfg.predictor_hidden
        self.channel_in = Linear(cfg.input_channels, hidden, rng)
        self.channel_out = Linear(hidden, cfg.output_channels, rng)
        self.time_in = Linear(cfg.lookback, hidden, rng)
        self.time_out = Linear(hidden, cfg.horizon, rng)

    def forward(self, h: Tensor) -> Tensor:
        x = T.swapaxes(h, -1, -2)                        # (L, C)
        x = self.channel_out(T.gelu(self.channel_in(x)))  # (L, C')
        x = T.swapaxes(x, -1, -2)                        # (C', L)
        return self.time_out(T.gelu(self.time_in(x)))    # (C', T)

    __call__ = forward


class FlightPatchNet(Module):
    """End-to-end network; a pure function of its configuration seed."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        rng = np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(0,)))
        c, length = cfg.input_channels, cfg.lookback
        self.time_embed = Linear(c, cfg.embed_dim, rng)
        self.temporal = AttentionStack(cfg.embed_dim, cfg.heads, cfg.temporal_layers, rng)
        self.time_project = Linear(cfg.embed_dim, c, rng)
        self.mixers = ModuleList([PatchMixer(cfg, p, rng) for p in cfg.patch_sizes])
        self.scale_fusion = AttentionStack(c * length, cfg.heads, cfg.scale_layers, rng)
        self.channel_fusion = AttentionStack(cfg.num_scales * length, cfg.heads,
                                             cfg.channel_layers, rng)
        self.predictors = ModuleList([Predictor(cfg, rng) for _ in cfg.patch_sizes])
        self.named_parameters()  # stamp parameter names once

    # -- forward ----------------------------------------------------------

    def _check_input(self, x: Tensor) -> None:
        c, length = self.cfg.input_channels, self.cfg.lookback
        if x.shape[-2:] != (c, length):
            raise ShapeError(
                f"expected input (..., {c}, {length}), got {x.shape}"
            )

    def forward(self, x: Tensor, training: bool = False,
                rng: np.random.Generator | None = None,
                with_trace: bool = False) -> tuple[Tensor, ForwardTrace | None]:
        self._check_input(x)
        cfg = self.cfg
        c, length, k = cfg.input_channels, cfg.lookback, cfg.num_scales

        tokens = self.time_embed(T.swapaxes(x, -1, -2))     # (L, d)
        embeddings = [tokens] if with_trace else None
        tokens = self.temporal(tokens, collect=embeddings)
        z = T.swapaxes(self.time_project(tokens), -1, -2)   # (C, L)

        flats = []
        scale_traces = []
        for mixer in self.mixers:
            rebuilt, strace = mixer(z, training, rng)
            series = depatchify(rebuilt, length)            # (C, L)
            flats.append(T.reshape(series, series.shape[:-2] + (c * length,)))
            if with_trace:
                scale_traces.append(strace)

        scale_tokens = T.stack(flats, axis=-2)              # (K, C*L)
        collected_s = [scale_tokens] if with_trace else None
        scale_tokens = self.scale_fusion(scale_tokens, collect=collected_s)

        prefix = scale_tokens.shape[:-2]
        regrouped = T.reshape(scale_tokens, prefix + (k, c, length))
        channel_tokens = T.reshape(T.swapaxes(regrouped, -2, -3), prefix + (c, k * length))
        collected_c = [channel_tokens] if with_trace else None
        channel_tokens = self.channel_fusion(channel_tokens, collect=collected_c)

        per_scale = T.reshape(channel_tokens, prefix + (c, k, length))
        outputs = []
        for i, predictor in enumerate(self.predictors):
            sliced = T.slice_axis(per_scale, i, i + 1, axis=-2)
            h_i = T.reshape(sliced, prefix + (c, length))
            outputs.append(predictor(h_i))
        prediction = outputs[0]
        for extra in outputs[1:]:
            prediction = prediction + extra

        trace = None
        if with_trace:
            trace = ForwardTrace(
                embeddings=embeddings,
                time_mixed=z,
                scales=scale_traces,
                scale_tokens=collected_s,
                channel_tokens=collected_c,
                fused=T.swapaxes(per_scale, -1, -2),        # (C, L, K)
                per_predictor=outputs,
                prediction=prediction,
            )
        return prediction, trace

    __call__ = forward

    def forward_trace(self, x: Tensor, training: bool = False,
                      rng: np.random.Generator | None = None) -> ForwardTrace:
        _, trace = self.forward(x, training=training, rng=rng, with_trace=True)
        return trace

    def predict(self, x: Tensor) -> Tensor:
        """Inference forward: no dropout, no graph recording."""
        with T.no_grad():
            prediction, _ = self.forward(x, training=False)
        return prediction

    # -- reporting ----------------------------------------------------------

    def describe(self) -> str:
        lines = ["FlightPatchNet"]
        for key, value in sorted(self.cfg.to_dict().items()):
            lines.append(f"  {key} = {value}")
        lines.append("")
        lines.append(f"{'parameter':<44} {'shape':<14} count")
        total = 0
        for name, param in self.named_parameters():
            shape = "x".join(str(s) for s in param.value.shape)
            lines.append(f"{name:<44} {shape:<14} {param.value.size}")
            total += param.value.size
        lines.append(f"{'total':<44} {'':<14} {total}")
        return "\n".join(lines) + "\n"
