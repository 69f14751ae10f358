"""Conformer encoder with funnel blocks that shrink the frame rate.

A funnel block is a conformer block whose self-attention queries are
average-pooled by an integer stride while keys and values keep the full
input resolution; the residual around the attention is max-pooled with
the same stride.  The block therefore emits ceil(T / stride) frames and
adds no parameters over a plain block, so frame-rate schedules can be
swapped without changing the parameter count.

Stride schedules are written in a compact shorthand, e.g.
``"s13^2,s15^2"``: a stride-2 funnel at layer 13 and another at layer
15.  Layers are 0-based; layers not mentioned run at stride 1.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .numerics import (
    ParamSet,
    Tensor,
    concat,
    layer_norm,
    matmul,
    depthwise_conv1d,
    pool1d,
    reshape,
    sigmoid,
    softmax,
    swish,
    transpose,
)

Placements = tuple[tuple[int, int], ...]

_TOKEN_RE = re.compile(r"^s(\d+)\^(\d+)$")


def parse_shorthand(text: str, num_blocks: int | None = None) -> Placements:
    """Parse ``"s13^2,s15^2"`` into ((13, 2), (15, 2)), sorted by layer.

    Surrounding parentheses and whitespace are tolerated.  An empty
    string means no funnel blocks.
    """
    body = text.strip()
    if body.startswith("(") and body.endswith(")"):
        body = body[1:-1]
    body = body.strip()
    if not body:
        return ()
    placements: list[tuple[int, int]] = []
    seen: set[int] = set()
    for part in body.replace(",", " ").split():
        m = _TOKEN_RE.match(part)
        if m is None:
            raise ConfigError(f"bad stride token {part!r} in {text!r}")
        layer, stride = int(m.group(1)), int(m.group(2))
        if stride < 1:
            raise ConfigError(f"stride must be >= 1 in token {part!r}")
        if layer in seen:
            raise ConfigError(f"layer {layer} listed twice in {text!r}")
        if num_blocks is not None and layer >= num_blocks:
            raise ConfigError(f"layer {layer} out of range for {num_blocks} blocks")
        seen.add(layer)
        placements.append((layer, stride))
    return tuple(sorted(placements))


def format_shorthand(placements: Placements) -> str:
    return ",".join(f"s{layer}^{stride}" for layer, stride in sorted(placements))


def _ceil_div(n: int, d: int) -> int:
    return -(-n // d)


@dataclass(frozen=True)
class EncoderConfig:
    """Architecture of the encoder stack.

    ``funnel_placements`` maps 0-based layer index to pooling stride;
    every other layer keeps its input length.  ``subsample_factor`` is
    the fixed front-end reduction applied before the first block.
    """

    num_blocks: int = 4
    model_dim: int = 64
    num_heads: int = 4
    conv_kernel: int = 7
    funnel_placements: Placements = ()
    subsample_factor: int = 4
    input_frame_ms: float = 10.0
    ffn_multiplier: int = 4

    def __post_init__(self):
        if self.num_blocks < 1:
            raise ConfigError("num_blocks must be >= 1")
        if self.model_dim < 1 or self.num_heads < 1:
            raise ConfigError("model_dim and num_heads must be >= 1")
        if self.model_dim % self.num_heads != 0:
            raise ConfigError(
                f"model_dim {self.model_dim} not divisible by {self.num_heads} heads"
            )
        if self.conv_kernel < 1 or self.conv_kernel % 2 == 0:
            raise ConfigError("conv_kernel must be odd and >= 1")
        if self.ffn_multiplier < 1:
            raise ConfigError("ffn_multiplier must be >= 1")
        sub = self.subsample_factor
        if sub < 1 or (sub & (sub - 1)) != 0:
            raise ConfigError("subsample_factor must be a power of two")
        if self.input_frame_ms <= 0:
            raise ConfigError("input_frame_ms must be positive")
        object.__setattr__(self, "funnel_placements", tuple(sorted(self.funnel_placements)))
        seen: set[int] = set()
        for layer, stride in self.funnel_placements:
            if not (0 <= layer < self.num_blocks):
                raise ConfigError(f"funnel layer {layer} out of range")
            if stride < 1:
                raise ConfigError(f"funnel stride {stride} must be >= 1")
            if layer in seen:
                raise ConfigError(f"funnel layer {layer} listed twice")
            seen.add(layer)

    @classmethod
    def from_shorthand(cls, text: str, **kwargs) -> "EncoderConfig":
        cfg = cls(**kwargs)
        return cls(**{**kwargs, "funnel_placements": parse_shorthand(text, cfg.num_blocks)})

    @property
    def shorthand(self) -> str:
        return format_shorthand(self.funnel_placements)

    @property
    def funnel_reduction_ratio(self) -> int:
        r = 1
        for _, stride in self.funnel_placements:
            r *= stride
        return r

    @property
    def total_reduction_ratio(self) -> int:
        return self.subsample_factor * self.funnel_reduction_ratio

    @property
    def f_enc_ms(self) -> float:
        return self.input_frame_ms * self.total_reduction_ratio

    def stride_of(self, layer: int) -> int:
        for at, stride in self.funnel_placements:
            if at == layer:
                return stride
        return 1

    def block_lengths(self, input_frames: int) -> list[int]:
        """Per-block input lengths after the front end, ending with the output length.

        Returns num_blocks + 1 entries; entry i is the length entering
        block i, the final entry is the encoder output length.
        """
        if input_frames < 1:
            raise ConfigError("input_frames must be >= 1")
        n = input_frames
        for _ in range(int(math.log2(self.subsample_factor))):
            n = _ceil_div(n, 2)
        lengths = [n]
        for layer in range(self.num_blocks):
            n = _ceil_div(n, self.stride_of(layer))
            lengths.append(n)
        return lengths

    def output_length(self, input_frames: int) -> int:
        return self.block_lengths(input_frames)[-1]


@dataclass
class EncodedSequence:
    """Encoder output: frames are (T, model_dim), one per f_enc interval."""

    frames: Tensor
    frame_ms: float

    def __len__(self) -> int:
        return self.frames.shape[0]


# -- building blocks ----------------------------------------------------


class Linear:
    def __init__(self, params: ParamSet, name: str, d_in: int, d_out: int):
        self.w = params.create(f"{name}.w", (d_in, d_out), "weight")
        self.b = params.create(f"{name}.b", (d_out,), "bias")

    def __call__(self, x: Tensor) -> Tensor:
        return matmul(x, self.w) + self.b


class LayerNorm:
    def __init__(self, params: ParamSet, name: str, dim: int):
        self.gain = params.create(f"{name}.gain", (dim,), "gain")
        self.bias = params.create(f"{name}.bias", (dim,), "bias")

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gain, self.bias)


class FeedForward:
    """Pre-norm two-layer MLP with swish, no dropout."""

    def __init__(self, params: ParamSet, name: str, dim: int, multiplier: int):
        self.norm = LayerNorm(params, f"{name}.norm", dim)
        self.lin1 = Linear(params, f"{name}.lin1", dim, multiplier * dim)
        self.lin2 = Linear(params, f"{name}.lin2", multiplier * dim, dim)

    def __call__(self, x: Tensor) -> Tensor:
        return self.lin2(swish(self.lin1(self.norm(x))))


class ConvModule:
    """Pre-norm gated pointwise expansion, depthwise conv, pointwise squeeze."""

    def __init__(self, params: ParamSet, name: str, dim: int, kernel: int):
        self.norm = LayerNorm(params, f"{name}.norm", dim)
        self.expand = Linear(params, f"{name}.expand", dim, 2 * dim)
        self.kernel = params.create(f"{name}.depthwise", (kernel, dim), "kernel")
        self.squeeze = Linear(params, f"{name}.squeeze", dim, dim)
        self.dim = dim

    def __call__(self, x: Tensor) -> Tensor:
        y = self.expand(self.norm(x))
        gate = y[:, : self.dim] * sigmoid(y[:, self.dim :])
        return self.squeeze(swish(depthwise_conv1d(gate, self.kernel)))


class Attention:
    """Pre-norm multi-head attention; one norm is shared by queries and keys."""

    def __init__(self, params: ParamSet, name: str, dim: int, heads: int):
        self.norm = LayerNorm(params, f"{name}.norm", dim)
        self.wq = Linear(params, f"{name}.q", dim, dim)
        self.wk = Linear(params, f"{name}.k", dim, dim)
        self.wv = Linear(params, f"{name}.v", dim, dim)
        self.wo = Linear(params, f"{name}.out", dim, dim)
        self.heads = heads
        self.dim = dim

    def _split(self, x: Tensor, length: int) -> Tensor:
        per = self.dim // self.heads
        return transpose(reshape(x, (length, self.heads, per)), (1, 0, 2))

    def __call__(self, queries: Tensor, keys_values: Tensor) -> Tensor:
        lq, lkv = queries.shape[0], keys_values.shape[0]
        per = self.dim // self.heads
        q = self._split(self.wq(self.norm(queries)), lq)
        kv_in = self.norm(keys_values)
        k = self._split(self.wk(kv_in), lkv)
        v = self._split(self.wv(kv_in), lkv)
        scores = matmul(q, transpose(k, (0, 2, 1))) * (1.0 / math.sqrt(per))
        ctx = matmul(softmax(scores, axis=-1), v)
        return self.wo(reshape(transpose(ctx, (1, 0, 2)), (lq, self.dim)))


class ConformerBlock:
    """Conformer block, convolution ahead of attention, optional funnel stride.

    With stride s the attention queries are the average-pool of the
    conv output and the residual is the max-pool, so the block emits
    ceil(T / s) frames.  Stride 1 reduces to the plain block exactly
    (pooling with stride 1 is the identity).
    """

    def __init__(
        self,
        params: ParamSet,
        name: str,
        dim: int,
        heads: int,
        kernel: int,
        ffn_multiplier: int,
        stride: int = 1,
    ):
        if stride < 1:
            raise ConfigError("block stride must be >= 1")
        self.ffn1 = FeedForward(params, f"{name}.ffn1", dim, ffn_multiplier)
        self.conv = ConvModule(params, f"{name}.conv", dim, kernel)
        self.attn = Attention(params, f"{name}.attn", dim, heads)
        self.ffn2 = FeedForward(params, f"{name}.ffn2", dim, ffn_multiplier)
        self.norm_out = LayerNorm(params, f"{name}.norm_out", dim)
        self.stride = stride

    def __call__(self, x: Tensor) -> Tensor:
        h = x + 0.5 * self.ffn1(x)
        h = h + self.conv(h)
        queries = pool1d(h, self.stride, "avg")
        residual = pool1d(h, self.stride, "max")
        h = residual + self.attn(queries, h)
        return self.norm_out(h + 0.5 * self.ffn2(h))


class Subsample:
    """Front-end reduction: one depthwise-plus-pointwise stage per factor of two.

    Each stage convolves over time (3 taps, per channel), keeps every
    second frame, then projects with a swish nonlinearity.  A final
    linear layer maps into the block dimension; with factor 1 it is the
    only layer.
    """

    def __init__(self, params: ParamSet, name: str, d_in: int, d_model: int, factor: int):
        self.stages = []
        d_cur = d_in
        for i in range(int(math.log2(factor))):
            kernel = params.create(f"{name}.stage{i}.depthwise", (3, d_cur), "kernel")
            proj = Linear(params, f"{name}.stage{i}.proj", d_cur, d_model)
            self.stages.append((kernel, proj))
            d_cur = d_model
        self.out = Linear(params, f"{name}.out", d_cur, d_model)

    def __call__(self, x: Tensor) -> Tensor:
        for kernel, proj in self.stages:
            x = swish(proj(depthwise_conv1d(x, kernel)[::2]))
        return self.out(x)


def sinusoid_table(length: int, dim: int) -> np.ndarray:
    """Fixed sin/cos position table, one row per frame."""
    pos = np.arange(length)[:, None]
    half = (dim + 1) // 2
    freq = np.exp(-math.log(10000.0) * np.arange(half) / max(half, 1))
    angles = pos * freq
    table = np.zeros((length, dim))
    table[:, 0::2] = np.sin(angles)
    table[:, 1::2] = np.cos(angles)[:, : dim // 2]
    return table


class Encoder:
    """Subsampling front end, fixed positions, then the block stack."""

    def __init__(self, params: ParamSet, name: str, config: EncoderConfig, feature_dim: int):
        self.config = config
        self.subsample = Subsample(
            params, f"{name}.subsample", feature_dim, config.model_dim, config.subsample_factor
        )
        self.blocks = [
            ConformerBlock(
                params,
                f"{name}.block{i}",
                config.model_dim,
                config.num_heads,
                config.conv_kernel,
                config.ffn_multiplier,
                stride=config.stride_of(i),
            )
            for i in range(config.num_blocks)
        ]

    def __call__(self, features: Tensor) -> EncodedSequence:
        x = self.subsample(features)
        x = x + Tensor(sinusoid_table(x.shape[0], self.config.model_dim))
        for block in self.blocks:
            x = block(x)
        return EncodedSequence(x, self.config.f_enc_ms)
