"""Layers used by the masker and the learned encoder/decoder."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from . import tensor as T
from .errors import ConfigError, InputTooShortError, ShapeError
from .tensor import Tensor

LAYER_NORM_EPS = 1e-5


class Module:
    """Container whose parameters are the Tensor / Module attributes, in assignment order."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(value, Tensor):
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, bias: bool = True):
        self.weight = uniform_init(rng, (d_out, d_in), d_in)
        if bias:
            self.bias = uniform_init(rng, (d_out,), d_in)
        else:
            self.bias = None

    def __call__(self, x: Tensor) -> Tensor:
        return T.linear(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = LAYER_NORM_EPS):
        self.gain = Tensor(np.ones(dim), requires_grad=True)
        self.bias = Tensor(np.zeros(dim), requires_grad=True)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gain, self.bias, self.eps)


def positional_encoding(length: int, d_model: int) -> np.ndarray:
    """Sinusoidal encoding: sin on even feature indices, cos on odd ones."""
    if length < 1:
        raise ConfigError("positional encoding needs length >= 1")
    pos = np.arange(length)[:, None]
    even = np.arange(0, d_model, 2)
    angle = pos / np.power(10000.0, even / d_model)
    pe = np.zeros((length, d_model))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle[:, : d_model // 2])
    return pe


class MultiHeadAttention(Module):
    """Unmasked scaled dot-product self-attention over axis -2 of (B, L, d)."""

    def __init__(self, d_model: int, n_heads: int, rng: np.random.Generator):
        if d_model % n_heads:
            raise ConfigError(f"d_model={d_model} is not divisible by n_heads={n_heads}")
        self.n_heads = n_heads
        self.query = Linear(d_model, d_model, rng)
        self.key = Linear(d_model, d_model, rng)
        self.value = Linear(d_model, d_model, rng)
        self.out = Linear(d_model, d_model, rng)

    @property
    def d_model(self) -> int:
        return self.query.weight.shape[0]

    def __call__(self, x: Tensor) -> Tensor:
        return mha_forward(x, self)


def _split_heads(x: Tensor, n_heads: int) -> Tensor:
    b, length, d = x.shape
    return T.transpose(x.reshape(b, length, n_heads, d // n_heads), (0, 2, 1, 3))


def mha_forward(x: Tensor, params: MultiHeadAttention) -> Tensor:
    if x.ndim != 3 or x.shape[-1] != params.d_model:
        raise ShapeError(f"attention expects (B, L, {params.d_model}), got {x.shape}")
    b, length, d = x.shape
    h = params.n_heads
    # scaling q instead of the scores avoids a second (B, h, L, L) buffer
    q = _split_heads(params.query(x) * (1.0 / np.sqrt(d // h)), h)
    k = _split_heads(params.key(x), h)
    v = _split_heads(params.value(x), h)
    scores = T.matmul(q, T.swapaxes(k, -1, -2))
    weights = T.softmax(scores, axis=-1, inplace=True)
    del scores
    context = T.matmul(weights, v)
    del weights
    merged = T.transpose(context, (0, 2, 1, 3)).reshape(b, length, d)
    return params.out(merged)


class FeedForward(Module):
    def __init__(self, d_model: int, d_ff: int, rng: np.random.Generator):
        self.inner = Linear(d_model, d_ff, rng)
        self.outer = Linear(d_ff, d_model, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.outer(T.relu(self.inner(x)))


class TransformerBlock(Module):
    """Pre-norm block: ``y = x + MHA(Norm(x)); z = y + FFW(Norm(y))``."""

    def __init__(self, d_model: int, d_ff: int, n_heads: int, rng: np.random.Generator,
                 eps: float = LAYER_NORM_EPS):
        self.norm1 = LayerNorm(d_model, eps)
        self.attention = MultiHeadAttention(d_model, n_heads, rng)
        self.norm2 = LayerNorm(d_model, eps)
        self.ffw = FeedForward(d_model, d_ff, rng)

    def __call__(self, x: Tensor, stage: str | None = None) -> Tensor:
        return transformer_block_forward(x, self, stage)


def transformer_block_forward(x: Tensor, params: TransformerBlock,
                              stage: str | None = None) -> Tensor:
    """Apply one block. ``stage`` prefixes the MAC-counter labels (e.g. "intra")."""
    if x.shape[-1] != params.attention.d_model:
        raise ShapeError(f"block width {params.attention.d_model} != input {x.shape}")
    with T.mac_stage(f"{stage}_attention" if stage else "attention"):
        y = x + params.attention(params.norm1(x))
    with T.mac_stage(f"{stage}_ffw" if stage else "ffw"):
        return y + params.ffw(params.norm2(y))


class Conv1d(Module):
    """Single-input-channel strided convolution producing (n_filters, L)."""

    def __init__(self, n_filters: int, kernel_size: int, stride: int,
                 rng: np.random.Generator, bias: bool = False):
        _check_conv(kernel_size, stride)
        self.weight = uniform_init(rng, (n_filters, kernel_size), kernel_size)
        self.bias = uniform_init(rng, (n_filters,), kernel_size) if bias else None
        self.stride = stride

    def __call__(self, x: Tensor) -> Tensor:
        return conv1d_forward(x, self)


class ConvTranspose1d(Module):
    """Maps (n_filters, L) back to ``(L - 1) * stride + kernel_size`` samples."""

    def __init__(self, n_filters: int, kernel_size: int, stride: int,
                 rng: np.random.Generator, bias: bool = False):
        _check_conv(kernel_size, stride)
        self.weight = uniform_init(rng, (n_filters, kernel_size), n_filters)
        self.bias = uniform_init(rng, (1,), n_filters) if bias else None
        self.stride = stride

    def __call__(self, d: Tensor) -> Tensor:
        return conv_transpose1d_forward(d, self)


def _check_conv(kernel_size: int, stride: int) -> None:
    if stride < 1:
        raise ConfigError("stride must be >= 1")
    if kernel_size < stride:
        raise ConfigError("kernel_size must be >= stride")


def conv1d_forward(x: Tensor, layer: Conv1d) -> Tensor:
    """Valid correlation; accepts (N,) or (1, N) input, returns (F, L)."""
    if x.ndim == 2:
        if x.shape[0] != 1:
            raise ShapeError(f"conv1d expects one input channel, got {x.shape}")
        x = x.reshape(x.shape[1])
    kernel = layer.weight.shape[1]
    if x.shape[0] < kernel:
        raise InputTooShortError(f"input of {x.shape[0]} samples is shorter than kernel {kernel}")
    windows = T.frame(x, kernel, layer.stride)
    return T.transpose(T.linear(windows, layer.weight, layer.bias))


def conv_transpose1d_forward(d: Tensor, layer: ConvTranspose1d) -> Tensor:
    n_filters, kernel = layer.weight.shape
    if d.ndim != 2 or d.shape[0] != n_filters:
        raise ShapeError(f"conv_transpose1d expects ({n_filters}, L), got {d.shape}")
    columns = T.matmul(T.transpose(d), layer.weight)
    out = T.overlap_add(columns, layer.stride)
    if layer.bias is not None:
        out = out + layer.bias[0]
    return out
