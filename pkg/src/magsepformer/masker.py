"""Dual-path transformer masker.

Feature frames are cut into chunks of ``C`` frames with hop ``C // 2``. Each of
the ``R`` repetitions runs ``K_intra`` transformer blocks along the frames
inside every chunk, then ``K_inter`` blocks along the chunk index for every
intra-chunk position. A PReLU and a 1x1 projection follow, chunks are merged
back by normalized overlap-add, and a tanh x sigmoid gate plus ReLU turns the
result into a mask in [0, 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, DegenerateInputError, ShapeError
from .nn import LAYER_NORM_EPS, LayerNorm, Linear, Module, TransformerBlock, positional_encoding
from .tensor import Tensor


@dataclass(frozen=True)
class MaskerConfig:
    repeats: int = 2
    k_intra: int = 4
    k_inter: int = 4
    d_model: int = 256
    d_ff: int = 256
    n_heads: int = 8
    chunk_size: int = 50
    positional_encoding: bool = True
    norm_eps: float = LAYER_NORM_EPS

    def __post_init__(self):
        for name in ("repeats", "k_intra", "k_inter"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        for name in ("d_model", "d_ff", "n_heads"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.d_model % self.n_heads:
            raise ConfigError(f"d_model={self.d_model} not divisible by n_heads={self.n_heads}")
        if self.chunk_size < 2:
            raise ConfigError(f"chunk size must be >= 2, got {self.chunk_size}")
        if self.norm_eps <= 0:
            raise ConfigError("norm_eps must be positive")


# -- chunking ----------------------------------------------------------------


def n_chunks(length: int, chunk: int) -> int:
    """Fewest chunks of ``chunk`` frames at hop ``chunk // 2`` that cover ``length`` frames."""
    hop = chunk // 2
    return max(1, 1 + math.ceil((length - chunk) / hop))


@dataclass(frozen=True)
class ChunkTensor:
    """Stacked chunks stored chunk-major: ``data`` has shape (S, C, features)."""

    data: Tensor
    chunk_size: int
    length: int

    @property
    def hop(self) -> int:
        return self.chunk_size // 2

    @property
    def n_chunks(self) -> int:
        return self.data.shape[0]


def _check_chunking(length: int, chunk: int) -> None:
    if chunk < 2:
        raise ConfigError(f"chunk size must be >= 2, got {chunk}")
    if chunk > 2 * length:
        raise DegenerateInputError(f"chunk size {chunk} exceeds twice the sequence length {length}")


def chunk_frames(x: Tensor, chunk: int) -> ChunkTensor:
    """Chunk a frames-major (L, F) sequence, zero-padding the tail."""
    length = x.shape[0]
    _check_chunking(length, chunk)
    s = n_chunks(length, chunk)
    padded = T.pad_end(x, (s - 1) * (chunk // 2) + chunk - length)
    return ChunkTensor(T.frame(padded, chunk, chunk // 2), chunk, length)


def chunk_sequence(w: Tensor, chunk: int) -> ChunkTensor:
    """Chunk a features-first (F, L) representation."""
    return chunk_frames(T.transpose(T.as_tensor(w)), chunk)


def overlap_counts(length: int, chunk: int) -> np.ndarray:
    s = n_chunks(length, chunk)
    covered = T.overlap_add(Tensor(np.ones((s, chunk))), chunk // 2).data
    return covered[:length]


def merge_frames(ct: ChunkTensor, length: int | None = None) -> Tensor:
    """Overlap-add chunks back to a frames-major (L, F) sequence."""
    length = ct.length if length is None else length
    if n_chunks(length, ct.chunk_size) != ct.n_chunks:
        raise ShapeError(
            f"{ct.n_chunks} chunks of size {ct.chunk_size} cannot describe {length} frames"
        )
    summed = T.getitem(T.overlap_add(ct.data, ct.hop), slice(0, length))
    inv = 1.0 / overlap_counts(length, ct.chunk_size)
    return T.mul(summed, np.broadcast_to(inv.reshape((length,) + (1,) * (summed.ndim - 1)),
                                         summed.shape))


def merge_chunks(ct: ChunkTensor, length: int | None = None) -> Tensor:
    """Inverse of :func:`chunk_sequence`; returns features-first (F, L)."""
    return T.transpose(merge_frames(ct, length))


# -- parameters ------------------------------------------------------------------


class Stack(Module):
    def __init__(self, blocks: list[TransformerBlock]):
        self.blocks = blocks

    def __len__(self) -> int:
        return len(self.blocks)


class SepFormerParams(Module):
    """All learnable weights of the masker for ``n_features`` input features."""

    def __init__(self, config: MaskerConfig, n_features: int, rng: np.random.Generator):
        self.config = config
        self.n_features = n_features
        d = config.d_model
        self.input_norm = LayerNorm(n_features, config.norm_eps)
        if n_features != d:
            self.input_proj = Linear(n_features, d, rng)
        else:
            self.input_proj = None

        def stack(k):
            return Stack([
                TransformerBlock(d, config.d_ff, config.n_heads, rng, config.norm_eps)
                for _ in range(k)
            ])

        self.intra = []
        self.inter = []
        for _ in range(config.repeats):
            self.intra.append(stack(config.k_intra))
            self.inter.append(stack(config.k_inter))
        self.prelu_slope = Tensor(np.full(1, 0.25), requires_grad=True)
        self.post = Linear(d, d, rng)
        self.gate_tanh = Linear(d, n_features, rng)
        self.gate_sigmoid = Linear(d, n_features, rng)


def run_stack(x: Tensor, stack: Stack, stage: str, use_pe: bool) -> Tensor:
    if not len(stack):
        return x
    if use_pe:
        x = x + positional_encoding(x.shape[1], x.shape[2])
    for block in stack.blocks:
        x = block(x, stage)
    return x


def dual_path_forward(ct: ChunkTensor, params: SepFormerParams,
                      config: MaskerConfig | None = None) -> ChunkTensor:
    """R x (intra stack over C, batched over S; inter stack over S, batched over C)."""
    config = params.config if config is None else config
    if len(params.intra) != config.repeats:
        raise ConfigError(f"params hold {len(params.intra)} repetitions, config asks {config.repeats}")
    if ct.data.shape[-1] != config.d_model:
        raise ShapeError(f"chunk features {ct.data.shape[-1]} != d_model {config.d_model}")
    x = ct.data
    use_pe = config.positional_encoding
    for intra, inter in zip(params.intra, params.inter):
        x = run_stack(x, intra, "intra", use_pe)
        x = T.swapaxes(x, 0, 1)
        x = run_stack(x, inter, "inter", use_pe)
        x = T.swapaxes(x, 0, 1)
    return ChunkTensor(x, ct.chunk_size, ct.length)


def mask_gate(y: Tensor, params: SepFormerParams) -> Tensor:
    """``ReLU(tanh(a(y)) * sigmoid(b(y)))`` on frames-major (L, d) input."""
    gate = T.mul(T.tanh(params.gate_tanh(y)), T.sigmoid(params.gate_sigmoid(y)))
    return T.relu(gate)


def masker_forward(w: Tensor, params: SepFormerParams,
                   config: MaskerConfig | None = None) -> Tensor:
    """Mask in [0, 1) with the shape of the (F, L) encoder output ``w``."""
    config = params.config if config is None else config
    w = T.as_tensor(w)
    if w.ndim != 2 or w.shape[0] != params.n_features:
        raise ShapeError(f"masker expects ({params.n_features}, L) input, got {w.shape}")
    length = w.shape[1]
    x = params.input_norm(T.transpose(w))
    if params.input_proj is not None:
        with T.mac_stage("input_projection"):
            x = params.input_proj(x)
    ct = dual_path_forward(chunk_frames(x, config.chunk_size), params, config)
    with T.mac_stage("norms_and_gates"):
        y = params.post(T.prelu(ct.data, params.prelu_slope))
        merged = merge_frames(ChunkTensor(y, ct.chunk_size, length))
        mask = mask_gate(merged, params)
    return T.transpose(mask)
