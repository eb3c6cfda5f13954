"""Framing, Hann windowing, STFT/iSTFT and SNR-controlled mixing.

Frames start at ``l * hop`` with no centering or padding, so a signal of
``N`` samples yields ``1 + (N - M) // H`` frames and any tail shorter than a
hop is dropped. The inverse transform uses weighted overlap-add with the
analysis window as synthesis window and divides by the summed squared
window, floored at ``EDGE_NORM_FLOOR`` times its peak. Reconstruction is exact
wherever the sum is above the floor, which includes every sample at least one
frame in from either end.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fft as _fft
from .errors import (
    ConfigError,
    ContractError,
    DegenerateInputError,
    InputTooShortError,
    ShapeError,
)
from .tensor import Tensor, mul, overlap_add, record_op, crop_or_pad

DEFAULT_SAMPLE_RATE = 16000
EDGE_NORM_FLOOR = 0.1


@dataclass(frozen=True)
class AudioBuffer:
    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ShapeError(f"audio must be mono, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ContractError("audio contains non-finite samples")
        if self.sample_rate <= 0:
            raise ConfigError("sample_rate must be positive")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def seconds(self) -> float:
        return len(self.samples) / self.sample_rate


def _samples(x) -> np.ndarray:
    if isinstance(x, AudioBuffer):
        return x.samples
    return np.asarray(x, dtype=np.float64)


@dataclass(frozen=True)
class WindowSpec:
    frame: int
    hop: int
    kind: str = "hann"

    def __post_init__(self):
        if self.kind != "hann":
            raise ConfigError(f"unsupported window kind {self.kind!r}")
        if self.frame < 2 or self.frame % 2:
            raise ConfigError(f"window length must be even and >= 2, got {self.frame}")
        if not 0 < self.hop <= self.frame:
            raise ConfigError(f"hop must satisfy 0 < H <= M, got H={self.hop}, M={self.frame}")

    @property
    def overlap_ratio(self) -> float:
        return (self.frame - self.hop) / self.frame

    @property
    def n_bins(self) -> int:
        return self.frame // 2 + 1

    def window(self) -> np.ndarray:
        return hann_window(self.frame)


def hann_window(m: int) -> np.ndarray:
    """Periodic Hann window ``0.5 * (1 - cos(2 pi n / M))``."""
    if m < 2 or m % 2:
        raise ConfigError(f"Hann window length must be even and >= 2, got {m}")
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(m) / m))


def frame_count(n: int, m: int, h: int) -> int:
    if h <= 0:
        raise ConfigError("hop must be positive")
    if n < m:
        raise InputTooShortError(f"input of {n} samples is shorter than one frame ({m})")
    return 1 + (n - m) // h


def frames(x, spec: WindowSpec) -> np.ndarray:
    """Raw (unwindowed) frames, shape (L, M)."""
    x = _samples(x)
    count = frame_count(len(x), spec.frame, spec.hop)
    view = np.lib.stride_tricks.sliding_window_view(x, spec.frame)[:: spec.hop]
    return view[:count]


@dataclass(frozen=True)
class ComplexSpectrogram:
    """One-sided STFT values, shape (F, L) with F = M/2 + 1."""

    values: np.ndarray
    frame: int
    hop: int

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[0] != self.frame // 2 + 1:
            raise ShapeError(
                f"spectrogram shape {self.values.shape} does not match frame {self.frame}"
            )

    @property
    def real(self) -> np.ndarray:
        return self.values.real

    @property
    def imag(self) -> np.ndarray:
        return self.values.imag

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def n_frames(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class MagPhase:
    magnitude: np.ndarray
    phase: np.ndarray


def stft(x, spec: WindowSpec) -> ComplexSpectrogram:
    """``X(f, l) = sum_n x(n + lH) w(n) exp(-2 pi j f n / M)`` for f in 0..M/2."""
    windowed = frames(x, spec) * spec.window()
    return ComplexSpectrogram(_fft.rfft(windowed).T, spec.frame, spec.hop)


def _check_meta(X: ComplexSpectrogram, spec: WindowSpec) -> None:
    if X.frame != spec.frame or X.hop != spec.hop:
        raise ContractError(
            f"spectrogram was analysed with (M={X.frame}, H={X.hop}), "
            f"synthesis asked for (M={spec.frame}, H={spec.hop})"
        )


def synthesis_norm(n_frames: int, spec: WindowSpec) -> np.ndarray:
    """Per-sample sum of squared shifted windows over the covered span."""
    w2 = np.tile(spec.window() ** 2, (n_frames, 1))
    return overlap_add(Tensor(w2), spec.hop).data


def _inverse_norm(n_frames: int, spec: WindowSpec) -> np.ndarray:
    # Near the outer edges only one tapered window covers a sample, so the
    # summed squared window goes to zero and dividing by it would blow up any
    # modification of the spectrum. Flooring at a fraction of the peak leaves
    # every fully overlapped sample exact and tapers the first/last few.
    norm = synthesis_norm(n_frames, spec)
    return 1.0 / np.maximum(norm, EDGE_NORM_FLOOR * norm.max())


def istft(X: ComplexSpectrogram, spec: WindowSpec, out_len: int | None = None,
          sample_rate: int = DEFAULT_SAMPLE_RATE) -> AudioBuffer:
    _check_meta(X, spec)
    windowed = _fft.irfft(X.values.T) * spec.window()
    y = overlap_add(Tensor(windowed), spec.hop).data * _inverse_norm(X.n_frames, spec)
    if out_len is not None:
        y = _fit_length(y, out_len)
    return AudioBuffer(y, sample_rate)


def _fit_length(y: np.ndarray, n: int) -> np.ndarray:
    if len(y) >= n:
        return y[:n].copy()
    return np.concatenate((y, np.zeros(n - len(y))))


def interior(n_frames: int, spec: WindowSpec) -> slice:
    """Samples covered by full window overlap, one frame in from either end."""
    return slice(spec.frame, (n_frames - 1) * spec.hop)


def mag_phase_split(X: ComplexSpectrogram | np.ndarray) -> MagPhase:
    values = X.values if isinstance(X, ComplexSpectrogram) else np.asarray(X)
    # np.angle(0) is already 0; arctan2 keeps the result in (-pi, pi]
    return MagPhase(np.abs(values), np.arctan2(values.imag, values.real))


def recombine(magnitude: np.ndarray, phase: np.ndarray, frame: int | None = None,
              hop: int | None = None):
    magnitude = np.asarray(magnitude, dtype=np.float64)
    phase = np.asarray(phase, dtype=np.float64)
    if magnitude.shape != phase.shape:
        raise ShapeError(f"magnitude {magnitude.shape} and phase {phase.shape} differ")
    if np.any(magnitude < 0):
        raise ContractError("magnitudes must be nonnegative")
    values = magnitude * np.exp(1j * phase)
    if frame is None:
        return values
    return ComplexSpectrogram(values, frame, hop if hop is not None else frame // 2)


# -- differentiable synthesis -------------------------------------------------


def irfft_tensor(re: Tensor, im: Tensor) -> Tensor:
    """Inverse one-sided DFT along the last axis, differentiable in both parts.

    The map is linear, so its adjoint is ``c_k / M * rfft(g)`` with c_k = 1 at
    DC and Nyquist and 2 elsewhere.
    """
    bins = re.shape[-1]
    n = 2 * (bins - 1)
    out = _fft.irfft(re.data + 1j * im.data, n)
    weight = np.full(bins, 2.0 / n)
    weight[0] = weight[-1] = 1.0 / n

    def backward(g):
        spec = _fft.rfft(g) * weight
        gim = spec.imag.copy()
        gim[..., 0] = 0.0
        gim[..., -1] = 0.0
        return spec.real, gim

    return record_op(out, (re, im), backward)


def istft_tensor(magnitude: Tensor, phase: np.ndarray, spec: WindowSpec,
                 out_len: int) -> Tensor:
    """iSTFT of ``magnitude * exp(j phase)``; gradients flow through the magnitude.

    ``magnitude`` and ``phase`` are (F, L).
    """
    if magnitude.shape != phase.shape:
        raise ShapeError(f"magnitude {magnitude.shape} and phase {phase.shape} differ")
    mag_t = magnitude.transpose()
    re = mul(mag_t, np.cos(phase).T)
    im = mul(mag_t, np.sin(phase).T)
    windowed = mul(irfft_tensor(re, im), spec.window())
    y = mul(overlap_add(windowed, spec.hop), _inverse_norm(phase.shape[1], spec))
    return crop_or_pad(y, out_len)


# -- mixing ----------------------------------------------------------------------


def mix_at_snr(s, v, snr_db: float) -> AudioBuffer:
    """Return ``s + alpha * v`` with alpha chosen so that the SNR is exactly ``snr_db``."""
    rate = s.sample_rate if isinstance(s, AudioBuffer) else DEFAULT_SAMPLE_RATE
    s, v = _samples(s), _samples(v)
    return AudioBuffer(s + noise_gain(s, v, snr_db) * v, rate)


def noise_gain(s, v, snr_db: float) -> float:
    """Scale for ``v`` that puts it ``snr_db`` below ``s`` in energy."""
    s, v = _samples(s), _samples(v)
    if s.shape != v.shape:
        raise ShapeError(f"speech {s.shape} and noise {v.shape} lengths differ")
    es, ev = float(s @ s), float(v @ v)
    if es == 0.0 or ev == 0.0:
        raise DegenerateInputError("speech and noise must both have nonzero energy")
    return float(np.sqrt(es / (ev * 10.0 ** (snr_db / 10.0))))
