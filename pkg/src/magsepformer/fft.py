"""Iterative radix-2 FFT, vectorized over leading axes.

All transforms act on the last axis, whose length must be a power of two.
The real transforms pack a length-M real signal into an M/2-point complex
transform and untangle the halves afterwards, so ``rfft`` costs roughly half
of a full complex FFT.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import ConfigError


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@lru_cache(maxsize=None)
def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@lru_cache(maxsize=None)
def _twiddles(half: int) -> np.ndarray:
    return np.exp(-2j * np.pi * np.arange(half) / (2 * half))


def fft(x: np.ndarray) -> np.ndarray:
    """Forward DFT along the last axis (decimation in time)."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    if not is_power_of_two(n):
        raise ConfigError(f"FFT length must be a power of two, got {n}")
    lead = x.shape[:-1]
    y = x[..., _bit_reverse(n)]
    half = 1
    while half < n:
        blocks = y.reshape(lead + (n // (2 * half), 2, half))
        even = blocks[..., 0, :]
        odd = blocks[..., 1, :] * _twiddles(half)
        y = np.stack((even + odd, even - odd), axis=-2).reshape(lead + (n,))
        half *= 2
    return y


def ifft(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.complex128)
    return np.conj(fft(np.conj(x))) / x.shape[-1]


@lru_cache(maxsize=None)
def _rfft_factors(n: int) -> np.ndarray:
    return np.exp(-2j * np.pi * np.arange(n // 2 + 1) / n)


def rfft(x: np.ndarray) -> np.ndarray:
    """One-sided DFT of a real signal: bins 0..M/2 along the last axis."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    if n < 2 or not is_power_of_two(n):
        raise ConfigError(f"rfft length must be a power of two >= 2, got {n}")
    half = n // 2
    z = fft(x[..., 0::2] + 1j * x[..., 1::2])
    # extend Z periodically so index half wraps to 0
    zk = np.concatenate((z, z[..., :1]), axis=-1)
    zc = np.conj(zk[..., ::-1])  # conj(Z[half - k])
    even = 0.5 * (zk + zc)
    odd = -0.5j * (zk - zc)
    return even + _rfft_factors(n) * odd


def irfft(spec: np.ndarray, n: int | None = None) -> np.ndarray:
    """Inverse of :func:`rfft`; imaginary parts of DC and Nyquist are ignored."""
    spec = np.asarray(spec, dtype=np.complex128)
    bins = spec.shape[-1]
    if n is None:
        n = 2 * (bins - 1)
    if n != 2 * (bins - 1) or not is_power_of_two(n):
        raise ConfigError(f"irfft: {bins} bins do not describe a power-of-two length {n}")
    half = n // 2
    spec = spec.copy()
    spec[..., 0] = spec[..., 0].real
    spec[..., -1] = spec[..., -1].real
    rev = np.conj(spec[..., ::-1])  # conj(X[half - k])
    even = 0.5 * (spec + rev)
    odd = 0.5 * (spec - rev) * np.conj(_rfft_factors(n))
    z = (even + 1j * odd)[..., :half]
    t = ifft(z)
    out = np.empty(spec.shape[:-1] + (n,))
    out[..., 0::2] = t.real
    out[..., 1::2] = t.imag
    return out
