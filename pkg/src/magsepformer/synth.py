"""Synthetic speech-like and noise signals for toy training and smoke tests.

The "speech" is a stack of 3-8 harmonics of a slowly drifting f0 with a slow
amplitude envelope; the "noise" is white noise through a random stable
second-order filter. Both have spectral structure a magnitude mask can use.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .dsp import DEFAULT_SAMPLE_RATE, noise_gain
from .errors import ConfigError

SNR_GRID_DB = (-10.0, -5.0, 0.0, 5.0, 10.0, 15.0)


def harmonic_speech(rng: np.random.Generator, n_samples: int,
                    sample_rate: int = DEFAULT_SAMPLE_RATE) -> np.ndarray:
    t = np.arange(n_samples) / sample_rate
    f0 = rng.uniform(80.0, 300.0)
    n_harm = int(rng.integers(3, 9))
    # pitch drift of a few percent and a 2-6 Hz syllable-rate envelope
    drift = 1.0 + 0.05 * np.sin(2 * np.pi * rng.uniform(0.2, 1.0) * t + rng.uniform(0, 2 * np.pi))
    phase = 2 * np.pi * np.cumsum(f0 * drift) / sample_rate
    envelope = 0.6 + 0.4 * np.sin(2 * np.pi * rng.uniform(2.0, 6.0) * t + rng.uniform(0, 2 * np.pi))
    out = np.zeros(n_samples)
    for k in range(1, n_harm + 1):
        if k * f0 * 1.05 >= sample_rate / 2:
            break
        out += rng.uniform(0.3, 1.0) / k * np.sin(k * phase + rng.uniform(0, 2 * np.pi))
    out *= envelope
    return 0.5 * out / np.max(np.abs(out))


def filtered_noise(rng: np.random.Generator, n_samples: int) -> np.ndarray:
    radius = rng.uniform(0.3, 0.95)
    angle = rng.uniform(0.0, np.pi)
    a = [1.0, -2.0 * radius * np.cos(angle), radius * radius]
    y = lfilter([1.0], a, rng.standard_normal(n_samples))
    return 0.5 * y / np.max(np.abs(y))


@dataclass(frozen=True)
class SyntheticPair:
    clean: np.ndarray
    noise: np.ndarray  # already scaled so that clean + noise has the target SNR
    mixture: np.ndarray
    snr_db: float
    seed: int


def make_pair(seed: int, seconds: float, snr_db: float,
              sample_rate: int = DEFAULT_SAMPLE_RATE) -> SyntheticPair:
    n = int(round(seconds * sample_rate))
    if n < 1:
        raise ConfigError("pair length must be at least one sample")
    rng = np.random.default_rng(seed)
    clean = harmonic_speech(rng, n, sample_rate)
    noise = filtered_noise(rng, n)
    noise = noise * noise_gain(clean, noise, snr_db)
    mixture = clean + noise
    # common rescale keeps all three tracks inside PCM range without changing the SNR
    scale = 0.9 / max(np.max(np.abs(mixture)), np.max(np.abs(clean)), np.max(np.abs(noise)))
    clean, noise, mixture = clean * scale, noise * scale, mixture * scale
    return SyntheticPair(clean, noise, mixture, float(snr_db), seed)


def pair_seeds(seed: int, n_pairs: int) -> list[int]:
    """Independent per-pair seeds derived from one master seed."""
    children = np.random.SeedSequence(seed).spawn(n_pairs)
    return [int(c.generate_state(1)[0]) for c in children]


def make_dataset(seed: int, n_pairs: int, seconds: float,
                 snr_grid=SNR_GRID_DB) -> list[SyntheticPair]:
    if not len(snr_grid):
        raise ConfigError("SNR grid must not be empty")
    if n_pairs < 1:
        raise ConfigError("need at least one pair")
    return [make_pair(s, seconds, snr_grid[i % len(snr_grid)])
            for i, s in enumerate(pair_seeds(seed, n_pairs))]
