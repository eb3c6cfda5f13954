"""16-bit PCM mono WAV reading and writing."""

from __future__ import annotations

import wave
from pathlib import Path

import numpy as np

from .dsp import DEFAULT_SAMPLE_RATE, AudioBuffer
from .errors import MagSepError

PCM_SCALE = 32768.0


class WavError(MagSepError):
    pass


def float_to_pcm16(x: np.ndarray) -> np.ndarray:
    """Clip to [-1, 1), scale by 32768 and round half to even."""
    x = np.asarray(x, dtype=np.float64)
    clipped = np.clip(x, -1.0, 32767.0 / PCM_SCALE)
    return np.rint(clipped * PCM_SCALE).astype("<i2")


def pcm16_to_float(pcm: np.ndarray) -> np.ndarray:
    return np.asarray(pcm, dtype=np.float64) / PCM_SCALE


def write_pcm(path, pcm: np.ndarray, sample_rate: int = DEFAULT_SAMPLE_RATE) -> None:
    pcm = np.asarray(pcm)
    if pcm.ndim != 1:
        raise WavError(f"only mono audio is supported, got shape {pcm.shape}")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(sample_rate)
        fh.writeframes(pcm.astype("<i2").tobytes())


def write_wav(path, audio, sample_rate: int | None = None) -> None:
    if isinstance(audio, AudioBuffer):
        sample_rate = sample_rate or audio.sample_rate
        audio = audio.samples
    write_pcm(path, float_to_pcm16(audio), sample_rate or DEFAULT_SAMPLE_RATE)


def read_pcm(path) -> tuple[np.ndarray, int]:
    try:
        with wave.open(str(path), "rb") as fh:
            if fh.getnchannels() != 1:
                raise WavError(f"{path}: expected mono, found {fh.getnchannels()} channels")
            if fh.getsampwidth() != 2:
                raise WavError(f"{path}: expected 16-bit PCM, found {8 * fh.getsampwidth()}-bit")
            rate = fh.getframerate()
            n = fh.getnframes()
            raw = fh.readframes(n)
    except (wave.Error, EOFError) as exc:
        raise WavError(f"{path}: not a valid WAV file ({exc})") from exc
    except FileNotFoundError as exc:
        raise WavError(f"{path}: no such file") from exc
    if len(raw) != 2 * n:
        raise WavError(f"{path}: header promises {n} frames, data holds {len(raw) // 2}")
    return np.frombuffer(raw, dtype="<i2").copy(), rate


def read_wav(path, expect_rate: int | None = DEFAULT_SAMPLE_RATE) -> AudioBuffer:
    pcm, rate = read_pcm(path)
    if expect_rate is not None and rate != expect_rate:
        raise WavError(f"{Path(path)}: sample rate {rate} Hz, expected {expect_rate} Hz")
    return AudioBuffer(pcm16_to_float(pcm), rate)
