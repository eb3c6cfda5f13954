"""Magnitude-STFT and learned-encoder speech enhancement with a dual-path transformer masker.

The package is numpy-only at its core: a small reverse-mode tape
(:mod:`.tensor`), a radix-2 FFT and STFT (:mod:`.fft`, :mod:`.dsp`), transformer
layers (:mod:`.nn`), the dual-path masker (:mod:`.masker`), the end-to-end
model (:mod:`.pipeline`), an analytic MAC model (:mod:`.complexity`) and a
measurement harness (:mod:`.profiler`).
"""

from .complexity import ConfigDescriptor, MacBreakdown, count_macs, optimal_chunk, reduction_factor
from .dsp import AudioBuffer, ComplexSpectrogram, WindowSpec, frame_count, istft, stft
from .errors import (
    CheckpointError,
    ConfigError,
    ContractError,
    DegenerateInputError,
    InputTooShortError,
    MagSepError,
    ShapeError,
)
from .masker import MaskerConfig, SepFormerParams, masker_forward
from .pipeline import (
    EnhancementModel,
    ModelConfig,
    enhance,
    load_checkpoint,
    parameter_count,
    save_checkpoint,
    si_sdr,
    si_sdr_loss,
)
from .tensor import Tape, Tensor

__version__ = "0.1.0"
