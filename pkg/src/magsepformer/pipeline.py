"""Encoder -> masker -> decoder enhancement model.

Two encoder kinds are supported:

``stft_mag``
    ``w = |STFT(x)|``; the decoder multiplies the masked magnitude with the
    noisy phase and inverts the STFT.
``learned``
    ``w = ReLU(Conv1d(x))``; the decoder is a transposed convolution.
"""

from __future__ import annotations

import dataclasses
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .dsp import (
    DEFAULT_SAMPLE_RATE,
    AudioBuffer,
    WindowSpec,
    frame_count,
    istft_tensor,
    mag_phase_split,
    stft,
)
from .errors import CheckpointError, ConfigError, ContractError, DegenerateInputError, ShapeError
from .masker import MaskerConfig, SepFormerParams, masker_forward
from .nn import Conv1d, ConvTranspose1d, Module
from .tensor import Tensor

ENCODERS = ("stft_mag", "learned")
SI_SDR_CAP_DB = 100.0
DEFAULT_SEED = 17


@dataclass(frozen=True)
class ModelConfig:
    encoder: str = "stft_mag"
    frame: int = 512
    hop: int = 128
    n_filters: int = 256
    sample_rate: int = DEFAULT_SAMPLE_RATE
    masker: MaskerConfig = field(default_factory=MaskerConfig)

    def __post_init__(self):
        if self.encoder not in ENCODERS:
            raise ConfigError(f"encoder must be one of {ENCODERS}, got {self.encoder!r}")
        if not 0 < self.hop <= self.frame:
            raise ConfigError(f"hop must satisfy 0 < H <= M, got H={self.hop}, M={self.frame}")
        if self.sample_rate <= 0:
            raise ConfigError("sample_rate must be positive")
        if self.encoder == "stft_mag":
            WindowSpec(self.frame, self.hop)  # validates even length
            if self.frame & (self.frame - 1):
                raise ConfigError(f"STFT frame must be a power of two, got {self.frame}")

    @classmethod
    def learned(cls, chunk: int = 250, frame: int = 32, hop: int = 16, **masker) -> "ModelConfig":
        return cls("learned", frame, hop, masker=MaskerConfig(chunk_size=chunk, **masker))

    @classmethod
    def stft(cls, chunk: int = 50, frame: int = 512, hop: int = 128, **masker) -> "ModelConfig":
        return cls("stft_mag", frame, hop, masker=MaskerConfig(chunk_size=chunk, **masker))

    @property
    def chunk(self) -> int:
        return self.masker.chunk_size

    @property
    def n_features(self) -> int:
        return self.frame // 2 + 1 if self.encoder == "stft_mag" else self.n_filters

    @property
    def window(self) -> WindowSpec:
        return WindowSpec(self.frame, self.hop)

    @property
    def label(self) -> str:
        kind = "stft" if self.encoder == "stft_mag" else "learned"
        return f"{kind}-M{self.frame}-H{self.hop}-C{self.chunk}"

    def n_frames(self, n_samples: int) -> int:
        return frame_count(n_samples, self.frame, self.hop)

    def replace(self, **changes) -> "ModelConfig":
        masker = {k: changes.pop(k) for k in list(changes) if k in _MASKER_FIELDS}
        cfg = dataclasses.replace(self, **changes)
        if masker:
            cfg = dataclasses.replace(cfg, masker=dataclasses.replace(cfg.masker, **masker))
        return cfg


_MASKER_FIELDS = {f.name for f in dataclasses.fields(MaskerConfig)}

# flat config-file key -> (ModelConfig/MaskerConfig field, parser)
_CONFIG_KEYS = {
    "encoder": ("encoder", str),
    "frame": ("frame", int),
    "hop": ("hop", int),
    "filters": ("n_filters", int),
    "sample_rate": ("sample_rate", int),
    "chunk": ("chunk_size", int),
    "repeats": ("repeats", int),
    "k_intra": ("k_intra", int),
    "k_inter": ("k_inter", int),
    "d_model": ("d_model", int),
    "d_ff": ("d_ff", int),
    "heads": ("n_heads", int),
    "positional_encoding": ("positional_encoding", lambda v: _parse_bool(v)),
    "norm_eps": ("norm_eps", float),
}


def _parse_bool(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {value!r}")


def config_to_text(config: ModelConfig) -> str:
    lines = []
    for key, (attr, _) in _CONFIG_KEYS.items():
        source = config.masker if attr in _MASKER_FIELDS else config
        value = getattr(source, attr)
        if isinstance(value, bool):
            value = str(value).lower()
        lines.append(f"{key} = {value!r}" if isinstance(value, float) else f"{key} = {value}")
    return "\n".join(lines) + "\n"


def parse_config_text(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for number, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {number}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values


def apply_overrides(config: ModelConfig, overrides: dict[str, str]) -> ModelConfig:
    changes = {}
    for key, raw in overrides.items():
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"unknown config key {key!r}; known: {', '.join(_CONFIG_KEYS)}")
        attr, parse = _CONFIG_KEYS[key]
        try:
            changes[attr] = parse(raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return config.replace(**changes)


def config_from_text(text: str, base: ModelConfig | None = None) -> ModelConfig:
    return apply_overrides(base or ModelConfig(), parse_config_text(text))


# -- model -------------------------------------------------------------------


class EnhancementModel(Module):
    def __init__(self, config: ModelConfig, seed: int = DEFAULT_SEED):
        self.config = config
        rng = np.random.default_rng(seed)
        if config.encoder == "learned":
            self.encoder = Conv1d(config.n_filters, config.frame, config.hop, rng)
            self.decoder = ConvTranspose1d(config.n_filters, config.frame, config.hop, rng)
        else:
            self.encoder = None
            self.decoder = None
        self.masker = SepFormerParams(config.masker, config.n_features, rng)

    def __call__(self, x, unit_mask: bool = False) -> Tensor:
        return enhance(self, x, unit_mask=unit_mask)


def _audio(x) -> np.ndarray:
    if isinstance(x, AudioBuffer):
        return x.samples
    return np.asarray(x, dtype=np.float64)


def encode(x, model: EnhancementModel) -> tuple[Tensor, np.ndarray | None]:
    """Return nonnegative features (F, L) and, for the STFT path, the noisy phase."""
    cfg = model.config
    samples = _audio(x)
    cfg.n_frames(len(samples))  # raises on too-short input
    if cfg.encoder == "stft_mag":
        split = mag_phase_split(stft(samples, cfg.window))
        return Tensor(split.magnitude), split.phase
    with T.mac_stage("encoder"):
        return T.relu(model.encoder(Tensor(samples))), None


def apply_mask(m: Tensor, w: Tensor) -> Tensor:
    if m.shape != w.shape:
        raise ShapeError(f"mask {m.shape} and features {w.shape} differ")
    return T.mul(m, w)


def decode(d: Tensor, side: np.ndarray | None, model: EnhancementModel, out_len: int) -> Tensor:
    cfg = model.config
    if cfg.encoder == "stft_mag":
        if side is None:
            raise ContractError("the STFT decoder needs the noisy phase")
        return istft_tensor(d, side, cfg.window, out_len)
    if side is not None:
        raise ContractError("the learned decoder takes no phase")
    with T.mac_stage("decoder"):
        return T.crop_or_pad(model.decoder(d), out_len)


def enhance(model: EnhancementModel, x, unit_mask: bool = False) -> Tensor:
    """Time-domain estimate with the same length as ``x``.

    ``unit_mask`` bypasses the masker with m = 1, leaving only encoder and decoder.
    """
    samples = _audio(x)
    w, side = encode(samples, model)
    if unit_mask:
        m = Tensor(np.ones(w.shape))
    else:
        m = masker_forward(w, model.masker)
    return decode(apply_mask(m, w), side, model, len(samples))


def parameter_count(model: Module) -> int:
    return model.parameter_count()


# -- SI-SDR --------------------------------------------------------------------


def _check_pair(est: np.ndarray, ref: np.ndarray) -> None:
    if est.shape != ref.shape:
        raise ShapeError(f"estimate {est.shape} and reference {ref.shape} differ")
    if not np.any(ref):
        raise DegenerateInputError("reference signal is all zeros")


def si_sdr(est, ref) -> float:
    """Scale-invariant SDR in dB, capped at +100 dB."""
    est, ref = _audio(est), _audio(ref)
    _check_pair(est, ref)
    alpha = (est @ ref) / (ref @ ref)
    target = alpha * ref
    resid = target - est
    num, den = target @ target, resid @ resid
    if den == 0.0 or num >= den * 10.0 ** (SI_SDR_CAP_DB / 10.0):
        return SI_SDR_CAP_DB
    if num == 0.0:
        return -np.inf
    return float(10.0 * np.log10(num / den))


def si_sdr_loss(est: Tensor, ref) -> Tensor:
    """Negative SI-SDR of ``est`` against the constant ``ref``; -100 at the cap."""
    ref = _audio(ref)
    _check_pair(est.data, ref)
    if si_sdr(est.data, ref) >= SI_SDR_CAP_DB:
        return Tensor(-SI_SDR_CAP_DB)
    alpha = T.tsum(T.mul(est, ref)) * (1.0 / float(ref @ ref))
    target = T.mul(alpha, ref)
    resid = T.sub(target, est)
    ratio = T.log(T.tsum(T.mul(target, target))) - T.log(T.tsum(T.mul(resid, resid)))
    return ratio * (-10.0 / np.log(10.0))


# -- checkpoints -----------------------------------------------------------------

MAGIC = b"MSFCKPT\x00"
VERSION = 1


def save_checkpoint(model: EnhancementModel, path) -> None:
    """Write config and parameters: magic, version, config text, then named float64 blobs."""
    config = config_to_text(model.config).encode("utf-8")
    params = list(model.named_parameters())
    chunks = [MAGIC, struct.pack("<II", VERSION, len(config)), config,
              struct.pack("<I", len(params))]
    for name, p in params:
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", p.ndim))
        chunks.append(struct.pack(f"<{p.ndim}I", *p.shape))
        chunks.append(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


class _Reader:
    def __init__(self, blob: bytes):
        self.blob, self.pos = blob, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointError("checkpoint is truncated")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path, expected: ModelConfig | None = None) -> EnhancementModel:
    reader = _Reader(Path(path).read_bytes())
    if reader.take(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"{path}: not a model checkpoint")
    version, config_len = reader.unpack("<II")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    config = config_from_text(reader.take(config_len).decode("utf-8"))
    if expected is not None and expected != config:
        raise CheckpointError(f"{path}: checkpoint config does not match the requested config")
    model = EnhancementModel(config)
    params = dict(model.named_parameters())
    (count,) = reader.unpack("<I")
    if count != len(params):
        raise CheckpointError(f"{path}: {count} tensors stored, model has {len(params)}")
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        (ndim,) = reader.unpack("<B")
        shape = reader.unpack(f"<{ndim}I")
        if name not in params or params[name].shape != tuple(shape):
            raise CheckpointError(f"{path}: unexpected tensor {name} {tuple(shape)}")
        n = int(np.prod(shape, dtype=np.int64))
        data = np.frombuffer(reader.take(8 * n), dtype="<f8").reshape(shape)
        params[name].data = data.astype(np.float64)
    if reader.pos != len(reader.blob):
        raise CheckpointError(f"{path}: trailing bytes after last tensor")
    return model
